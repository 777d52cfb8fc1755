//! Forward and inverse spherical-harmonic transforms and the ladder-operator
//! action of the rotational vector fields on coefficient vectors.
//!
//! Coefficients are stored as a flat complex vector of length `(L+1)^2`,
//! row-major in `(l, m)` with `m` running over `-l ..= l`; real fields keep
//! the Hermitian symmetry `a_{l,-m} = (-1)^m conj(a_{lm})` automatically.

use ndarray::Array2;
use num_complex::Complex64;

use super::grid::{coeff_index, Grid};

/// Analysis: values on the grid -> spherical-harmonic coefficients
/// `a_{lm} = integral f conj(Y_{lm}) dOmega` for all `l <= L`.
pub fn analyze(grid: &Grid, values: &Array2<f64>) -> Vec<Complex64> {
    let (n_lat, n_lon) = grid.shape();
    let l_max = grid.bandlimit();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.spec().n_coeffs()];
    let mut row = vec![Complex64::new(0.0, 0.0); n_lon];
    // Ring FFTs, then a weighted Legendre contraction per order m.
    let mut ring_modes: Vec<Vec<Complex64>> = Vec::with_capacity(n_lat);
    for i in 0..n_lat {
        for j in 0..n_lon {
            row[j] = Complex64::new(values[[i, j]], 0.0);
        }
        grid.fft_forward(&mut row);
        ring_modes.push(row.clone());
    }
    for m in -(l_max as i64)..=(l_max as i64) {
        let m_abs = m.unsigned_abs() as usize;
        // Condon–Shortley: Pbar_{l,-m} = (-1)^m Pbar_{lm}.
        let parity = if m < 0 && m_abs % 2 == 1 { -1.0 } else { 1.0 };
        let k = m.rem_euclid(n_lon as i64) as usize;
        for i in 0..n_lat {
            let w = grid.node_weight(i);
            let f_m = ring_modes[i][k] * w;
            let plm = grid.plm_ring(i);
            for l in m_abs..=l_max {
                let p = parity * plm[l * (l + 1) / 2 + m_abs];
                coeffs[coeff_index(l, m)] += f_m * p;
            }
        }
    }
    coeffs
}

/// Synthesis: coefficients -> real values on the grid,
/// `f(x) = sum a_{lm} Y_{lm}(x)` (imaginary residue of a non-Hermitian input
/// is discarded).
pub fn synthesize(grid: &Grid, coeffs: &[Complex64]) -> Array2<f64> {
    let (n_lat, n_lon) = grid.shape();
    let l_max = grid.bandlimit();
    let mut values = Array2::zeros((n_lat, n_lon));
    let mut row = vec![Complex64::new(0.0, 0.0); n_lon];
    for i in 0..n_lat {
        row.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let plm = grid.plm_ring(i);
        for m in -(l_max as i64)..=(l_max as i64) {
            let m_abs = m.unsigned_abs() as usize;
            let parity = if m < 0 && m_abs % 2 == 1 { -1.0 } else { 1.0 };
            let mut g = Complex64::new(0.0, 0.0);
            for l in m_abs..=l_max {
                g += coeffs[coeff_index(l, m)] * (parity * plm[l * (l + 1) / 2 + m_abs]);
            }
            row[m.rem_euclid(n_lon as i64) as usize] += g;
        }
        grid.fft_inverse(&mut row);
        for j in 0..n_lon {
            values[[i, j]] = row[j].re;
        }
    }
    values
}

/// Ladder coefficient `c_+(l, m)` with `L_+ Y_{lm} = c_+(l,m) Y_{l,m+1}`.
#[inline]
fn ladder_up(l: usize, m: i64) -> f64 {
    let lf = l as f64;
    let mf = m as f64;
    (lf * (lf + 1.0) - mf * (mf + 1.0)).max(0.0).sqrt()
}

/// Ladder coefficient `c_-(l, m)` with `L_- Y_{lm} = c_-(l,m) Y_{l,m-1}`.
#[inline]
fn ladder_down(l: usize, m: i64) -> f64 {
    let lf = l as f64;
    let mf = m as f64;
    (lf * (lf + 1.0) - mf * (mf - 1.0)).max(0.0).sqrt()
}

/// Action of the rotational vector field `R_axis` on a coefficient vector.
///
/// `R_3 = d/dphi` and `R_1, R_2` complete the algebra
/// `[R_i, R_j] = -eps_{ijk} R_k`; on the generators of rotations this gives
/// `R_i x_j = -eps_{ijk} x_k`.
pub fn rot_coeffs(l_max: usize, coeffs: &[Complex64], axis: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); coeffs.len()];
    let i_unit = Complex64::new(0.0, 1.0);
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let idx = coeff_index(l, m);
            match axis {
                2 => {
                    // R_3 f has coefficients i m a_{lm}.
                    out[idx] = i_unit * (m as f64) * coeffs[idx];
                }
                0 | 1 => {
                    // R_1 = i (L_+ + L_-)/2, R_2 = (L_+ - L_-)/2.
                    let up = if m - 1 >= -(l as i64) {
                        coeffs[coeff_index(l, m - 1)] * ladder_up(l, m - 1)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let down = if m + 1 <= l as i64 {
                        coeffs[coeff_index(l, m + 1)] * ladder_down(l, m + 1)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    out[idx] = if axis == 0 {
                        i_unit * 0.5 * (up + down)
                    } else {
                        0.5 * (up - down)
                    };
                }
                _ => unreachable!("axis validated by caller"),
            }
        }
    }
    out
}

/// Multiply each degree-`l` band by `factor(l)` (spectral multiplier).
pub fn apply_multiplier(l_max: usize, coeffs: &[Complex64], factor: impl Fn(usize) -> f64) -> Vec<Complex64> {
    let mut out = coeffs.to_vec();
    for l in 0..=l_max {
        let f = factor(l);
        for m in -(l as i64)..=(l as i64) {
            out[coeff_index(l, m)] *= f;
        }
    }
    out
}
