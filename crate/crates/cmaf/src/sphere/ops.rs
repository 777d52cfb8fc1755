//! Differential and integral calculus on the sphere in the rotational frame.
//!
//! All derivatives reduce to the three rotation generators `R_i`, applied
//! spectrally, plus pointwise frame corrections.  For a covector `w` the
//! round covariant derivative reads
//!
//! ```text
//! (D_a w)_b = R_a w_b + sum_{k,l} eps_{akl} x_b x_k w_l ,
//! ```
//!
//! with one such correction per lower index (sign flipped for upper
//! indices).  Operators of a variable leaf metric are obtained from the
//! round ones through the Christoffel difference tensor.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;

use super::field::{CovectorField, ScalarField, SymTensor2Field};
use super::grid::Grid;
use super::transform::{apply_multiplier, rot_coeffs};
use crate::error::{Error, Result};

/// Levi-Civita symbol.
#[inline]
pub fn eps(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Rotational components of the round area form, `eps_{ab} = sum_k x_k
/// eps_{kab}`, at a node with unit normal `x`.
#[inline]
pub fn eps_round(x: Vector3<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            for k in 0..3 {
                m[(a, b)] += x[k] * eps(k, a, b);
            }
        }
    }
    m
}

/// Derivative along the rotation generator `R_axis` (axis in 0..3).
pub fn rot_derivative(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    if axis > 2 {
        return Err(Error::InvalidAxis(axis));
    }
    let grid = f.grid();
    let coeffs = rot_coeffs(grid.bandlimit(), f.coeffs(), axis);
    Ok(ScalarField::from_coeffs(grid, coeffs))
}

/// Differential of a scalar as a covector field, `(df)_i = R_i f`.
pub fn grad(f: &ScalarField) -> CovectorField {
    let grid = f.grid();
    let comps = std::array::from_fn(|i| {
        ScalarField::from_coeffs(grid, rot_coeffs(grid.bandlimit(), f.coeffs(), i))
            .values()
            .clone()
    });
    CovectorField::from_comps(grid, comps)
}

/// Laplace–Beltrami operator of the unit round sphere, `sum_i R_i R_i`.
pub fn round_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let coeffs = apply_multiplier(grid.bandlimit(), f.coeffs(), |l| {
        -((l * (l + 1)) as f64)
    });
    ScalarField::from_coeffs(grid, coeffs)
}

/// Inverse of the round Laplacian on mean-free input (the `l = 0` mode of
/// the input is dropped; the output is mean-free).
pub fn round_laplacian_inverse(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let coeffs = apply_multiplier(grid.bandlimit(), f.coeffs(), |l| {
        if l == 0 {
            0.0
        } else {
            -1.0 / ((l * (l + 1)) as f64)
        }
    });
    ScalarField::from_coeffs(grid, coeffs)
}

/// 3 x 3 array of value grids; entry `[a][b]` holds `(D_a w)_b`-type data.
pub type Comp3x3 = [[Array2<f64>; 3]; 3];

/// Round covariant derivative of a covector, `(D_a w)_b`.
pub fn cov_deriv_covector(w: &CovectorField) -> Comp3x3 {
    let grid = w.grid();
    let (n_lat, n_lon) = grid.shape();
    // Spectral derivatives of the three components.
    let mut d: Comp3x3 = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let fb = w.comp_field(b);
            ScalarField::from_coeffs(grid, rot_coeffs(grid.bandlimit(), fb.coeffs(), a))
                .values()
                .clone()
        })
    });
    // Pointwise frame correction.
    for i in 0..n_lat {
        for j in 0..n_lon {
            let x = grid.unit_normal(i, j);
            let wv = w.vector(i, j);
            for a in 0..3 {
                for b in 0..3 {
                    let mut corr = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            corr += eps(a, k, l) * x[b] * x[k] * wv[l];
                        }
                    }
                    d[a][b][[i, j]] += corr;
                }
            }
        }
    }
    d
}

/// Round covariant derivative of a symmetric 2-tensor, `(D_a T)_{bc}`
/// indexed `[a][b * 3 + c]`.
pub fn cov_deriv_symtensor(t: &SymTensor2Field) -> Vec<Array2<f64>> {
    let grid = t.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(27);
    for a in 0..3 {
        // Spectral part: R_a applied to each distinct component.
        let mut slot_derivs: Vec<Array2<f64>> = Vec::with_capacity(6);
        for s in 0..6 {
            let fs = ScalarField::from_values(grid, t.slot(s).clone());
            slot_derivs.push(
                ScalarField::from_coeffs(grid, rot_coeffs(grid.bandlimit(), fs.coeffs(), a))
                    .values()
                    .clone(),
            );
        }
        let slot = |b: usize, c: usize| -> usize {
            const S: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
            S[b][c]
        };
        for b in 0..3 {
            for c in 0..3 {
                let mut arr = slot_derivs[slot(b, c)].clone();
                for i in 0..n_lat {
                    for j in 0..n_lon {
                        let x = grid.unit_normal(i, j);
                        let tm = t.matrix(i, j);
                        let mut corr = 0.0;
                        for k in 0..3 {
                            for l in 0..3 {
                                corr += eps(a, k, l) * x[k] * (x[b] * tm[(l, c)] + x[c] * tm[(b, l)]);
                            }
                        }
                        arr[[i, j]] += corr;
                    }
                }
                out.push(arr);
            }
        }
    }
    out
}

/// Round divergence of a covector, `sum_a R_a w_a` (frame corrections cancel
/// in the trace).
pub fn div_round(w: &CovectorField) -> ScalarField {
    let grid = w.grid();
    let mut acc = ScalarField::zeros(grid);
    for a in 0..3 {
        let fa = w.comp_field(a);
        let da = ScalarField::from_coeffs(grid, rot_coeffs(grid.bandlimit(), fa.coeffs(), a));
        acc = acc.add(&da);
    }
    acc
}

/// Round curl of a covector, `eps^{ab} D_a w_b` (frame corrections cancel).
pub fn curl_round(w: &CovectorField) -> ScalarField {
    let grid = w.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut d: Vec<Array2<f64>> = Vec::with_capacity(9);
    for a in 0..3 {
        for b in 0..3 {
            let fb = w.comp_field(b);
            d.push(
                ScalarField::from_coeffs(grid, rot_coeffs(grid.bandlimit(), fb.coeffs(), a))
                    .values()
                    .clone(),
            );
        }
    }
    let mut values = Array2::zeros((n_lat, n_lon));
    for i in 0..n_lat {
        for j in 0..n_lon {
            let x = grid.unit_normal(i, j);
            let mut acc = 0.0;
            for k in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        let e = eps(k, a, b);
                        if e != 0.0 {
                            acc += x[k] * e * d[a * 3 + b][[i, j]];
                        }
                    }
                }
            }
            values[[i, j]] = acc;
        }
    }
    ScalarField::from_values(grid, values)
}

/// Round Hessian `(D^2 f)_{ab} = R_a R_b f + eps_{akl} x_b x_k R_l f`,
/// symmetrized.
pub fn hessian_round(f: &ScalarField) -> SymTensor2Field {
    let d = cov_deriv_covector(&grad(f));
    let grid = f.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut out = SymTensor2Field::zeros(grid);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let mut m = Matrix3::zeros();
            for a in 0..3 {
                for b in 0..3 {
                    m[(a, b)] = d[a][b][[i, j]];
                }
            }
            out.set_matrix(i, j, m);
        }
    }
    out
}

/// All metric-dependent operators of one leaf metric, with the inverse,
/// area density and Christoffel difference tensor precomputed.
pub struct MetricOps {
    grid: Grid,
    metric: SymTensor2Field,
    inverse: SymTensor2Field,
    /// Relative area density `rho` with `dvol_g = sqrt(rho) dOmega`.
    density: ScalarField,
    sqrt_density: ScalarField,
    /// Raised Christoffel difference `delta^d_{ab}`, indexed `d * 9 + a * 3 + b`.
    /// Built lazily: purely algebraic operators (traces, Laplacians in
    /// divergence form, quadrature) never need it.
    delta: std::sync::OnceLock<Vec<Array2<f64>>>,
}

impl MetricOps {
    pub fn new(metric: &SymTensor2Field) -> Result<MetricOps> {
        let grid = metric.grid().clone();
        let (n_lat, n_lon) = grid.shape();
        let mut inverse = SymTensor2Field::zeros(&grid);
        let mut density = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let g = pi * metric.matrix(i, j) * pi;
                let aug = g + x * x.transpose();
                let det = aug.determinant();
                if !(det > 0.0) {
                    return Err(Error::DegenerateMetric(format!(
                        "area density {det:.3e} at node ({i},{j})"
                    )));
                }
                // Positive definiteness of the tangential part via Cholesky
                // of the augmented matrix.
                let chol = nalgebra::Cholesky::new(aug).ok_or_else(|| {
                    Error::DegenerateMetric(format!("metric not positive definite at ({i},{j})"))
                })?;
                let inv = chol.inverse() - x * x.transpose();
                inverse.set_matrix(i, j, inv);
                density[[i, j]] = det;
            }
        }
        let density = ScalarField::from_values(&grid, density);
        let sqrt_density = density.map(f64::sqrt);

        Ok(MetricOps {
            grid,
            metric: metric.clone(),
            inverse,
            density,
            sqrt_density,
            delta: std::sync::OnceLock::new(),
        })
    }

    /// Christoffel difference table, built on first use: lower it from the
    /// covariant derivative of the metric, then raise the first index.
    fn delta_table(&self) -> &Vec<Array2<f64>> {
        self.delta.get_or_init(|| {
            let (n_lat, n_lon) = self.grid.shape();
            let dg = cov_deriv_symtensor(&self.metric);
            let at = |a: usize, b: usize, c: usize| &dg[a * 9 + b * 3 + c];
            let mut delta: Vec<Array2<f64>> = vec![Array2::zeros((n_lat, n_lon)); 27];
            for i in 0..n_lat {
                for j in 0..n_lon {
                    let ginv = self.inverse.matrix(i, j);
                    let mut lower = [[[0.0_f64; 3]; 3]; 3];
                    for d in 0..3 {
                        for a in 0..3 {
                            for b in 0..3 {
                                lower[d][a][b] = 0.5
                                    * (at(a, b, d)[[i, j]] + at(b, a, d)[[i, j]]
                                        - at(d, a, b)[[i, j]]);
                            }
                        }
                    }
                    for d in 0..3 {
                        for a in 0..3 {
                            for b in 0..3 {
                                let mut acc = 0.0;
                                for e in 0..3 {
                                    acc += ginv[(d, e)] * lower[e][a][b];
                                }
                                delta[d * 9 + a * 3 + b][[i, j]] = acc;
                            }
                        }
                    }
                }
            }
            delta
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn metric(&self) -> &SymTensor2Field {
        &self.metric
    }

    pub fn inverse(&self) -> &SymTensor2Field {
        &self.inverse
    }

    /// `sqrt(rho)` with `dvol_g = sqrt(rho) dOmega`.
    pub fn sqrt_density(&self) -> &ScalarField {
        &self.sqrt_density
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    #[inline]
    pub fn delta_coeff(&self, d: usize, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.delta_table()[d * 9 + a * 3 + b][[i, j]]
    }

    /// Total area `integral dvol_g`.
    pub fn area(&self) -> f64 {
        self.sqrt_density.round_integral()
    }

    /// Area radius `sqrt(area / 4 pi)`.
    pub fn area_radius(&self) -> f64 {
        (self.area() / (4.0 * std::f64::consts::PI)).sqrt()
    }

    /// Integral of a scalar against `dvol_g`.
    pub fn integral(&self, f: &ScalarField) -> f64 {
        f.mul(&self.sqrt_density).round_integral()
    }

    /// Mean against the metric area form.
    pub fn mean(&self, f: &ScalarField) -> f64 {
        self.integral(f) / self.area()
    }

    /// Deviation from the metric mean.
    pub fn oscillation(&self, f: &ScalarField) -> ScalarField {
        f.add_scalar(-self.mean(f))
    }

    /// Raise the index of a covector: contravariant rotational components.
    pub fn raise(&self, w: &CovectorField) -> CovectorField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                out.set_vector(i, j, self.inverse.matrix(i, j) * w.vector(i, j));
            }
        }
        out
    }

    /// Lower the index of a (contravariant) vector field.
    pub fn lower(&self, v: &CovectorField) -> CovectorField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let g = pi * self.metric.matrix(i, j) * pi;
                out.set_vector(i, j, g * v.vector(i, j));
            }
        }
        out
    }

    /// `g(w, v)` for two covectors.
    pub fn dot_cov(&self, w: &CovectorField, v: &CovectorField) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                values[[i, j]] = (self.inverse.matrix(i, j) * v.vector(i, j))
                    .dot(&w.vector(i, j));
            }
        }
        ScalarField::from_values(&self.grid, values)
    }

    /// `|w|_g^2` of a covector.
    pub fn norm_sq_cov(&self, w: &CovectorField) -> ScalarField {
        self.dot_cov(w, w)
    }

    /// Full contraction `g^{ac} g^{bd} T_{ab} S_{cd}`.
    pub fn dot_tensor(&self, t: &SymTensor2Field, s: &SymTensor2Field) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let gi = self.inverse.matrix(i, j);
                let m = gi * t.matrix(i, j) * gi * s.matrix(i, j);
                values[[i, j]] = m.trace();
            }
        }
        ScalarField::from_values(&self.grid, values)
    }

    /// Trace `g^{ab} T_{ab}`.
    pub fn trace(&self, t: &SymTensor2Field) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                values[[i, j]] = (self.inverse.matrix(i, j) * t.matrix(i, j)).trace();
            }
        }
        ScalarField::from_values(&self.grid, values)
    }

    /// Trace-free part `T - (tr T / 2) g` (leaves are 2-dimensional).
    pub fn traceless(&self, t: &SymTensor2Field) -> SymTensor2Field {
        let tr = self.trace(t);
        t.sub(&self.metric.mul_scalar_field(&tr.scale(0.5)))
    }

    /// Contraction `(T . w)_a = T_{ab} g^{bc} w_c`.
    pub fn tensor_dot_cov(&self, t: &SymTensor2Field, w: &CovectorField) -> CovectorField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                out.set_vector(
                    i,
                    j,
                    t.matrix(i, j) * (self.inverse.matrix(i, j) * w.vector(i, j)),
                );
            }
        }
        out
    }

    /// `T(v, v)`-type contraction with both indices raised against `g`:
    /// `T_{ab} g^{ac} g^{bd} w_c v_d`.
    pub fn tensor_bilinear(&self, t: &SymTensor2Field, w: &CovectorField, v: &CovectorField) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let gi = self.inverse.matrix(i, j);
                values[[i, j]] = (t.matrix(i, j) * (gi * v.vector(i, j)))
                    .dot(&(gi * w.vector(i, j)));
            }
        }
        ScalarField::from_values(&self.grid, values)
    }

    /// Metric Hodge star on covectors, `(*w)_a = eps_a{}^b w_b`.
    pub fn hodge_star(&self, w: &CovectorField) -> CovectorField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let e = eps_round(x) * self.sqrt_density.values()[[i, j]];
                out.set_vector(i, j, e * (self.inverse.matrix(i, j) * w.vector(i, j)));
            }
        }
        out
    }

    /// Wedge of two symmetric 2-tensors, `S ^ T = eps^{ab} S_{ac} g^{cd} T_{db}`.
    pub fn wedge(&self, s: &SymTensor2Field, t: &SymTensor2Field) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let gi = self.inverse.matrix(i, j);
                // eps with both indices raised: sqrt(rho) g^{-1} epso g^{-1}.
                let eup = gi * (eps_round(x) * self.sqrt_density.values()[[i, j]]) * gi;
                // eps^{ab} S_{ac} g^{cd} T_{db} = sum_{ab} eup[(a,b)] (S g^{-1} T)[(a,b)]
                let sgt = s.matrix(i, j) * gi * t.matrix(i, j);
                let mut acc = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        acc += eup[(a, b)] * sgt[(a, b)];
                    }
                }
                values[[i, j]] = acc;
            }
        }
        ScalarField::from_values(&self.grid, values)
    }

    /// Laplace–Beltrami of the metric, in divergence form:
    /// `lap f = rho^{-1/2} R_a (sqrt(rho) (g^{-1} df)^a)`.
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.div_cov(&grad(f))
    }

    /// Metric divergence of a covector (index raised internally).
    pub fn div_cov(&self, w: &CovectorField) -> ScalarField {
        let x = self.raise(w).mul_scalar_field(&self.sqrt_density);
        div_round(&x).div(&self.sqrt_density)
    }

    /// Metric curl of a covector, `eps^{ab} D_a w_b = curl_round(w) / sqrt(rho)`.
    pub fn curl_cov(&self, w: &CovectorField) -> ScalarField {
        curl_round(w).div(&self.sqrt_density)
    }

    /// Metric covariant derivative of a covector, `(D_a w)_b - delta^d_{ab} w_d`.
    pub fn cov_deriv_cov(&self, w: &CovectorField) -> Comp3x3 {
        let mut d = cov_deriv_covector(w);
        let (n_lat, n_lon) = self.grid.shape();
        for i in 0..n_lat {
            for j in 0..n_lon {
                let wv = w.vector(i, j);
                for a in 0..3 {
                    for b in 0..3 {
                        let mut corr = 0.0;
                        for e in 0..3 {
                            corr += self.delta_coeff(e, a, b, i, j) * wv[e];
                        }
                        d[a][b][[i, j]] -= corr;
                    }
                }
            }
        }
        d
    }

    /// Symmetrised covariant derivative of a covector, tangentially
    /// projected: `sym (D w)_{ab}`.
    pub fn sym_grad_cov(&self, w: &CovectorField) -> SymTensor2Field {
        let d = self.cov_deriv_cov(w);
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = SymTensor2Field::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let mut m = Matrix3::zeros();
                for a in 0..3 {
                    for b in 0..3 {
                        m[(a, b)] = 0.5 * (d[a][b][[i, j]] + d[b][a][[i, j]]);
                    }
                }
                out.set_matrix(i, j, pi * m * pi);
            }
        }
        out
    }

    /// Metric Hessian of a scalar.
    pub fn hessian(&self, f: &ScalarField) -> SymTensor2Field {
        let d = self.cov_deriv_cov(&grad(f));
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = SymTensor2Field::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let mut m = Matrix3::zeros();
                for a in 0..3 {
                    for b in 0..3 {
                        m[(a, b)] = d[a][b][[i, j]];
                    }
                }
                out.set_matrix(i, j, m);
            }
        }
        out
    }

    /// Metric divergence of a symmetric 2-tensor,
    /// `(div T)_c = g^{ab} (D_a T_{bc} - delta^d_{ab} T_{dc} - delta^d_{ac} T_{bd})`.
    pub fn div_tensor(&self, t: &SymTensor2Field) -> CovectorField {
        let dt = cov_deriv_symtensor(t);
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let gi = self.inverse.matrix(i, j);
                let tm = t.matrix(i, j);
                let mut v = Vector3::zeros();
                for c in 0..3 {
                    let mut acc = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            let w = gi[(a, b)];
                            if w == 0.0 {
                                continue;
                            }
                            let mut term = dt[a * 9 + b * 3 + c][[i, j]];
                            for d in 0..3 {
                                term -= self.delta_coeff(d, a, b, i, j) * tm[(d, c)];
                                term -= self.delta_coeff(d, a, c, i, j) * tm[(b, d)];
                            }
                            acc += w * term;
                        }
                    }
                    v[c] = acc;
                }
                let x = self.grid.unit_normal(i, j);
                out.set_vector(i, j, v - x * x.dot(&v));
            }
        }
        out
    }

    /// Gauss curvature of the leaf metric, from the Ricci identity relating
    /// it to the round metric through the Christoffel difference tensor.
    pub fn gauss_curvature(&self) -> ScalarField {
        let (n_lat, n_lon) = self.grid.shape();
        // Covariant derivatives (round) of the raised difference tensor.
        // grad_a delta^d_{bc}: spectral part plus frame corrections
        // (one upper, two lower indices).
        let mut ddelta: Vec<Array2<f64>> = Vec::with_capacity(81);
        let mut spectral: Vec<[Array2<f64>; 3]> = Vec::with_capacity(27);
        for s in 0..27 {
            let f = ScalarField::from_values(&self.grid, self.delta_table()[s].clone());
            spectral.push(std::array::from_fn(|a| {
                ScalarField::from_coeffs(
                    &self.grid,
                    rot_coeffs(self.grid.bandlimit(), f.coeffs(), a),
                )
                .values()
                .clone()
            }));
        }
        for a in 0..3 {
            for d in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let mut arr = spectral[d * 9 + b * 3 + c][a].clone();
                        for i in 0..n_lat {
                            for j in 0..n_lon {
                                let x = self.grid.unit_normal(i, j);
                                let mut corr = 0.0;
                                for k in 0..3 {
                                    for l in 0..3 {
                                        let e = eps(a, k, l);
                                        if e == 0.0 {
                                            continue;
                                        }
                                        // Lower-index corrections on b and c.
                                        corr += e
                                            * x[k]
                                            * (x[b] * self.delta_coeff(d, l, c, i, j)
                                                + x[c] * self.delta_coeff(d, b, l, i, j));
                                    }
                                }
                                // Upper-index correction: -eps_{a k d'} x_m x_k delta^m_{bc}
                                let mut up = 0.0;
                                for m in 0..3 {
                                    for k in 0..3 {
                                        let e = eps(a, k, d);
                                        if e != 0.0 {
                                            up += e * x[m] * x[k] * self.delta_coeff(m, b, c, i, j);
                                        }
                                    }
                                }
                                arr[[i, j]] += corr - up;
                            }
                        }
                        ddelta.push(arr);
                    }
                }
            }
        }
        let dd = |a: usize, d: usize, b: usize, c: usize, i: usize, j: usize| -> f64 {
            ddelta[a * 27 + d * 9 + b * 3 + c][[i, j]]
        };

        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let gi = self.inverse.matrix(i, j);
                let mut ric = Matrix3::zeros();
                for b in 0..3 {
                    for d in 0..3 {
                        // Round Ricci of the unit sphere is the round metric.
                        let mut acc = pi[(b, d)];
                        for a in 0..3 {
                            acc += dd(a, a, d, b, i, j);
                        }
                        for a in 0..3 {
                            acc -= dd(d, a, a, b, i, j);
                        }
                        for a in 0..3 {
                            for e in 0..3 {
                                acc += self.delta_coeff(a, a, e, i, j)
                                    * self.delta_coeff(e, d, b, i, j);
                                acc -= self.delta_coeff(a, d, e, i, j)
                                    * self.delta_coeff(e, a, b, i, j);
                            }
                        }
                        ric[(b, d)] = acc;
                    }
                }
                values[[i, j]] = 0.5 * (gi * ric).trace();
            }
        }
        ScalarField::from_values(&self.grid, values)
    }
}

/// Symmetrized outer product `sym(a (x) b)_{ij} = (a_i b_j + a_j b_i) / 2`.
pub fn outer_sym(a: &CovectorField, b: &CovectorField) -> SymTensor2Field {
    let grid = a.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut out = SymTensor2Field::zeros(grid);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let av = a.vector(i, j);
            let bv = b.vector(i, j);
            out.set_matrix(i, j, (av * bv.transpose() + bv * av.transpose()) * 0.5);
        }
    }
    out
}

/// Sobolev norm of a list of component arrays treated as one tensor field:
/// sum over derivative orders `k <= n` and all multi-indices of the `L^p`
/// norm of the k-fold rotational derivative (components contracted
/// euclideanly inside the integrand).
pub fn sobolev_norm(grid: &Grid, comps: &[&Array2<f64>], n: usize, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Sobolev exponent p = {p} must be > 1"
        )));
    }
    let lp_norm = |fields: &[Vec<ScalarField>]| -> f64 {
        // fields: per multi-index a vector of component fields.
        let (n_lat, n_lon) = grid.shape();
        let mut total = 0.0;
        for multi in fields {
            let mut integral = 0.0;
            for i in 0..n_lat {
                let w = grid.node_weight(i);
                for j in 0..n_lon {
                    let mut sq = 0.0;
                    for f in multi {
                        let v = f.values()[[i, j]];
                        sq += v * v;
                    }
                    integral += w * sq.powf(p / 2.0);
                }
            }
            total += integral.powf(1.0 / p);
        }
        total
    };

    // Level 0: the field itself, one (empty) multi-index.
    let mut level: Vec<Vec<ScalarField>> = vec![comps
        .iter()
        .map(|c| ScalarField::from_values(grid, (*c).clone()))
        .collect()];
    let mut total = lp_norm(&level);
    for _ in 1..=n {
        let mut next: Vec<Vec<ScalarField>> = Vec::with_capacity(level.len() * 3);
        for multi in &level {
            for axis in 0..3 {
                next.push(
                    multi
                        .iter()
                        .map(|f| rot_derivative(f, axis).expect("axis in range"))
                        .collect(),
                );
            }
        }
        total += lp_norm(&next);
        level = next;
    }
    Ok(total)
}

/// Sobolev norm of a scalar field.
pub fn sobolev_norm_scalar(f: &ScalarField, n: usize, p: f64) -> Result<f64> {
    sobolev_norm(f.grid(), &[f.values()], n, p)
}

/// Sobolev norm of a covector field (rotational components).
pub fn sobolev_norm_covector(w: &CovectorField, n: usize, p: f64) -> Result<f64> {
    sobolev_norm(w.grid(), &[w.comp(0), w.comp(1), w.comp(2)], n, p)
}

/// Sobolev norm of a symmetric 2-tensor field.
pub fn sobolev_norm_tensor(t: &SymTensor2Field, n: usize, p: f64) -> Result<f64> {
    let comps: Vec<&Array2<f64>> = (0..6).map(|s| t.slot(s)).collect();
    sobolev_norm(t.grid(), &comps, n, p)
}

/// Mean of `f` against the area form of `metric`; errors if the area
/// density is not strictly positive.
pub fn mean_value(f: &ScalarField, metric: &SymTensor2Field) -> Result<f64> {
    let ops = MetricOps::new(metric)?;
    Ok(ops.mean(f))
}
