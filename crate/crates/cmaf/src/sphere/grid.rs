//! Gauss–Legendre × equispaced-longitude grids and the precomputed tables
//! (Legendre functions, FFT plans, node coordinates) shared by every field
//! living on a given grid.

use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandlimit and node counts of a spectral grid on the unit sphere.
///
/// Latitudes are Gauss–Legendre nodes in `cos(theta)`, longitudes are
/// equispaced.  The defaults oversample so that pointwise products of two
/// bandlimited fields are analysed without aliasing into the retained modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spherical-harmonic bandlimit `L`; coefficients carry `l <= L`.
    pub bandlimit: usize,
    pub n_lat: usize,
    pub n_lon: usize,
}

impl GridSpec {
    /// Oversampled grid for bandlimit `l_max`: `2L+2` latitudes (quadrature
    /// exact through degree `4L+3`) and `4L+4` longitudes.
    pub fn for_bandlimit(l_max: usize) -> Self {
        GridSpec {
            bandlimit: l_max,
            n_lat: 2 * l_max + 2,
            n_lon: 4 * l_max + 4,
        }
    }

    pub fn with_nodes(l_max: usize, n_lat: usize, n_lon: usize) -> Result<Self> {
        let spec = GridSpec {
            bandlimit: l_max,
            n_lat,
            n_lon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat < self.bandlimit + 1 {
            return Err(Error::InvalidArgument(format!(
                "n_lat = {} too small for bandlimit {} (need >= L+1)",
                self.n_lat, self.bandlimit
            )));
        }
        if self.n_lon < 2 * self.bandlimit + 1 {
            return Err(Error::InvalidArgument(format!(
                "n_lon = {} too small for bandlimit {} (need >= 2L+1)",
                self.n_lon, self.bandlimit
            )));
        }
        Ok(())
    }

    /// Number of retained spherical-harmonic coefficients, `(L+1)^2`.
    pub fn n_coeffs(&self) -> usize {
        (self.bandlimit + 1) * (self.bandlimit + 1)
    }
}

/// Flat index of the coefficient `(l, m)` (with `-l <= m <= l`) in a
/// row-major coefficient vector.
#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    (l * l) as usize + l + (m + l as i64) as usize - l
}

/// Index of `(l, m)` with `0 <= m <= l` in the triangular Legendre table.
#[inline]
fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

struct GridTables {
    spec: GridSpec,
    /// Gauss–Legendre nodes `x_i = cos(theta_i)`, descending in `x`.
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    /// Gauss–Legendre weights on `[-1, 1]`.
    gl_weight: Vec<f64>,
    /// Solid-angle weight of one node in ring `i`: `w_i * 2 pi / n_lon`.
    node_weight: Vec<f64>,
    /// Orthonormal associated Legendre values `Pbar_{lm}(x_i)`, `m >= 0`,
    /// one triangular table per latitude ring.
    plm: Vec<Vec<f64>>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// Cartesian coordinates of the unit normal at each node.
    x: [Array2<f64>; 3],
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
}

/// Cheaply cloneable handle to a grid and its precomputed tables.
#[derive(Clone)]
pub struct Grid(Arc<GridTables>);

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid({:?})", self.0.spec)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Initial guess (Tricomi) for the i-th root, descending order.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // One more derivative evaluation at the converged node for the weight.
        let (mut p0, mut p1) = (1.0_f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Orthonormal associated Legendre functions `Pbar_{lm}(x)` for `0 <= m <= l
/// <= l_max`, including the Condon–Shortley phase, so that
/// `Y_{lm} = Pbar_{lm}(cos theta) e^{i m phi}` is orthonormal on the sphere.
fn legendre_table(l_max: usize, x: f64) -> Vec<f64> {
    let sin_t = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
    p[tri_index(0, 0)] = 0.25 / std::f64::consts::PI;
    p[tri_index(0, 0)] = p[tri_index(0, 0)].sqrt();
    for m in 1..=l_max {
        let mf = m as f64;
        p[tri_index(m, m)] =
            -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_t * p[tri_index(m - 1, m - 1)];
    }
    for m in 0..l_max {
        let mf = m as f64;
        p[tri_index(m + 1, m)] = x * (2.0 * mf + 3.0).sqrt() * p[tri_index(m, m)];
    }
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            p[tri_index(l, m)] =
                a * (x * p[tri_index(l - 1, m)] - b * p[tri_index(l - 2, m)]);
        }
    }
    p
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        let (cos_theta, gl_weight) = gauss_legendre(spec.n_lat);
        let sin_theta: Vec<f64> = cos_theta
            .iter()
            .map(|&x| (1.0 - x * x).max(0.0).sqrt())
            .collect();
        let two_pi = 2.0 * std::f64::consts::PI;
        let node_weight: Vec<f64> = gl_weight
            .iter()
            .map(|&w| w * two_pi / spec.n_lon as f64)
            .collect();
        let plm: Vec<Vec<f64>> = cos_theta
            .iter()
            .map(|&x| legendre_table(spec.bandlimit, x))
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        let fft_fwd = planner.plan_fft_forward(spec.n_lon);
        let fft_inv = planner.plan_fft_inverse(spec.n_lon);

        let mut x = [
            Array2::zeros((spec.n_lat, spec.n_lon)),
            Array2::zeros((spec.n_lat, spec.n_lon)),
            Array2::zeros((spec.n_lat, spec.n_lon)),
        ];
        let mut cos_phi = vec![0.0; spec.n_lon];
        let mut sin_phi = vec![0.0; spec.n_lon];
        for j in 0..spec.n_lon {
            let phi = two_pi * j as f64 / spec.n_lon as f64;
            cos_phi[j] = phi.cos();
            sin_phi[j] = phi.sin();
        }
        for i in 0..spec.n_lat {
            for j in 0..spec.n_lon {
                x[0][[i, j]] = sin_theta[i] * cos_phi[j];
                x[1][[i, j]] = sin_theta[i] * sin_phi[j];
                x[2][[i, j]] = cos_theta[i];
            }
        }

        Ok(Grid(Arc::new(GridTables {
            spec,
            cos_theta,
            sin_theta,
            gl_weight,
            node_weight,
            plm,
            fft_fwd,
            fft_inv,
            x,
            cos_phi,
            sin_phi,
        })))
    }

    pub fn for_bandlimit(l_max: usize) -> Grid {
        Grid::new(GridSpec::for_bandlimit(l_max)).expect("default grid spec is valid")
    }

    pub fn spec(&self) -> GridSpec {
        self.0.spec
    }

    pub fn bandlimit(&self) -> usize {
        self.0.spec.bandlimit
    }

    pub fn n_lat(&self) -> usize {
        self.0.spec.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.0.spec.n_lon
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.spec.n_lat, self.0.spec.n_lon)
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.0.cos_theta
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.0.sin_theta
    }

    pub fn gl_weights(&self) -> &[f64] {
        &self.0.gl_weight
    }

    /// Solid-angle weight of every node in latitude ring `i`; the weights of
    /// all nodes sum to `4 pi`.
    pub fn node_weight(&self, i_lat: usize) -> f64 {
        self.0.node_weight[i_lat]
    }

    pub(crate) fn plm_ring(&self, i_lat: usize) -> &[f64] {
        &self.0.plm[i_lat]
    }

    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.0.fft_fwd.process(buf);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.0.fft_inv.process(buf);
    }

    /// Cartesian components of the outward unit normal, as value arrays.
    pub fn embedding(&self) -> &[Array2<f64>; 3] {
        &self.0.x
    }

    /// Unit normal at one node.
    #[inline]
    pub fn unit_normal(&self, i_lat: usize, j_lon: usize) -> Vector3<f64> {
        Vector3::new(
            self.0.x[0][[i_lat, j_lon]],
            self.0.x[1][[i_lat, j_lon]],
            self.0.x[2][[i_lat, j_lon]],
        )
    }

    pub fn cos_phi(&self) -> &[f64] {
        &self.0.cos_phi
    }

    pub fn sin_phi(&self) -> &[f64] {
        &self.0.sin_phi
    }

    pub fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.spec(),
                other.spec()
            )))
        }
    }
}
