//! Scalar, covector and symmetric 2-tensor fields on a spectral grid.
//!
//! Tensorial fields are stored through their rotational components: a
//! covector `w` is the triple of scalars `w(R_i)` for the three rotation
//! generators `R_i`, which satisfies `sum_i x_i w_i = 0` pointwise; a
//! symmetric 2-tensor gets six components with tangency in both slots.
//! Contractions of lower rotational indices against the round metric are
//! plain component sums.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{coeff_index, Grid, GridSpec};
use super::transform::{analyze, synthesize};
use crate::error::{Error, Result};

/// Real scalar field: primary representation is the value array; the
/// coefficient vector is computed lazily and cached.  Fields are immutable
/// after construction, so the cache never goes stale.
#[derive(Clone)]
pub struct ScalarField {
    grid: Grid,
    values: Array2<f64>,
    coeffs: OnceLock<Vec<Complex64>>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField({:?})", self.grid.spec())
    }
}

impl ScalarField {
    pub fn from_values(grid: &Grid, values: Array2<f64>) -> ScalarField {
        assert_eq!(values.dim(), grid.shape(), "value array must match grid");
        ScalarField {
            grid: grid.clone(),
            values,
            coeffs: OnceLock::new(),
        }
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> ScalarField {
        assert_eq!(coeffs.len(), grid.spec().n_coeffs());
        let values = synthesize(grid, &coeffs);
        let cell = OnceLock::new();
        let _ = cell.set(coeffs);
        ScalarField {
            grid: grid.clone(),
            values,
            coeffs: cell,
        }
    }

    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField::from_values(grid, Array2::zeros(grid.shape()))
    }

    pub fn constant(grid: &Grid, value: f64) -> ScalarField {
        ScalarField::from_values(grid, Array2::from_elem(grid.shape(), value))
    }

    /// Evaluate `f(normal)` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Vector3<f64>) -> f64) -> ScalarField {
        let (n_lat, n_lon) = grid.shape();
        let mut values = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                values[[i, j]] = f(grid.unit_normal(i, j));
            }
        }
        ScalarField::from_values(grid, values)
    }

    /// Single spherical harmonic `Re` basis field `a * Y_{lm}` (complex
    /// coefficient `a`; for a real field pair it with its conjugate mode).
    pub fn harmonic(grid: &Grid, l: usize, m: i64, amplitude: Complex64) -> ScalarField {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.spec().n_coeffs()];
        coeffs[coeff_index(l, m)] = amplitude;
        if m != 0 {
            // Hermitian partner keeps the synthesized field real.
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            coeffs[coeff_index(l, -m)] = amplitude.conj() * sign;
        }
        ScalarField::from_coeffs(grid, coeffs)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| analyze(&self.grid, &self.values))
    }

    /// Projection onto the retained band `l <= L` (kills aliased content that
    /// pointwise products may have left above the bandlimit).
    pub fn bandlimited(&self) -> ScalarField {
        ScalarField::from_coeffs(&self.grid, self.coeffs().to_vec())
    }

    pub fn coeff(&self, l: usize, m: i64) -> Complex64 {
        self.coeffs()[coeff_index(l, m)]
    }

    /// Mean over the round sphere, `a_{00} / sqrt(4 pi)`.
    pub fn round_mean(&self) -> f64 {
        self.coeffs()[0].re / (4.0 * std::f64::consts::PI).sqrt()
    }

    /// Integral against the round area element.
    pub fn round_integral(&self) -> f64 {
        let (n_lat, n_lon) = self.grid.shape();
        let mut acc = 0.0;
        for i in 0..n_lat {
            let w = self.grid.node_weight(i);
            for j in 0..n_lon {
                acc += w * self.values[[i, j]];
            }
        }
        acc
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_values(&self.grid, self.values.mapv(|v| f(v)))
    }

    pub fn add(&self, rhs: &ScalarField) -> ScalarField {
        self.binary(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ScalarField) -> ScalarField {
        self.binary(rhs, |a, b| a - b)
    }

    pub fn mul(&self, rhs: &ScalarField) -> ScalarField {
        self.binary(rhs, |a, b| a * b)
    }

    pub fn div(&self, rhs: &ScalarField) -> ScalarField {
        self.binary(rhs, |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add_scalar(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    fn binary(&self, rhs: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        self.grid
            .check_same(&rhs.grid, "scalar field arithmetic")
            .expect("fields on mismatched grids");
        let mut values = self.values.clone();
        values.zip_mut_with(&rhs.values, |a, &b| *a = f(*a, b));
        ScalarField::from_values(&self.grid, values)
    }

    /// Self-describing serialization record.
    pub fn to_record(&self) -> ScalarFieldRecord {
        let coeffs = self.coeffs();
        let l_max = self.grid.bandlimit();
        let mut rows = Vec::with_capacity(coeffs.len());
        for l in 0..=l_max {
            for m in -(l as i64)..=(l as i64) {
                let c = coeffs[coeff_index(l, m)];
                rows.push((l as u64, m, c.re, c.im));
            }
        }
        ScalarFieldRecord {
            grid: self.grid.spec(),
            coeffs: rows,
        }
    }

    pub fn from_record(record: &ScalarFieldRecord) -> Result<ScalarField> {
        let grid = Grid::new(record.grid)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); record.grid.n_coeffs()];
        for &(l, m, re, im) in &record.coeffs {
            let l = l as usize;
            if l > record.grid.bandlimit || m.unsigned_abs() as usize > l {
                return Err(Error::Serialization(format!(
                    "coefficient ({l},{m}) outside bandlimit {}",
                    record.grid.bandlimit
                )));
            }
            coeffs[coeff_index(l, m)] = Complex64::new(re, im);
        }
        Ok(ScalarField::from_coeffs(&grid, coeffs))
    }

    /// Little-endian binary encoding of the record (counts, then rows).
    pub fn to_bytes(&self) -> Vec<u8> {
        let rec = self.to_record();
        let mut out = Vec::new();
        out.extend_from_slice(&(rec.grid.bandlimit as u64).to_le_bytes());
        out.extend_from_slice(&(rec.grid.n_lat as u64).to_le_bytes());
        out.extend_from_slice(&(rec.grid.n_lon as u64).to_le_bytes());
        out.extend_from_slice(&(rec.coeffs.len() as u64).to_le_bytes());
        for (l, m, re, im) in rec.coeffs {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&m.to_le_bytes());
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ScalarField> {
        let take_u64 = |b: &[u8], at: usize| -> Result<u64> {
            b.get(at..at + 8)
                .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
                .ok_or_else(|| Error::Serialization("truncated field record".into()))
        };
        let l_max = take_u64(bytes, 0)? as usize;
        let n_lat = take_u64(bytes, 8)? as usize;
        let n_lon = take_u64(bytes, 16)? as usize;
        let n = take_u64(bytes, 24)? as usize;
        let mut rows = Vec::with_capacity(n);
        let mut at = 32;
        for _ in 0..n {
            let l = take_u64(bytes, at)?;
            let m = take_u64(bytes, at + 8)? as i64;
            let re = f64::from_le_bytes(
                bytes
                    .get(at + 16..at + 24)
                    .ok_or_else(|| Error::Serialization("truncated field record".into()))?
                    .try_into()
                    .unwrap(),
            );
            let im = f64::from_le_bytes(
                bytes
                    .get(at + 24..at + 32)
                    .ok_or_else(|| Error::Serialization("truncated field record".into()))?
                    .try_into()
                    .unwrap(),
            );
            rows.push((l, m, re, im));
            at += 32;
        }
        ScalarField::from_record(&ScalarFieldRecord {
            grid: GridSpec {
                bandlimit: l_max,
                n_lat,
                n_lon,
            },
            coeffs: rows,
        })
    }
}

/// Serializable form of a scalar field: the grid spec plus the coefficient
/// list in row-major `(l, m)` order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarFieldRecord {
    pub grid: GridSpec,
    /// Rows `(l, m, re, im)`.
    pub coeffs: Vec<(u64, i64, f64, f64)>,
}

/// Covector field in rotational components `w_i = w(R_i)`.
#[derive(Clone, Debug)]
pub struct CovectorField {
    grid: Grid,
    comps: [Array2<f64>; 3],
}

impl CovectorField {
    pub fn from_comps(grid: &Grid, comps: [Array2<f64>; 3]) -> CovectorField {
        for c in &comps {
            assert_eq!(c.dim(), grid.shape());
        }
        CovectorField {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn zeros(grid: &Grid) -> CovectorField {
        CovectorField::from_comps(
            grid,
            [
                Array2::zeros(grid.shape()),
                Array2::zeros(grid.shape()),
                Array2::zeros(grid.shape()),
            ],
        )
    }

    /// Build from a pointwise rule; the result is projected tangentially.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Vector3<f64>) -> Vector3<f64>) -> CovectorField {
        let mut out = CovectorField::zeros(grid);
        let (n_lat, n_lon) = grid.shape();
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let v = f(x);
                let v = v - x * x.dot(&v);
                out.set_vector(i, j, v);
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, i: usize) -> &Array2<f64> {
        &self.comps[i]
    }

    pub fn comp_field(&self, i: usize) -> ScalarField {
        ScalarField::from_values(&self.grid, self.comps[i].clone())
    }

    #[inline]
    pub fn vector(&self, i_lat: usize, j_lon: usize) -> Vector3<f64> {
        Vector3::new(
            self.comps[0][[i_lat, j_lon]],
            self.comps[1][[i_lat, j_lon]],
            self.comps[2][[i_lat, j_lon]],
        )
    }

    #[inline]
    pub fn set_vector(&mut self, i_lat: usize, j_lon: usize, v: Vector3<f64>) {
        self.comps[0][[i_lat, j_lon]] = v[0];
        self.comps[1][[i_lat, j_lon]] = v[1];
        self.comps[2][[i_lat, j_lon]] = v[2];
    }

    pub fn add(&self, rhs: &CovectorField) -> CovectorField {
        self.binary(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &CovectorField) -> CovectorField {
        self.binary(rhs, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> CovectorField {
        let comps = [
            self.comps[0].mapv(|v| c * v),
            self.comps[1].mapv(|v| c * v),
            self.comps[2].mapv(|v| c * v),
        ];
        CovectorField::from_comps(&self.grid, comps)
    }

    pub fn mul_scalar_field(&self, s: &ScalarField) -> CovectorField {
        let mut comps = self.comps.clone();
        for c in &mut comps {
            c.zip_mut_with(s.values(), |a, &b| *a *= b);
        }
        CovectorField::from_comps(&self.grid, comps)
    }

    fn binary(&self, rhs: &CovectorField, f: impl Fn(f64, f64) -> f64) -> CovectorField {
        self.grid
            .check_same(&rhs.grid, "covector arithmetic")
            .expect("fields on mismatched grids");
        let mut comps = self.comps.clone();
        for (a, b) in comps.iter_mut().zip(rhs.comps.iter()) {
            a.zip_mut_with(b, |x, &y| *x = f(*x, y));
        }
        CovectorField::from_comps(&self.grid, comps)
    }

    /// Round-metric norm-squared, `sum_i w_i^2`, as a scalar field.
    pub fn round_norm_sq(&self) -> ScalarField {
        let mut v = self.comps[0].mapv(|a| a * a);
        v.zip_mut_with(&self.comps[1], |a, &b| *a += b * b);
        v.zip_mut_with(&self.comps[2], |a, &b| *a += b * b);
        ScalarField::from_values(&self.grid, v)
    }

    /// Largest pointwise violation of the tangency constraint
    /// `sum_i x_i w_i = 0` (a diagnostic; analytic constructions keep it at
    /// rounding level).
    pub fn tangency_defect(&self) -> f64 {
        let (n_lat, n_lon) = self.grid.shape();
        let mut worst = 0.0_f64;
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                worst = worst.max(x.dot(&self.vector(i, j)).abs());
            }
        }
        worst
    }

    /// Re-project every node onto the tangent plane.
    pub fn tangential(&self) -> CovectorField {
        let mut out = self.clone();
        let (n_lat, n_lon) = self.grid.shape();
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let v = out.vector(i, j);
                out.set_vector(i, j, v - x * x.dot(&v));
            }
        }
        out
    }

    pub fn max_round_norm(&self) -> f64 {
        self.round_norm_sq().max_value().max(0.0).sqrt()
    }
}

const SYM_SLOT: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

/// Symmetric 2-tensor field in rotational components, six stored slots for
/// the index pairs `(0,0), (0,1), (0,2), (1,1), (1,2), (2,2)`.
#[derive(Clone, Debug)]
pub struct SymTensor2Field {
    grid: Grid,
    comps: [Array2<f64>; 6],
}

impl SymTensor2Field {
    pub fn from_comps(grid: &Grid, comps: [Array2<f64>; 6]) -> SymTensor2Field {
        for c in &comps {
            assert_eq!(c.dim(), grid.shape());
        }
        SymTensor2Field {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn zeros(grid: &Grid) -> SymTensor2Field {
        SymTensor2Field::from_comps(grid, std::array::from_fn(|_| Array2::zeros(grid.shape())))
    }

    /// Build from a pointwise matrix rule; symmetrized and projected
    /// tangentially in both slots.
    pub fn from_fn(
        grid: &Grid,
        mut f: impl FnMut(Vector3<f64>) -> Matrix3<f64>,
    ) -> SymTensor2Field {
        let mut out = SymTensor2Field::zeros(grid);
        let (n_lat, n_lon) = grid.shape();
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let m = f(x);
                let m = pi * ((m + m.transpose()) * 0.5) * pi;
                out.set_matrix(i, j, m);
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, a: usize, b: usize) -> &Array2<f64> {
        &self.comps[SYM_SLOT[a][b]]
    }

    pub fn slot(&self, s: usize) -> &Array2<f64> {
        &self.comps[s]
    }

    pub fn comp_field(&self, a: usize, b: usize) -> ScalarField {
        ScalarField::from_values(&self.grid, self.comp(a, b).clone())
    }

    #[inline]
    pub fn matrix(&self, i_lat: usize, j_lon: usize) -> Matrix3<f64> {
        let g = |a: usize, b: usize| self.comps[SYM_SLOT[a][b]][[i_lat, j_lon]];
        Matrix3::new(
            g(0, 0),
            g(0, 1),
            g(0, 2),
            g(1, 0),
            g(1, 1),
            g(1, 2),
            g(2, 0),
            g(2, 1),
            g(2, 2),
        )
    }

    #[inline]
    pub fn set_matrix(&mut self, i_lat: usize, j_lon: usize, m: Matrix3<f64>) {
        for a in 0..3 {
            for b in a..3 {
                self.comps[SYM_SLOT[a][b]][[i_lat, j_lon]] = 0.5 * (m[(a, b)] + m[(b, a)]);
            }
        }
    }

    pub fn add(&self, rhs: &SymTensor2Field) -> SymTensor2Field {
        self.binary(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &SymTensor2Field) -> SymTensor2Field {
        self.binary(rhs, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> SymTensor2Field {
        let comps = std::array::from_fn(|s| self.comps[s].mapv(|v| c * v));
        SymTensor2Field::from_comps(&self.grid, comps)
    }

    pub fn mul_scalar_field(&self, s: &ScalarField) -> SymTensor2Field {
        let mut comps = self.comps.clone();
        for c in &mut comps {
            c.zip_mut_with(s.values(), |a, &b| *a *= b);
        }
        SymTensor2Field::from_comps(&self.grid, comps)
    }

    fn binary(&self, rhs: &SymTensor2Field, f: impl Fn(f64, f64) -> f64) -> SymTensor2Field {
        self.grid
            .check_same(&rhs.grid, "tensor arithmetic")
            .expect("fields on mismatched grids");
        let mut comps = self.comps.clone();
        for (a, b) in comps.iter_mut().zip(rhs.comps.iter()) {
            a.zip_mut_with(b, |x, &y| *x = f(*x, y));
        }
        SymTensor2Field::from_comps(&self.grid, comps)
    }

    /// The tangential projection of the round metric, i.e. the rotational
    /// components of the unit-sphere metric itself.
    pub fn round_metric(grid: &Grid) -> SymTensor2Field {
        SymTensor2Field::from_fn(grid, |_| Matrix3::identity())
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}
