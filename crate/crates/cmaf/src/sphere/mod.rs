//! Spectral fields and rotational-frame calculus on the unit sphere.

pub mod field;
pub mod grid;
pub mod ops;
pub mod transform;

#[cfg(test)]
mod tests;

pub use field::{CovectorField, ScalarField, ScalarFieldRecord, SymTensor2Field};
pub use grid::{coeff_index, gauss_legendre, Grid, GridSpec};
pub use ops::{
    cov_deriv_covector, cov_deriv_symtensor, curl_round, div_round, eps, eps_round, grad,
    hessian_round, mean_value, outer_sym, rot_derivative, round_laplacian,
    round_laplacian_inverse, sobolev_norm, sobolev_norm_covector, sobolev_norm_scalar,
    sobolev_norm_tensor, MetricOps,
};
pub use transform::{analyze, apply_multiplier, rot_coeffs, synthesize};
