//! Numerical construction and validation of constant-mass-aspect foliations
//! of nearly spherically symmetric incoming null hypersurfaces in (perturbed)
//! Schwarzschild spacetimes, in double-null gauge.
//!
//! The crate is organised bottom-up:
//!
//! * [`sphere`] — spectral scalar/covector/tensor fields on Gauss–Legendre
//!   grids and rotational-frame calculus;
//! * [`elliptic`] — Poisson, Hodge, divergence and stability-operator solves
//!   on leaves with variable metrics;
//! * [`schwarzschild`] — exact background in double-null coordinates and the
//!   spherically symmetric reference foliation;
//! * [`metric`] — closed-form samples of the (perturbed) metric, connection
//!   and curvature, plus the decay validator;
//! * [`hypersurface`] — characteristic evolution of the graph function of
//!   the incoming null hypersurface and leaf reparameterisations;
//! * [`leaf`] — the two-step change of frame from background coordinates to
//!   leaf-adapted frames, with connection/curvature transport;
//! * [`solver`] — the constant-mass-aspect lapse equation and the marching
//!   scheme in the leaf parameter `u`;
//! * [`asymptotics`] — renormalised limits, energy and momentum extraction;
//! * [`config`] / [`run`] — run configuration and scenario drivers used by
//!   the `cmaf` binary and the examples.

pub mod asymptotics;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod hypersurface;
pub mod leaf;
pub mod metric;
pub mod run;
pub mod schwarzschild;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};
