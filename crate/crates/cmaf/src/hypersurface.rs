//! Characteristic evolution of the incoming null hypersurface.
//!
//! The hypersurface is represented as a graph `sbar = h(s, theta)` over the
//! outgoing coordinate and the sphere.  Its generator equation is a scalar
//! transport equation in `s` with a quadratic gradient nonlinearity; this
//! module integrates it with a method-of-lines RK4 scheme, stores snapshots
//! on a uniform `s`-ladder for later interpolation, and provides the
//! homotopy ("graph transform") that converts a leaf reparameterisation
//! `s = f(theta)` into the incoming-coordinate graph of the tilted leaf.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::metric::{frame_dot, AmbientSample, SyntheticProvider};
use crate::sphere::{grad, sobolev_norm_covector, CovectorField, MetricOps, ScalarField};

/// Tunables for [`evolve_h`].
#[derive(Debug, Clone)]
pub struct TransportOptions {
    /// RK4 step in `s`; `None` picks `min(0.02 r0, 2 r0 / L^2)`.
    pub ds: Option<f64>,
    /// Snapshot spacing; rounded to an integer number of steps.
    pub store_every: f64,
    /// Admissible initial gradient, `|d f0|_{n+1,p} <= delta_grad * r0`.
    pub delta_grad: f64,
    /// Admissible initial mean, `|mean f0| <= delta_mean * r0`.
    pub delta_mean: f64,
    /// Sobolev order `n` of the smallness norm (the guard uses `n + 1`).
    pub sobolev_n: usize,
    /// Lebesgue exponent of the smallness norm.
    pub sobolev_p: f64,
}

impl TransportOptions {
    pub fn for_background(r0: f64) -> TransportOptions {
        TransportOptions {
            ds: None,
            store_every: 0.1 * r0,
            delta_grad: 0.5,
            delta_mean: 0.05,
            sobolev_n: 2,
            sobolev_p: 2.0,
        }
    }
}

/// One snapshot monitor row.
#[derive(Debug, Clone, Copy)]
pub struct TransportMonitor {
    pub s: f64,
    /// Round-sphere mean of `h`.
    pub mean: f64,
    /// Smallness norm of the angular gradient of `h`.
    pub grad_norm: f64,
}

/// Evolved hypersurface: snapshots of the graph function on a uniform
/// `s`-ladder, with interpolation in `s`.
pub struct HypersurfaceState {
    r0: f64,
    s_samples: Vec<f64>,
    snapshots: Vec<ScalarField>,
    monitors: Vec<TransportMonitor>,
}

impl HypersurfaceState {
    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn s_min(&self) -> f64 {
        self.s_samples[0]
    }

    pub fn s_max(&self) -> f64 {
        *self.s_samples.last().unwrap()
    }

    pub fn s_samples(&self) -> &[f64] {
        &self.s_samples
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn monitors(&self) -> &[TransportMonitor] {
        &self.monitors
    }

    /// Index window of `width` consecutive samples centred on `s`.
    fn window(&self, s: f64, width: usize) -> Result<std::ops::Range<usize>> {
        let n = self.s_samples.len();
        let lo = self.s_samples[0];
        let hi = self.s_samples[n - 1];
        let span = hi - lo;
        let slack = 1e-9 * span.max(self.r0);
        if s < lo - slack || s > hi + slack {
            return Err(Error::InvalidArgument(format!(
                "coordinate {s} outside evolved range [{lo}, {hi}]"
            )));
        }
        if n <= width {
            return Ok(0..n);
        }
        let step = span / (n - 1) as f64;
        let centre = ((s - lo) / step).round() as isize;
        let start = (centre - width as isize / 2).clamp(0, (n - width) as isize) as usize;
        Ok(start..start + width)
    }

    /// Graph function at coordinate `s`, by 6-point Lagrange interpolation
    /// over the stored snapshots.
    pub fn h_at(&self, s: f64) -> Result<ScalarField> {
        let window = self.window(s, 6)?;
        let grid = self.snapshots[0].grid();
        let mut out = ScalarField::zeros(grid);
        for k in window.clone() {
            let mut w = 1.0;
            for j in window.clone() {
                if j != k {
                    w *= (s - self.s_samples[j]) / (self.s_samples[k] - self.s_samples[j]);
                }
            }
            out = out.add(&self.snapshots[k].scale(w));
        }
        Ok(out)
    }

    /// Graph function evaluated at a per-node coordinate field:
    /// `theta -> h(s(theta), theta)`.
    pub fn h_at_nodes(&self, s: &ScalarField) -> Result<ScalarField> {
        self.snapshots[0].grid().check_same(s.grid(), "graph lookup")?;
        let (n_lat, n_lon) = s.grid().shape();
        let mut values = ndarray::Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let sv = s.values()[[i, j]];
                let window = self.window(sv, 6)?;
                let mut acc = 0.0;
                for k in window.clone() {
                    let mut w = 1.0;
                    for l in window.clone() {
                        if l != k {
                            w *= (sv - self.s_samples[l])
                                / (self.s_samples[k] - self.s_samples[l]);
                        }
                    }
                    acc += w * self.snapshots[k].values()[[i, j]];
                }
                values[[i, j]] = acc;
            }
        }
        Ok(ScalarField::from_values(s.grid(), values))
    }
}

/// Transport right-hand side at one coordinate `s`:
/// `dh/ds = -b . dh + Omega^2 |dh|^2` with metric contractions taken in the
/// sampled leaf metric.  Identically zero for angle-independent graphs.
fn transport_rhs(provider: &SyntheticProvider, h: &ScalarField, s: f64) -> Result<ScalarField> {
    let dh = grad(h);
    if dh.max_round_norm() == 0.0 {
        return Ok(ScalarField::zeros(h.grid()));
    }
    let sample = provider.sample_on_graph(h, s)?;
    let ops = MetricOps::new(&sample.metric)?;
    let quad = sample.omega_sq.mul(&ops.dot_cov(&dh, &dh));
    Ok(quad.sub(&frame_dot(&sample.b, &dh)))
}

/// Integrate the graph function from data `f0` on the sphere `s = 0` over
/// `[s_min, 0]` and `[0, s_max]`, storing snapshots on a uniform ladder.
///
/// Rejects initial data outside the admissible smallness regime, aborts if
/// the gradient norm doubles within a single step (incipient caustic), and
/// keeps angle-independent data on the exact constant solution without
/// touching the integrator.
pub fn evolve_h(
    provider: &SyntheticProvider,
    f0: &ScalarField,
    s_min: f64,
    s_max: f64,
    opts: &TransportOptions,
) -> Result<HypersurfaceState> {
    let grid = provider.grid();
    grid.check_same(f0.grid(), "initial graph data")?;
    let cfg = provider.config();
    let r0 = cfg.r0;
    let kappa = cfg.kappa;
    if !(s_min <= 0.0 && s_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "evolution range [{s_min}, {s_max}] must straddle the data sphere s = 0"
        )));
    }
    if s_min <= -kappa * r0 {
        return Err(Error::InvalidArgument(format!(
            "backward range {s_min} leaves the chart domain s > {}",
            -kappa * r0
        )));
    }

    // Smallness regime of the initial data.
    let mean0 = f0.round_mean();
    let grad_norm0 = sobolev_norm_covector(&grad(f0), opts.sobolev_n + 1, opts.sobolev_p)?;
    if mean0.abs() > opts.delta_mean * r0 {
        return Err(Error::Regime(format!(
            "initial graph mean {:.3e} exceeds the admissible {:.3e}",
            mean0,
            opts.delta_mean * r0
        )));
    }
    if grad_norm0 > opts.delta_grad * r0 {
        return Err(Error::Regime(format!(
            "initial graph gradient norm {:.3e} exceeds the admissible {:.3e}",
            grad_norm0,
            opts.delta_grad * r0
        )));
    }

    let l = grid.bandlimit() as f64;
    let ds_target = opts
        .ds
        .unwrap_or_else(|| (0.02 * r0).min(2.0 * r0 / (l * l)));
    let mut ds_store = opts.store_every.max(ds_target);
    let n_bwd = if s_min < 0.0 {
        (-s_min / ds_store).ceil() as usize
    } else {
        0
    };
    if n_bwd > 0 {
        // Land the backward leg exactly on s_min so the uniform ladder never
        // leaves the chart strip.
        ds_store = -s_min / n_bwd as f64;
    }
    let stride = (ds_store / ds_target).ceil().max(1.0) as usize;
    let n_fwd = (s_max / ds_store).ceil().max(1.0) as usize;

    let flat = grad(f0).max_round_norm() < 1e-14 * r0;

    // Forward and backward ladders, merged sorted in `s` (the data sphere
    // appears only once).
    let mut samples = march(provider, f0, n_fwd, ds_store, stride, flat, r0, kappa)?;
    if n_bwd > 0 {
        let back = march(provider, f0, n_bwd, -ds_store, stride, flat, r0, kappa)?;
        samples.extend(back.into_iter().skip(1));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut s_samples = Vec::with_capacity(samples.len());
    let mut snapshots = Vec::with_capacity(samples.len());
    let mut monitors = Vec::with_capacity(samples.len());
    for (s, h) in samples {
        let gn = if flat {
            0.0
        } else {
            sobolev_norm_covector(&grad(&h), opts.sobolev_n + 1, opts.sobolev_p)?
        };
        monitors.push(TransportMonitor {
            s,
            mean: h.round_mean(),
            grad_norm: gn,
        });
        s_samples.push(s);
        snapshots.push(h);
    }
    Ok(HypersurfaceState {
        r0,
        s_samples,
        snapshots,
        monitors,
    })
}

/// One directed leg of the integration: `n_store` ladder intervals of signed
/// width `ds_store`, each split into `stride` RK4 steps.
#[allow(clippy::too_many_arguments)]
fn march(
    provider: &SyntheticProvider,
    f0: &ScalarField,
    n_store: usize,
    ds_store: f64,
    stride: usize,
    flat: bool,
    r0: f64,
    kappa: f64,
) -> Result<Vec<(f64, ScalarField)>> {
    let mut out = vec![(0.0, f0.clone())];
    if flat {
        // Constant graphs solve the transport equation exactly.
        for k in 1..=n_store {
            out.push((k as f64 * ds_store, f0.clone()));
        }
        return Ok(out);
    }
    let ds = ds_store / stride as f64;
    let mut h = f0.clone();
    let mut grad_scale = grad(&h).max_round_norm().max(1e-14 * r0);
    for k in 1..=n_store {
        for sub in 0..stride {
            let s0 = (k - 1) as f64 * ds_store + sub as f64 * ds;
            let k1 = transport_rhs(provider, &h, s0)?;
            let h2 = h.add(&k1.scale(0.5 * ds));
            let k2 = transport_rhs(provider, &h2, s0 + 0.5 * ds)?;
            let h3 = h.add(&k2.scale(0.5 * ds));
            let k3 = transport_rhs(provider, &h3, s0 + 0.5 * ds)?;
            let h4 = h.add(&k3.scale(ds));
            let k4 = transport_rhs(provider, &h4, s0 + ds)?;
            h = h
                .add(&k1.add(&k4).scale(ds / 6.0))
                .add(&k2.add(&k3).scale(ds / 3.0))
                .bandlimited();
            let s = s0 + ds;
            let gn = grad(&h).max_round_norm();
            if !gn.is_finite() || gn > 2.0 * grad_scale {
                return Err(Error::EvolutionDiverged(format!(
                    "graph gradient grew from {:.3e} to {:.3e} at s = {:.3e}",
                    grad_scale, gn, s
                )));
            }
            grad_scale = grad_scale.max(gn);
            if h.max_abs() >= kappa * r0 {
                return Err(Error::Regime(format!(
                    "graph left the chart strip |sbar| < {:.3e} at s = {:.3e}",
                    kappa * r0,
                    s
                )));
            }
        }
        out.push((k as f64 * ds_store, h.clone()));
    }
    Ok(out)
}

/// Options for [`graph_transform`].
#[derive(Debug, Clone)]
pub struct GraphTransformOptions {
    /// RK4 steps of the homotopy parameter.
    pub n_steps: usize,
    /// Abort threshold on the angular-slope denominator.
    pub min_denominator: f64,
}

impl Default for GraphTransformOptions {
    fn default() -> Self {
        GraphTransformOptions {
            n_steps: 64,
            min_denominator: 0.1,
        }
    }
}

/// Result of the leaf reparameterisation homotopy.
pub struct GraphTransformResult {
    /// Incoming-coordinate graph of the tilted leaf `s = f(theta)`.
    pub fbar: ScalarField,
    /// Smallest denominator met along the homotopy (a causality margin).
    pub min_denominator: f64,
}

/// Per-node slope data for the homotopy right-hand side.
struct SlopeTerms {
    /// `F` at every node.
    rhs: ScalarField,
    min_den: f64,
}

/// Evaluate the homotopy right-hand side at parameter `t` for target
/// reparameterisation `f` and current incoming graph `tfbar`.
fn homotopy_rhs(
    provider: &SyntheticProvider,
    f: &ScalarField,
    tfbar: &ScalarField,
    t: f64,
    min_denominator: f64,
) -> Result<SlopeTerms> {
    let grid = provider.grid();
    let tf = f.scale(t);
    let sample = provider.sample_on_surface(tfbar, &tf)?;
    let ops = MetricOps::new(&sample.metric)?;

    let df = grad(f);
    let dtf = grad(&tf);
    let dtfbar = grad(tfbar);

    let e = slope_vector(grid, &sample, &ops, &dtf)?;
    let e_under = slope_vector(grid, &sample, &ops, &dtfbar)?;

    // Pointwise null-slope ratio from the quadratic relation between the
    // two graph slopes, in its subtraction-free form.
    let e_low = ops.lower(&e);
    let eu_low = ops.lower(&e_under);
    let e_sq = frame_dot(&e, &e_low);
    let eu_sq = frame_dot(&e_under, &eu_low);
    let cross = frame_dot(&e, &eu_low);

    let (n_lat, n_lon) = grid.shape();
    let mut eps_v = ndarray::Array2::zeros((n_lat, n_lon));
    for i in 0..n_lat {
        for j in 0..n_lon {
            let a = 2.0 * sample.omega_sq.values()[[i, j]] + cross.values()[[i, j]];
            let disc = a * a - e_sq.values()[[i, j]] * eu_sq.values()[[i, j]];
            if disc < 0.0 {
                return Err(Error::NearCharacteristic(format!(
                    "slope discriminant {disc:.3e} negative at homotopy parameter {t:.3}"
                )));
            }
            let den = a + disc.sqrt();
            if den <= 0.0 {
                return Err(Error::NearCharacteristic(format!(
                    "null-slope denominator {den:.3e} nonpositive at homotopy parameter {t:.3}"
                )));
            }
            eps_v[[i, j]] = -eu_sq.values()[[i, j]] / den;
        }
    }
    let eps_under = ScalarField::from_values(grid, eps_v);

    // Denominator 1 - t (b + e_under + eps_under e) . df and numerator
    // eps_under - (b + e_under + eps_under e) . d tfbar.
    let carrier = sample
        .b
        .add(&e_under)
        .add(&e.mul_scalar_field(&eps_under));
    let den = ScalarField::constant(grid, 1.0).sub(&frame_dot(&carrier, &df).scale(t));
    let min_den = den.min_value();
    if min_den < min_denominator {
        return Err(Error::NearCharacteristic(format!(
            "reparameterisation denominator {min_den:.3e} below {min_denominator:.3e} at homotopy parameter {t:.3}"
        )));
    }
    let num = eps_under.sub(&frame_dot(&carrier, &dtfbar));
    Ok(SlopeTerms {
        rhs: f.mul(&num).div(&den),
        min_den,
    })
}

/// The slope vector `-2 Omega^2 B^{-T} dw` raised with the leaf metric,
/// where `B = I - dw (x) b` is inverted pseudo-inversely in the tangential
/// frame at every node.
fn slope_vector(
    grid: &crate::sphere::Grid,
    sample: &AmbientSample,
    ops: &MetricOps,
    dw: &CovectorField,
) -> Result<CovectorField> {
    let (n_lat, n_lon) = grid.shape();
    let mut out = CovectorField::zeros(grid);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let x = grid.unit_normal(i, j);
            let pi = Matrix3::identity() - x * x.transpose();
            let w = dw.vector(i, j);
            let b = sample.b.vector(i, j);
            let m = pi - w * b.transpose();
            let aug = m + x * x.transpose();
            let inv = aug.try_inverse().ok_or_else(|| {
                Error::NearCharacteristic(format!(
                    "graph-slope matrix singular at node ({i}, {j})"
                ))
            })?;
            let n = inv - x * x.transpose();
            // (B^{-1})^j_i w_i  =  (N^T w)_j
            out.set_vector(i, j, n.transpose() * w);
        }
    }
    let raised = ops.raise(&out);
    let mut scaled = raised.mul_scalar_field(&sample.omega_sq);
    scaled = scaled.scale(-2.0);
    Ok(scaled.tangential())
}

/// Deform the initial leaf `s = 0` of the hypersurface with data `f0bar`
/// into the leaf `s = f(theta)`, returning the incoming-coordinate graph of
/// the deformed leaf.  Integrates the reparameterisation homotopy from the
/// straight leaf (`t = 0`) to the target (`t = 1`) with RK4.
pub fn graph_transform(
    provider: &SyntheticProvider,
    f0bar: &ScalarField,
    f: &ScalarField,
    opts: &GraphTransformOptions,
) -> Result<GraphTransformResult> {
    let grid = provider.grid();
    grid.check_same(f0bar.grid(), "initial leaf graph")?;
    grid.check_same(f.grid(), "leaf reparameterisation")?;
    let mut fbar = f0bar.clone();
    let mut min_den = f64::INFINITY;
    let n = opts.n_steps.max(1);
    let dt = 1.0 / n as f64;
    for k in 0..n {
        let t0 = k as f64 * dt;
        let s1 = homotopy_rhs(provider, f, &fbar, t0, opts.min_denominator)?;
        let f2 = fbar.add(&s1.rhs.scale(0.5 * dt));
        let s2 = homotopy_rhs(provider, f, &f2, t0 + 0.5 * dt, opts.min_denominator)?;
        let f3 = fbar.add(&s2.rhs.scale(0.5 * dt));
        let s3 = homotopy_rhs(provider, f, &f3, t0 + 0.5 * dt, opts.min_denominator)?;
        let f4 = fbar.add(&s3.rhs.scale(dt));
        let s4 = homotopy_rhs(provider, f, &f4, t0 + dt, opts.min_denominator)?;
        fbar = fbar
            .add(&s1.rhs.add(&s4.rhs).scale(dt / 6.0))
            .add(&s2.rhs.add(&s3.rhs).scale(dt / 3.0))
            .bandlimited();
        min_den = min_den
            .min(s1.min_den)
            .min(s2.min_den)
            .min(s3.min_den)
            .min(s4.min_den);
    }
    Ok(GraphTransformResult {
        fbar,
        min_denominator: min_den,
    })
}

/// Maximum defect of the stored snapshots against the transport equation,
/// measured with centred fourth-order differences across the snapshot
/// ladder (interior samples only).
pub fn transport_residual(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
) -> Result<f64> {
    let n = state.s_samples.len();
    if n < 5 {
        return Err(Error::InvalidArgument(
            "need at least five snapshots for the fourth-order residual".into(),
        ));
    }
    let step = (state.s_max() - state.s_min()) / (n - 1) as f64;
    let mut worst = 0.0f64;
    for k in 2..n - 2 {
        let d = state.snapshots[k - 2]
            .sub(&state.snapshots[k + 2])
            .add(&state.snapshots[k + 1].sub(&state.snapshots[k - 1]).scale(8.0))
            .scale(1.0 / (12.0 * step));
        let rhs = transport_rhs(provider, &state.snapshots[k], state.s_samples[k])?;
        worst = worst.max(d.sub(&rhs).max_abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{PerturbTarget, PerturbationMode, PerturbationRecipe};
    use crate::schwarzschild::SchwarzschildConfig;
    use crate::sphere::Grid;

    fn background(grid: &Grid) -> SyntheticProvider {
        let cfg = SchwarzschildConfig::new(1.0, 0.1).unwrap();
        SyntheticProvider::new(cfg, PerturbationRecipe::background(), grid).unwrap()
    }

    #[test]
    fn constant_data_is_exact_even_with_shift() {
        let grid = Grid::for_bandlimit(8);
        let cfg = SchwarzschildConfig::new(1.0, 0.1).unwrap();
        let recipe = PerturbationRecipe {
            epsilon: 1e-2,
            modes: vec![PerturbationMode {
                l: 3,
                m: 2,
                target: PerturbTarget::Shift,
                amplitude: 0.5,
                decay: 0.0,
            }],
            cutoff_width: None,
        };
        let provider = SyntheticProvider::new(cfg, recipe, &grid).unwrap();
        let f0 = ScalarField::constant(&grid, 0.01);
        let opts = TransportOptions::for_background(1.0);
        let state = evolve_h(&provider, &f0, -0.04, 3.0, &opts).unwrap();
        assert!(state.s_min() < -0.039 && state.s_max() >= 3.0);
        for snap in state.snapshots() {
            assert!(snap.sub(&f0).max_abs() < 1e-14);
        }
        let h = state.h_at(1.2345).unwrap();
        assert!(h.sub(&f0).max_abs() < 1e-12);
    }

    #[test]
    fn rejects_data_outside_smallness_regime() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let opts = TransportOptions::for_background(1.0);
        let big_mean = ScalarField::constant(&grid, 0.09);
        match evolve_h(&provider, &big_mean, 0.0, 1.0, &opts) {
            Err(Error::Regime(_)) => {}
            other => panic!("expected regime rejection, got {:?}", other.map(|_| ())),
        }
        let steep = ScalarField::harmonic(&grid, 2, 1, 0.05.into());
        match evolve_h(&provider, &steep, 0.0, 1.0, &opts) {
            Err(Error::Regime(_)) => {}
            other => panic!("expected regime rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn deformation_response_is_quadratically_small() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let opts = TransportOptions::for_background(1.0);
        let run = |a: f64| {
            let f0 = ScalarField::harmonic(&grid, 1, 0, a.into());
            let state = evolve_h(&provider, &f0, 0.0, 5.0, &opts).unwrap();
            let end = state.h_at(5.0).unwrap();
            end.sub(&f0).max_abs()
        };
        let a = 1e-3;
        let change = run(a);
        assert!(change > 0.0, "integrator must actually move the graph");
        assert!(
            change <= 10.0 * a * a,
            "first-order term should cancel: change {change:.3e} for amplitude {a:.1e}"
        );
        let change_half = run(0.5 * a);
        let ratio = change / change_half;
        assert!(
            (ratio - 4.0).abs() < 0.8,
            "change should scale quadratically, got ratio {ratio:.3}"
        );
    }

    #[test]
    fn mean_is_monotone_for_vanishing_shift() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let opts = TransportOptions::for_background(1.0);
        let f0 = ScalarField::harmonic(&grid, 2, 0, 2e-3.into());
        let state = evolve_h(&provider, &f0, 0.0, 4.0, &opts).unwrap();
        let means: Vec<f64> = state.monitors().iter().map(|m| m.mean).collect();
        for pair in means.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-15,
                "mean must not decrease: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(means[means.len() - 1] > means[0]);
    }

    #[test]
    fn snapshot_residual_drops_with_refinement() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let f0 = ScalarField::harmonic(&grid, 2, 1, 1e-3.into());
        let mut coarse = TransportOptions::for_background(1.0);
        coarse.ds = Some(0.025);
        coarse.store_every = 0.1;
        let mut fine = coarse.clone();
        fine.ds = Some(0.0125);
        fine.store_every = 0.05;
        let res_c = transport_residual(
            &provider,
            &evolve_h(&provider, &f0, 0.0, 4.0, &coarse).unwrap(),
        )
        .unwrap();
        let res_f = transport_residual(
            &provider,
            &evolve_h(&provider, &f0, 0.0, 4.0, &fine).unwrap(),
        )
        .unwrap();
        assert!(res_c > 0.0 && res_f > 0.0);
        assert!(
            res_c / res_f >= 8.0,
            "expected at least eightfold drop, got {res_c:.3e} / {res_f:.3e} = {:.2}",
            res_c / res_f
        );
    }

    #[test]
    fn straight_reparameterisation_matches_interpolated_graph() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let opts = TransportOptions::for_background(1.0);
        let f0 = ScalarField::harmonic(&grid, 1, 1, 1e-3.into());
        let state = evolve_h(&provider, &f0, 0.0, 3.0, &opts).unwrap();
        let f = ScalarField::constant(&grid, 2.0);
        let res = graph_transform(&provider, &f0, &f, &GraphTransformOptions::default()).unwrap();
        let expected = state.h_at(2.0).unwrap();
        assert!(
            res.fbar.sub(&expected).max_abs() < 1e-6,
            "constant reparameterisation defect {:.3e}",
            res.fbar.sub(&expected).max_abs()
        );
        assert!(res.min_denominator > 0.9);
    }

    #[test]
    fn tilted_reparameterisation_matches_composition() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let opts = TransportOptions::for_background(1.0);
        let f0 = ScalarField::harmonic(&grid, 1, 0, 1e-3.into());
        let state = evolve_h(&provider, &f0, -0.02, 3.0, &opts).unwrap();
        let f = ScalarField::constant(&grid, 2.0)
            .add(&ScalarField::harmonic(&grid, 2, 0, 0.05.into()));
        let res = graph_transform(&provider, &f0, &f, &GraphTransformOptions::default()).unwrap();
        let expected = state.h_at_nodes(&f).unwrap();
        assert!(
            res.fbar.sub(&expected).max_abs() < 1e-6,
            "composition defect {:.3e}",
            res.fbar.sub(&expected).max_abs()
        );
    }

    #[test]
    fn steep_reparameterisation_is_rejected_near_characteristic() {
        let grid = Grid::for_bandlimit(8);
        let provider = background(&grid);
        let f0 = ScalarField::constant(&grid, 0.0);
        // A reparameterisation with order-one angular slope relative to the
        // null cone opening angle.
        let f = ScalarField::constant(&grid, 1.0)
            .add(&ScalarField::harmonic(&grid, 1, 0, 4.0.into()));
        let out = graph_transform(&provider, &f0, &f, &GraphTransformOptions::default());
        assert!(matches!(
            out,
            Err(Error::NearCharacteristic(_)) | Err(Error::Regime(_))
        ));
    }
}
