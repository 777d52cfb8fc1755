//! March of the constant-mass-aspect foliation in the area-radius parameter.
//!
//! A foliation leaf is carried by its outgoing graph function `f` on the
//! evolved hypersurface.  Per leaf the pipeline is: build the tilted and
//! leaf-adapted frames ([`DotGeometry`], [`DDotGeometry`]), solve the inverse
//! lapse problem (a Poisson equation for `log a` on the leaf, with the
//! additive constant fixed in closed form by the incoming-expansion
//! normalisation `mean(a tr chibar) = 2/r_u`), rescale to the normalised
//! frame ([`BarGeometry`]) in which the mass aspect function is constant by
//! construction, and advance `f` with a four-stage explicit step of
//! `d f/du = a (1 - b . df)`, re-solving the lapse on every stage leaf.
//!
//! The module also provides the independent local Picard scheme for the same
//! flow, the elliptic residual of the graph equation satisfied by `f`, the
//! transported volume form used to weight norm diagnostics, and a monitor
//! that fits every a-priori bound shape of the underlying scheme against the
//! observed norms.

use std::io::Write;

use crate::elliptic::{apply_lambda, EllipticProblem, LambdaCoefficients};
use crate::error::{Error, Result};
use crate::hypersurface::HypersurfaceState;
use crate::leaf::{
    constraint_residuals, decompose_lo_hi, BarGeometry, ConstraintResiduals, DDotGeometry,
    DotGeometry, FieldValue,
};
use crate::metric::{frame_dot, SyntheticProvider};
use crate::sphere::field::{CovectorField, ScalarField, SymTensor2Field};
use crate::sphere::grid::{coeff_index, Grid};
use crate::sphere::ops::{
    cov_deriv_symtensor, div_round, grad, hessian_round, outer_sym, round_laplacian,
    sobolev_norm, sobolev_norm_covector, sobolev_norm_scalar, sobolev_norm_tensor, MetricOps,
};

// ---------------------------------------------------------------------------
// Inverse lapse solve
// ---------------------------------------------------------------------------

/// Solved leaf lapse together with its residual certificate.
#[derive(Debug, Clone)]
pub struct LapseSolution {
    /// The lapse `a > 0`.
    pub lapse: ScalarField,
    /// `log a`, kept separately for transport diagnostics.
    pub log_lapse: ScalarField,
    /// Round L2 norm of `lap log a - (mu - mean mu)` on the leaf.
    pub identity_residual: f64,
}

/// Solve the inverse lapse problem on a leaf: `lap log a` equals the
/// oscillation of the leaf mass aspect, and the additive constant is fixed by
/// `mean(a tr chibar) = 2 / r_u` (means with respect to the leaf area form).
pub fn lapse_solve(ddot: &DDotGeometry, r_u: f64) -> Result<LapseSolution> {
    if !(r_u > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "area radius must be positive, got {r_u}"
        )));
    }
    let ops = ddot.ops();
    let mean_tr = ops.mean(&ddot.tr_chibar);
    if !(mean_tr > 0.0) {
        return Err(Error::Regime(format!(
            "mean incoming expansion {mean_tr:.3e} is not positive; the \
             normalisation mean(a tr chibar) = 2/r_u has no positive solution"
        )));
    }
    let rhs = ops.oscillation(&ddot.mu);
    let scale = ddot.mu.max_abs().max(1e-300);
    // A spherically symmetric leaf leaves only roundoff in the oscillation;
    // solving for it would trip the relative compatibility check.
    let phi = if rhs.max_abs() <= 1e-10 * scale {
        ScalarField::zeros(rhs.grid())
    } else {
        let problem = EllipticProblem::new(&ddot.metric)?;
        problem.solve_poisson_mean_free(&rhs)?.u
    };
    let exp_phi = phi.map(f64::exp);
    let denom = ops.mean(&exp_phi.mul(&ddot.tr_chibar));
    if !(denom > 0.0) {
        return Err(Error::Regime(format!(
            "lapse normalisation mean {denom:.3e} is not positive"
        )));
    }
    let c = 2.0 / (r_u * denom);
    let lapse = exp_phi.scale(c);
    let log_lapse = phi.add_scalar(c.ln());
    let identity_residual =
        sobolev_norm_scalar(&ops.laplacian(&log_lapse).sub(&rhs), 0, 2.0)?;
    Ok(LapseSolution {
        lapse,
        log_lapse,
        identity_residual,
    })
}

// ---------------------------------------------------------------------------
// Leaf frames and the march velocity
// ---------------------------------------------------------------------------

/// All frame data of one leaf needed by the march.
pub struct LeafFrames {
    pub f: ScalarField,
    pub dot: DotGeometry,
    pub ddot: DDotGeometry,
    pub lapse: LapseSolution,
    /// Area radius of the leaf.
    pub r_u: f64,
    /// Leaf-adapted shift (contravariant rotational components).
    pub shift: CovectorField,
}

impl LeafFrames {
    /// Build the full frame ladder and solve the lapse on the leaf `s = f`.
    pub fn build(
        provider: &SyntheticProvider,
        state: &HypersurfaceState,
        f: &ScalarField,
    ) -> Result<LeafFrames> {
        let dot = DotGeometry::on_leaf(provider, state, f)?;
        let ddot = DDotGeometry::from_dot(&dot)?;
        let r_u = ddot.ops().area_radius();
        let lapse = lapse_solve(&ddot, r_u)?;
        let shift = dot.b.add(&dot.eps_under_vec);
        Ok(LeafFrames {
            f: f.clone(),
            dot,
            ddot,
            lapse,
            r_u,
            shift,
        })
    }

    /// March velocity `df/du = a (1 - shift . df)`.
    pub fn velocity(&self) -> ScalarField {
        let advect = frame_dot(&self.shift, &grad(&self.f));
        self.lapse.lapse.mul(&advect.map(|x| 1.0 - x))
    }

    /// Flow vector `X = a shift` transporting the volume form.
    pub fn flow_vector(&self) -> CovectorField {
        self.shift.mul_scalar_field(&self.lapse.lapse)
    }

    /// Mass aspect of the normalised frame without building the full
    /// [`BarGeometry`]: `mu_bar = mu - lap log a`, returned with its leaf
    /// mean and supremum oscillation.
    pub fn quick_mass_aspect(&self) -> (f64, f64) {
        let ops = self.ddot.ops();
        let mu_bar = self.ddot.mu.sub(&ops.laplacian(&self.lapse.log_lapse));
        let mean = ops.mean(&mu_bar);
        let osc = ops.oscillation(&mu_bar).max_abs();
        (mean, osc)
    }
}

/// Volume-form transport rate: `d phi/du = -phi div X - X . d phi`.
fn phi_velocity(phi: &ScalarField, flow: &CovectorField) -> ScalarField {
    phi.mul(&div_round(flow))
        .add(&frame_dot(flow, &grad(phi)))
        .scale(-1.0)
}

/// Result of one explicit step of the march.
pub struct StepResult {
    pub f: ScalarField,
    pub phi: ScalarField,
}

fn rk_stage(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
    f: &ScalarField,
) -> Result<LeafFrames> {
    LeafFrames::build(provider, state, f)
}

/// One four-stage explicit step of `(f, phi)` starting from prebuilt frames,
/// re-solving the lapse on every stage leaf.
pub fn step_from_frames(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
    frames: &LeafFrames,
    phi: &ScalarField,
    du: f64,
) -> Result<StepResult> {
    let f0 = &frames.f;
    let k1 = frames.velocity();
    let p1 = phi_velocity(phi, &frames.flow_vector());

    let s2 = rk_stage(provider, state, &f0.add(&k1.scale(0.5 * du)))?;
    let k2 = s2.velocity();
    let p2 = phi_velocity(&phi.add(&p1.scale(0.5 * du)), &s2.flow_vector());

    let s3 = rk_stage(provider, state, &f0.add(&k2.scale(0.5 * du)))?;
    let k3 = s3.velocity();
    let p3 = phi_velocity(&phi.add(&p2.scale(0.5 * du)), &s3.flow_vector());

    let s4 = rk_stage(provider, state, &f0.add(&k3.scale(du)))?;
    let k4 = s4.velocity();
    let p4 = phi_velocity(&phi.add(&p3.scale(du)), &s4.flow_vector());

    let combine = |a: &ScalarField, b: &ScalarField, c: &ScalarField, d: &ScalarField| {
        a.add(&b.scale(2.0)).add(&c.scale(2.0)).add(d).scale(du / 6.0)
    };
    Ok(StepResult {
        f: f0.add(&combine(&k1, &k2, &k3, &k4)),
        phi: phi.add(&combine(&p1, &p2, &p3, &p4)),
    })
}

/// One four-stage explicit step of the march from scratch.
pub fn step_u(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
    f: &ScalarField,
    phi: &ScalarField,
    du: f64,
) -> Result<StepResult> {
    let frames = LeafFrames::build(provider, state, f)?;
    step_from_frames(provider, state, &frames, phi, du)
}

// ---------------------------------------------------------------------------
// Mass aspect and the leaf acceleration
// ---------------------------------------------------------------------------

/// Mass aspect of a normalised leaf: the field, its leaf mean, and its
/// supremum oscillation around the mean.
pub fn mass_aspect(bar: &BarGeometry) -> (ScalarField, f64, f64) {
    let ops = bar.ops();
    let mean = ops.mean(&bar.mu);
    let osc = ops.oscillation(&bar.mu).max_abs();
    (bar.mu.clone(), mean, osc)
}

/// Frobenius pairing of a symmetric 2-tensor with a (not necessarily
/// symmetric) second-derivative table, all indices raised with the leaf
/// metric: `t_ab d_cd gi^ac gi^bd`.
fn tensor_dot_table(
    ops: &MetricOps,
    t: &SymTensor2Field,
    d: &crate::sphere::ops::Comp3x3,
) -> ScalarField {
    let grid = t.grid();
    let (n_lat, n_lon) = grid.shape();
    let gi = ops.inverse();
    let mut out = ndarray::Array2::zeros((n_lat, n_lon));
    for i in 0..n_lat {
        for j in 0..n_lon {
            let gim = gi.matrix(i, j);
            let tm = t.matrix(i, j);
            let lifted = gim * tm * gim;
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += lifted[(a, b)] * d[a][b][[i, j]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    ScalarField::from_values(grid, out)
}

/// Solved leaf acceleration with the compatibility defect of its source.
#[derive(Debug, Clone)]
pub struct AccelerationSolution {
    pub omegabar: ScalarField,
    /// Mean of the raw elliptic source before projection; analytically zero.
    pub compat_defect: f64,
}

/// Solve the elliptic equation for the normalised-frame acceleration on a
/// leaf: twice its Laplacian balances the oscillation of the mass-aspect
/// production terms, and the mean follows from an exact quadrature formula.
pub fn acceleration_solve(bar: &BarGeometry) -> Result<AccelerationSolution> {
    let ops = bar.ops();
    let eta_sq = ops.norm_sq_cov(&bar.eta);
    let shear_sq = ops.dot_tensor(&bar.chibarhat, &bar.chibarhat);
    let div_shear = ops.div_tensor(&bar.chibarhat);
    let grad_eta = ops.cov_deriv_cov(&bar.eta);

    let rhs = ops
        .oscillation(&bar.mu.mul(&bar.tr_chibar))
        .scale(-1.5)
        .add(&ops.oscillation(&bar.tr_chibar.mul(&eta_sq)).scale(0.5))
        .add(&ops.oscillation(&bar.tr_chi_prime.mul(&shear_sq)).scale(0.25))
        .add(&ops.dot_cov(&div_shear, &bar.eta).scale(4.0))
        .add(&tensor_dot_table(ops, &bar.chibarhat, &grad_eta).scale(4.0))
        .sub(&ops.div_cov(&bar.beta_under).scale(2.0));
    let compat_defect = ops.mean(&rhs).abs();
    let rhs_osc = ops.oscillation(&rhs).scale(0.5);

    let scale = rhs.max_abs().max(
        (bar.mu.max_abs() * bar.tr_chibar.max_abs()).max(1e-300),
    );
    let osc_part = if rhs_osc.max_abs() <= 1e-10 * scale {
        ScalarField::zeros(rhs.grid())
    } else {
        let problem = EllipticProblem::new(&bar.metric)?;
        problem.solve_poisson_mean_free(&rhs_osc)?.u
    };

    let osc_tr = ops.oscillation(&bar.tr_chibar);
    let mean = -0.5 * bar.r_u * ops.mean(&osc_part.mul(&osc_tr))
        - 0.125 * bar.r_u * ops.mean(&osc_tr.mul(&osc_tr))
        + 0.25 * bar.r_u * ops.mean(&shear_sq);
    Ok(AccelerationSolution {
        omegabar: osc_part.add_scalar(mean),
        compat_defect,
    })
}

// ---------------------------------------------------------------------------
// Per-leaf norm record for the bound monitor
// ---------------------------------------------------------------------------

/// Closed-form background values of a reference leaf at the same parameter.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceValues {
    /// Reference area radius `r0 + u` shifted by the initial radius.
    pub r_s: f64,
    /// Reference outgoing coordinate of the leaf.
    pub s_s: f64,
    /// Reference lapse.
    pub lapse_s: f64,
}

/// Scalar norms of one leaf, measured once at acceptance so the bound
/// monitor never needs the stored fields.
#[derive(Debug, Clone, Copy)]
pub struct LeafNorms {
    pub grad_fbar: f64,
    pub mean_fbar: f64,
    pub slope_restriction: f64,
    pub hessian_restriction: f64,
    pub mean_f: f64,
    pub grad_f: f64,
    pub lapse_dev: f64,
    pub grad_lapse: f64,
    pub metric_dev: f64,
    pub grad_metric: f64,
    pub tr_chibar_mean_gap: f64,
    pub grad_tr_chibar: f64,
    pub chibarhat: f64,
    pub tr_chi_prime_mean_gap: f64,
    pub grad_tr_chi_prime: f64,
    pub chihat_prime: f64,
    pub eta: f64,
    pub omegabar_mean_abs: f64,
    pub grad_omegabar: f64,
    pub mu_gap: f64,
    pub beta_under: f64,
    pub rho_mean_gap: f64,
    pub grad_rho: f64,
    pub sigma: f64,
    pub beta: f64,
}

fn measure_norms(
    frames: &LeafFrames,
    bar: &BarGeometry,
    reference: ReferenceValues,
    r0: f64,
    n: usize,
    p: f64,
) -> Result<LeafNorms> {
    let dot = &frames.dot;
    let grid = frames.f.grid();
    let ops = bar.ops();
    let df = grad(&frames.f);

    // Fixed-coordinate second derivatives of the hypersurface graph function
    // restricted to the leaf, reassembled from the composite derivatives and
    // the graph slopes.
    let hess_h = {
        let v = grad(&dot.h_s).sub(&df.mul_scalar_field(&dot.h_ss));
        hessian_round(&dot.fbar)
            .sub(&outer_sym(&df, &v).scale(2.0))
            .sub(&outer_sym(&df, &df).mul_scalar_field(&dot.h_ss))
            .sub(&hessian_round(&frames.f).mul_scalar_field(&dot.h_s))
    };

    let grad_metric = {
        let comps = cov_deriv_symtensor(&bar.metric);
        let refs: Vec<&ndarray::Array2<f64>> = comps.iter().collect();
        sobolev_norm(grid, &refs, n, p)?
    };

    let metric_dev = bar
        .metric
        .sub(&SymTensor2Field::round_metric(grid).scale(reference.r_s * reference.r_s))
        .max_abs();
    let order = n.saturating_sub(1);
    let omegabar = bar.omegabar.as_ref().ok_or_else(|| {
        Error::InvalidArgument("leaf acceleration not solved before norm measurement".into())
    })?;
    let r_s = reference.r_s;

    Ok(LeafNorms {
        grad_fbar: sobolev_norm_covector(&grad(&dot.fbar), n, p)?,
        mean_fbar: dot.fbar.round_mean(),
        slope_restriction: sobolev_norm_covector(&dot.h_cov, n + 1, p)?,
        hessian_restriction: sobolev_norm_tensor(&hess_h, n, p)?,
        mean_f: frames.f.round_mean(),
        grad_f: sobolev_norm_covector(&df, n + 1, p)?,
        lapse_dev: frames.lapse.lapse.map(|x| x - reference.lapse_s).max_abs(),
        grad_lapse: sobolev_norm_covector(&grad(&frames.lapse.lapse), n, p)?,
        metric_dev,
        grad_metric,
        tr_chibar_mean_gap: (ops.mean(&bar.tr_chibar) - 2.0 / r_s).abs(),
        grad_tr_chibar: sobolev_norm_covector(&grad(&bar.tr_chibar), order, p)?,
        chibarhat: sobolev_norm_tensor(&bar.chibarhat, n, p)?,
        tr_chi_prime_mean_gap: (ops.mean(&bar.tr_chi_prime)
            - 2.0 / r_s * (1.0 - r0 / r_s))
            .abs(),
        grad_tr_chi_prime: sobolev_norm_covector(&grad(&bar.tr_chi_prime), order, p)?,
        chihat_prime: sobolev_norm_tensor(&bar.chihat_prime, n, p)?,
        eta: sobolev_norm_covector(&bar.eta, n + 1, p)?,
        omegabar_mean_abs: ops.mean(omegabar).abs(),
        grad_omegabar: sobolev_norm_covector(&grad(omegabar), n, p)?,
        mu_gap: (ops.mean(&bar.mu) - r0 / (r_s * r_s * r_s)).abs(),
        beta_under: sobolev_norm_covector(&bar.beta_under, n, p)?,
        rho_mean_gap: (ops.mean(&bar.rho) + r0 / (r_s * r_s * r_s)).abs(),
        grad_rho: sobolev_norm_covector(&grad(&bar.rho), order, p)?,
        sigma: sobolev_norm_scalar(&bar.sigma, n, p)?,
        beta: sobolev_norm_covector(&bar.beta, n, p)?,
    })
}

// ---------------------------------------------------------------------------
// Stored leaves and the trajectory
// ---------------------------------------------------------------------------

/// One accepted leaf with its diagnostics.
pub struct Leaf {
    pub u: f64,
    pub r_u: f64,
    pub f: ScalarField,
    pub fbar: ScalarField,
    pub log_lapse: ScalarField,
    pub lapse_min: f64,
    pub lapse_max: f64,
    /// Normalised leaf geometry; the acceleration is solved and stored.
    pub bar: BarGeometry,
    /// Flow vector `a shift` used for transport diagnostics.
    pub flow: CovectorField,
    /// Leaf-frame acceleration before normalisation, for the lapse-transport
    /// cross-check.
    pub omegabar_dot: ScalarField,
    /// Transported volume form.
    pub phi: ScalarField,
    /// Round integral of the transported volume form (conserved).
    pub volume_integral: f64,
    pub mu_mean: f64,
    pub mu_osc: f64,
    pub hawking: f64,
    pub residuals: ConstraintResiduals,
    pub lapse_identity_residual: f64,
    pub acceleration_compat_defect: f64,
    /// `|mean(a tr chibar) - 2/r_u|` normalisation certificate.
    pub normalisation_gap: f64,
    /// Mean mass-aspect production rate (the transport law's right side).
    pub mu_mean_rate: f64,
    /// Closed-form background comparison values at this parameter.
    pub reference: ReferenceValues,
    pub norms: LeafNorms,
}

/// March controls and tolerances.
#[derive(Debug, Clone)]
pub struct FoliationOptions {
    pub u_max: f64,
    /// Initial step.
    pub du0: f64,
    /// Step-size ceiling.
    pub du_max: f64,
    /// Growth factor applied when all residuals sit below a tenth of their
    /// tolerances.
    pub grow_factor: f64,
    /// Consecutive rejected halvings before the march halts gracefully.
    pub max_rejects: usize,
    /// Mass-aspect oscillation tolerance.
    pub tol_mu: f64,
    /// Area-radius drift tolerance.
    pub tol_r: f64,
    /// Extra factor on `tol_mu` for runs on perturbed ambient metrics.
    pub mu_tol_scale: f64,
    /// Storage cadence in `u`; the initial and final leaves are always kept.
    pub store_every: f64,
    pub sobolev_n: usize,
    pub sobolev_p: f64,
}

impl FoliationOptions {
    pub fn for_background(r0: f64, u_max: f64) -> FoliationOptions {
        FoliationOptions {
            u_max,
            du0: 0.05 * r0,
            du_max: 2.0 * r0,
            grow_factor: 1.5,
            max_rejects: 5,
            tol_mu: 1e-8 / (r0 * r0),
            tol_r: 1e-8 * r0,
            mu_tol_scale: 1.0,
            store_every: 0.5 * r0,
            sobolev_n: 3,
            sobolev_p: 2.0,
        }
    }
}

/// March statistics.
#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub du_min: f64,
    pub du_max: f64,
}

/// The computed foliation: stored leaves, march statistics, and the halt
/// reason if the step controller gave up before `u_max`.
pub struct FoliationTrajectory {
    pub r0: f64,
    /// Area radius of the initial leaf.
    pub rbar0: f64,
    /// Reference-foliation anchor: incoming coordinate and initial reference
    /// area radius of the spherically symmetric comparison.
    pub sbar_ref: f64,
    pub rbar0_ref: f64,
    pub leaves: Vec<Leaf>,
    pub stats: SolverStats,
    pub halted: Option<String>,
}

fn reference_values(
    provider: &SyntheticProvider,
    sbar_ref: f64,
    rbar0_ref: f64,
    u: f64,
) -> Result<ReferenceValues> {
    let config = provider.config();
    let r0 = config.r0;
    let r_s = rbar0_ref + u;
    let s_s = config.s_from_radius(sbar_ref, r_s)?;
    // Finite form of `r s / ((s + r0)(r - r0))` through the chart relation.
    let lapse_s = r_s / (s_s + r0) * (-(sbar_ref + s_s + r0 - r_s) / r0).exp();
    Ok(ReferenceValues { r_s, s_s, lapse_s })
}

fn build_leaf(
    provider: &SyntheticProvider,
    frames: &LeafFrames,
    phi: &ScalarField,
    u: f64,
    reference: ReferenceValues,
    opts: &FoliationOptions,
) -> Result<Leaf> {
    let mut bar = BarGeometry::rescale(&frames.ddot, &frames.lapse.lapse)?;
    let accel = acceleration_solve(&bar)?;
    bar.omegabar = Some(accel.omegabar);
    let (_, mu_mean, mu_osc) = mass_aspect(&bar);
    let hawking = bar.hawking_mass();
    let residuals = constraint_residuals(&bar, opts.sobolev_n, opts.sobolev_p)?;
    let ops = bar.ops();
    let normalisation_gap = (ops.mean(
        &frames
            .lapse
            .lapse
            .mul(&frames.ddot.tr_chibar),
    ) - 2.0 / frames.r_u)
        .abs();
    let mu_mean_rate = {
        let eta_sq = ops.norm_sq_cov(&bar.eta);
        let shear_sq = ops.dot_tensor(&bar.chibarhat, &bar.chibarhat);
        -1.5 * mu_mean * ops.mean(&bar.tr_chibar)
            + 0.25 * ops.mean(&bar.tr_chi_prime.mul(&shear_sq))
            + 0.5 * ops.mean(&bar.tr_chibar.mul(&eta_sq))
    };
    let norms = measure_norms(
        frames,
        &bar,
        reference,
        provider.config().r0,
        opts.sobolev_n,
        opts.sobolev_p,
    )?;
    Ok(Leaf {
        u,
        r_u: frames.r_u,
        f: frames.f.clone(),
        fbar: frames.dot.fbar.clone(),
        log_lapse: frames.lapse.log_lapse.clone(),
        lapse_min: frames.lapse.lapse.min_value(),
        lapse_max: frames.lapse.lapse.max_value(),
        bar,
        flow: frames.flow_vector(),
        omegabar_dot: frames.ddot.omegabar.clone(),
        phi: phi.clone(),
        volume_integral: phi.round_integral(),
        mu_mean,
        mu_osc,
        hawking,
        residuals,
        lapse_identity_residual: frames.lapse.identity_residual,
        acceleration_compat_defect: accel.compat_defect,
        normalisation_gap,
        mu_mean_rate,
        reference,
        norms,
    })
}

/// March the foliation from the initial leaf `s = f0` to `u_max`.
pub fn run_foliation(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
    f0: &ScalarField,
    opts: &FoliationOptions,
) -> Result<FoliationTrajectory> {
    let r0 = provider.config().r0;
    if !(opts.u_max >= 0.0 && opts.du0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "march needs u_max >= 0 and du0 > 0, got {} and {}",
            opts.u_max, opts.du0
        )));
    }
    let mut frames = LeafFrames::build(provider, state, f0)?;
    let mut phi = ScalarField::constant(f0.grid(), 1.0);
    let rbar0 = frames.r_u;
    let sbar_ref = frames.dot.fbar.round_mean();
    let s0_ref = f0.round_mean();
    let rbar0_ref = provider.config().radius_from_coords(sbar_ref, s0_ref)?;

    let mut leaves = Vec::new();
    let mut stats = SolverStats {
        du_min: f64::INFINITY,
        ..SolverStats::default()
    };
    let tol_mu = opts.tol_mu * opts.mu_tol_scale;

    let reference = reference_values(provider, sbar_ref, rbar0_ref, 0.0)?;
    leaves.push(build_leaf(provider, &frames, &phi, 0.0, reference, opts)?);
    let mut next_store = opts.store_every;

    let mut u = 0.0;
    let mut du = opts.du0.min(opts.du_max);
    let mut rejects = 0usize;
    let mut halted = None;

    while u < opts.u_max - 1e-12 * r0 {
        du = du.min(opts.u_max - u);
        let trial = match step_from_frames(provider, state, &frames, &phi, du)
            .and_then(|step| {
                let new_frames = LeafFrames::build(provider, state, &step.f)?;
                Ok((step, new_frames))
            }) {
            Ok(t) => Some(t),
            Err(Error::InvalidArgument(msg)) => {
                // The hypersurface ladder ran out; no step size fixes that.
                return Err(Error::InvalidArgument(msg));
            }
            Err(_) => None,
        };

        let accepted = trial.and_then(|(step, new_frames)| {
            let drift = (new_frames.r_u - (rbar0 + u + du)).abs();
            let (_, mu_osc) = new_frames.quick_mass_aspect();
            let mu_ok = mu_osc <= tol_mu
                || mu_osc <= 10.0 * new_frames.lapse.identity_residual;
            if drift <= opts.tol_r && mu_ok {
                Some((step, new_frames, drift, mu_osc))
            } else {
                None
            }
        });

        match accepted {
            Some((step, new_frames, drift, mu_osc)) => {
                u += du;
                frames = new_frames;
                phi = step.phi;
                stats.accepted += 1;
                stats.du_min = stats.du_min.min(du);
                stats.du_max = stats.du_max.max(du);
                rejects = 0;
                if u >= next_store - 1e-9 * r0 || u >= opts.u_max - 1e-12 * r0 {
                    let reference =
                        reference_values(provider, sbar_ref, rbar0_ref, u)?;
                    leaves.push(build_leaf(
                        provider, &frames, &phi, u, reference, opts,
                    )?);
                    while next_store <= u + 1e-9 * r0 {
                        next_store += opts.store_every;
                    }
                }
                if drift < 0.1 * opts.tol_r && mu_osc < 0.1 * tol_mu.max(1e-300) {
                    du = (du * opts.grow_factor).min(opts.du_max);
                }
            }
            None => {
                stats.rejected += 1;
                rejects += 1;
                if rejects > opts.max_rejects {
                    halted = Some(format!(
                        "step controller gave up at u = {u:.6e} after {rejects} \
                         consecutive rejections (last du = {du:.3e})"
                    ));
                    break;
                }
                du *= 0.5;
            }
        }
    }

    if stats.accepted == 0 {
        stats.du_min = 0.0;
    }
    Ok(FoliationTrajectory {
        r0,
        rbar0,
        sbar_ref,
        rbar0_ref,
        leaves,
        stats,
        halted,
    })
}

// ---------------------------------------------------------------------------
// Trajectory diagnostics
// ---------------------------------------------------------------------------

/// Nonuniform three-point first-derivative weights at the middle node.
fn central_weights(h0: f64, h1: f64) -> (f64, f64, f64) {
    let a = -h1 / (h0 * (h0 + h1));
    let c = h0 / (h1 * (h0 + h1));
    (a, -(a + c), c)
}

impl FoliationTrajectory {
    pub fn hawking_series(&self) -> Vec<(f64, f64)> {
        self.leaves.iter().map(|l| (l.u, l.hawking)).collect()
    }

    pub fn mu_mean_series(&self) -> Vec<(f64, f64)> {
        self.leaves.iter().map(|l| (l.u, l.mu_mean)).collect()
    }

    /// Deviation of the transported volume-form integral from its initial
    /// value, per stored leaf.
    pub fn volume_conservation(&self) -> Vec<(f64, f64)> {
        let first = match self.leaves.first() {
            Some(l) => l.volume_integral,
            None => return Vec::new(),
        };
        self.leaves
            .iter()
            .map(|l| (l.u, (l.volume_integral - first).abs()))
            .collect()
    }

    /// Residual of the lapse-transport law
    /// `(d/du + X . d) log a = 2 omegabar - 2 a omegabar_leaf`
    /// at interior stored leaves, by nonuniform differencing of the stored
    /// `log a` fields.  Returns `(u, round L2 residual)` rows.
    pub fn lapse_transport_gap(&self) -> Result<Vec<(f64, f64)>> {
        let mut rows = Vec::new();
        for k in 1..self.leaves.len().saturating_sub(1) {
            let (lo, mid, hi) = (&self.leaves[k - 1], &self.leaves[k], &self.leaves[k + 1]);
            let (w0, w1, w2) = central_weights(mid.u - lo.u, hi.u - mid.u);
            let d_du = lo
                .log_lapse
                .scale(w0)
                .add(&mid.log_lapse.scale(w1))
                .add(&hi.log_lapse.scale(w2));
            let advect = frame_dot(&mid.flow, &grad(&mid.log_lapse));
            let omegabar = mid.bar.omegabar.as_ref().ok_or_else(|| {
                Error::InvalidArgument("stored leaf lacks the solved acceleration".into())
            })?;
            let lapse = mid.log_lapse.map(f64::exp);
            let rhs = omegabar
                .scale(2.0)
                .sub(&lapse.mul(&mid.omegabar_dot).scale(2.0));
            let gap = sobolev_norm_scalar(&d_du.add(&advect).sub(&rhs), 0, 2.0)?;
            rows.push((mid.u, gap));
        }
        Ok(rows)
    }

    /// Gap between the differenced mean mass aspect and its transport law,
    /// `(u, |d(mean mu)/du - rate|)` at interior stored leaves.
    pub fn mu_mean_transport_gap(&self) -> Vec<(f64, f64)> {
        let mut rows = Vec::new();
        for k in 1..self.leaves.len().saturating_sub(1) {
            let (lo, mid, hi) = (&self.leaves[k - 1], &self.leaves[k], &self.leaves[k + 1]);
            let (w0, w1, w2) = central_weights(mid.u - lo.u, hi.u - mid.u);
            let d_du = w0 * lo.mu_mean + w1 * mid.mu_mean + w2 * hi.mu_mean;
            rows.push((mid.u, (d_du - mid.mu_mean_rate).abs()));
        }
        rows
    }

    /// Per-leaf CSV: one row per stored leaf with the march diagnostics.
    /// When a bound report is supplied, the flag column counts its entries
    /// whose fitted ratio at that leaf exceeds twice the entry's first
    /// nonzero ratio.
    pub fn write_csv<W: Write>(&self, report: Option<&BoundReport>, mut w: W) -> Result<()> {
        writeln!(
            w,
            "u,r_u,mu_mean,mu_osc,hawking_mass,max_constraint_residual,lapse_min,lapse_max,flags"
        )?;
        for (i, leaf) in self.leaves.iter().enumerate() {
            let flags = report.map_or(0, |rep| {
                rep.entries
                    .iter()
                    .filter(|e| {
                        let base = e
                            .ratio
                            .iter()
                            .copied()
                            .find(|r| *r > 0.0)
                            .unwrap_or(0.0);
                        base > 0.0 && e.ratio.get(i).copied().unwrap_or(0.0) > 2.0 * base
                    })
                    .count()
            });
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                leaf.u,
                leaf.r_u,
                leaf.mu_mean,
                leaf.mu_osc,
                leaf.hawking,
                leaf.residuals.max_l2(),
                leaf.lapse_min,
                leaf.lapse_max,
                flags
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Elliptic residual of the graph equation
// ---------------------------------------------------------------------------

/// Residual certificate of the elliptic graph equation on one leaf.
pub struct GraphEquationReport {
    /// Pointwise misfit between the stability operator applied to the
    /// mean-free graph function and its assembled source.
    pub residual: ScalarField,
    /// Round L2 norm of the misfit.
    pub l2: f64,
    pub coeffs: LambdaCoefficients,
}

/// Evaluate the elliptic equation satisfied by the leaf graph function: the
/// stability operator applied to the mean-free part of `f` balances the
/// oscillation of the outgoing expansion around its linearisation at the
/// mean leaf.  The assembly routes each term through independent closed
/// forms, so the residual certifies the consistency of the whole frame
/// ladder at roundoff level on a converged leaf.
pub fn f_elliptic_residual(
    provider: &SyntheticProvider,
    dot: &DotGeometry,
    ddot: &DDotGeometry,
) -> Result<GraphEquationReport> {
    let r0 = provider.config().r0;
    let f = &dot.f;
    let mean_fbar = dot.fbar.round_mean();
    let mean_f = f.round_mean();
    let r_mean = provider.config().radius_from_coords(mean_fbar, mean_f)?;
    let coeffs = LambdaCoefficients {
        r_s: r_mean,
        mean_fbar: mean_f,
        r0,
    };

    let osc_round = |g: &ScalarField| g.add_scalar(-g.round_mean());
    let osc_f = osc_round(f);
    let lhs = apply_lambda(coeffs, &osc_f)?.scale(2.0 / (r_mean * r_mean));

    // Outgoing-expansion closed form per node and at the mean leaf.
    let tr_nodes = {
        let r = &dot.sample.r;
        let denom = r.mul(&f.add_scalar(r0));
        f.scale(2.0).div(&denom)
    };
    let tr_mean = 2.0 * mean_f / (r_mean * (mean_f + r0));
    let ds_tr_mean = -2.0 * (r_mean - r0) / (r_mean * r_mean * r_mean)
        + 2.0 * r0 / (r_mean * (r0 + mean_f) * (r0 + mean_f));

    let lap_f = round_laplacian(f);
    let inv_r_sq = dot.sample.r.map(|r| 1.0 / (r * r));

    let term1 = osc_round(
        &tr_nodes
            .add_scalar(-tr_mean)
            .sub(&osc_f.scale(ds_tr_mean)),
    )
    .scale(-1.0);
    let term2 = osc_round(
        &inv_r_sq
            .add_scalar(-1.0 / (r_mean * r_mean))
            .mul(&lap_f),
    )
    .scale(2.0);
    let term3 = osc_round(&ddot.tr_chi_prime);
    let (_, hi) = decompose_lo_hi("tr_chi_prime_ddot", dot, ddot)?;
    let term4 = match hi {
        FieldValue::Scalar(h) => osc_round(&h).scale(-1.0),
        _ => unreachable!("trace split returns a scalar"),
    };

    let residual = lhs
        .sub(&term1)
        .sub(&term2)
        .sub(&term3)
        .sub(&term4);
    let l2 = sobolev_norm_scalar(&residual, 0, 2.0)?;
    Ok(GraphEquationReport {
        residual,
        l2,
        coeffs,
    })
}

/// Spectral transfer of a scalar field onto another grid, keeping the
/// shared harmonic band.
pub fn transfer_scalar(f: &ScalarField, grid: &Grid) -> ScalarField {
    let mut coeffs = vec![num_complex::Complex64::new(0.0, 0.0); grid.spec().n_coeffs()];
    let l_common = f.grid().bandlimit().min(grid.bandlimit());
    for l in 0..=l_common {
        for m in -(l as i64)..=(l as i64) {
            coeffs[coeff_index(l, m)] = f.coeff(l, m);
        }
    }
    ScalarField::from_coeffs(grid, coeffs)
}

/// Distance between two graph functions measured through the stability
/// operator: round L2 norm of the operator applied to the mean-free part of
/// their difference on the finer grid.
pub fn lambda_distance(
    coeffs: LambdaCoefficients,
    coarse: &ScalarField,
    fine: &ScalarField,
) -> Result<f64> {
    let moved = transfer_scalar(coarse, fine.grid());
    let diff = moved.sub(fine);
    let osc = diff.add_scalar(-diff.round_mean());
    sobolev_norm_scalar(&apply_lambda(coeffs, &osc)?, 0, 2.0)
}

// ---------------------------------------------------------------------------
// Local Picard scheme
// ---------------------------------------------------------------------------

/// Outcome of the local fixed-point scheme over one parameter window.
pub struct PicardReport {
    /// Successive-difference norms per iterate.
    pub diff_norms: Vec<f64>,
    /// Ratios of consecutive difference norms.
    pub ratios: Vec<f64>,
    pub contracting: bool,
    /// Final iterate at the window end.
    pub f_end: ScalarField,
    pub iterations: usize,
}

/// Hermite evaluation of a trajectory stored as node values and slopes.
fn hermite_eval(
    us: &[f64],
    values: &[ScalarField],
    slopes: &[ScalarField],
    u: f64,
) -> ScalarField {
    let n = us.len();
    let mut k = match us.partition_point(|x| *x <= u) {
        0 => 0,
        idx => idx - 1,
    };
    if k >= n - 1 {
        k = n - 2;
    }
    let h = us[k + 1] - us[k];
    let t = ((u - us[k]) / h).clamp(0.0, 1.0);
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    values[k]
        .scale(h00)
        .add(&slopes[k].scale(h10 * h))
        .add(&values[k + 1].scale(h01))
        .add(&slopes[k + 1].scale(h11 * h))
}

/// Run the local fixed-point scheme on the window `[0, du]` past the leaf
/// `s = f_a`: the zeroth iterate translates the leaf at unit rate, and each
/// subsequent iterate solves the linear advection problem whose lapse and
/// shift are frozen on the previous iterate's leaves.
pub fn picard_local(
    provider: &SyntheticProvider,
    state: &HypersurfaceState,
    f_a: &ScalarField,
    du: f64,
    substeps: usize,
    k_max: usize,
    n: usize,
    p: f64,
) -> Result<PicardReport> {
    if !(du > 0.0) || substeps == 0 || k_max == 0 {
        return Err(Error::InvalidArgument(format!(
            "window needs du > 0, substeps > 0, k_max > 0; got {du}, {substeps}, {k_max}"
        )));
    }
    let r0 = provider.config().r0;
    let h = du / substeps as f64;
    let us: Vec<f64> = (0..=substeps).map(|j| j as f64 * h).collect();

    // Zeroth iterate: translate at unit rate.
    let mut prev: Vec<ScalarField> = us.iter().map(|u| f_a.add_scalar(*u)).collect();
    let mut prev_slopes: Vec<ScalarField> =
        us.iter().map(|_| ScalarField::constant(f_a.grid(), 1.0)).collect();

    let mut diff_norms = Vec::new();
    let mut iterations = 0;

    for _ in 0..k_max {
        iterations += 1;
        // Coefficients of the frozen advection problem at a window time.
        let coeff_at = |u: f64| -> Result<(ScalarField, CovectorField)> {
            let base = hermite_eval(&us, &prev, &prev_slopes, u);
            let frames = LeafFrames::build(provider, state, &base)?;
            Ok((frames.lapse.lapse, frames.shift))
        };
        let rhs = |f: &ScalarField, coeff: &(ScalarField, CovectorField)| {
            let advect = frame_dot(&coeff.1, &grad(f));
            coeff.0.mul(&advect.map(|x| 1.0 - x))
        };

        let mut values = Vec::with_capacity(substeps + 1);
        let mut slopes = Vec::with_capacity(substeps + 1);
        let mut coeff_lo = coeff_at(us[0])?;
        values.push(f_a.clone());
        slopes.push(rhs(f_a, &coeff_lo));
        for j in 0..substeps {
            let coeff_mid = coeff_at(us[j] + 0.5 * h)?;
            let coeff_hi = coeff_at(us[j + 1])?;
            let fj = &values[j];
            let k1 = rhs(fj, &coeff_lo);
            let k2 = rhs(&fj.add(&k1.scale(0.5 * h)), &coeff_mid);
            let k3 = rhs(&fj.add(&k2.scale(0.5 * h)), &coeff_mid);
            let k4 = rhs(&fj.add(&k3.scale(h)), &coeff_hi);
            let next = fj.add(
                &k1.add(&k2.scale(2.0))
                    .add(&k3.scale(2.0))
                    .add(&k4)
                    .scale(h / 6.0),
            );
            slopes.push(rhs(&next, &coeff_hi));
            values.push(next);
            coeff_lo = coeff_hi;
        }

        let mut diff: f64 = 0.0;
        for j in 0..=substeps {
            diff = diff.max(sobolev_norm_scalar(&values[j].sub(&prev[j]), n + 1, p)?);
        }
        diff_norms.push(diff);
        prev = values;
        prev_slopes = slopes;
        if diff <= 1e-13 * r0 {
            break;
        }
    }

    let ratios: Vec<f64> = diff_norms
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    let contracting = match ratios.last() {
        Some(r) => *r < 1.0,
        // A single vanishing difference means the first iterate was exact.
        None => diff_norms.first().map_or(false, |d| *d <= 1e-13 * r0),
    };
    Ok(PicardReport {
        diff_norms,
        ratios,
        contracting,
        f_end: prev.last().expect("window has at least one node").clone(),
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Bound monitor
// ---------------------------------------------------------------------------

/// Smallness parameters of a run: ambient perturbation strength and the
/// oscillation/mean sizes of the outgoing and incoming initial data.
#[derive(Debug, Clone, Copy)]
pub struct SmallnessInputs {
    pub eps: f64,
    pub delta_o: f64,
    pub delta_m: f64,
    pub delta_uo: f64,
    pub delta_um: f64,
}

/// Smallness parameters derived from the inputs (unit bookkeeping
/// constants; every fixed constant is absorbed into the fitted ratios).
#[derive(Debug, Clone, Copy)]
pub struct DerivedSmallness {
    /// Oscillation size of the transported incoming graph.
    pub d_uo: f64,
    /// Mean size of the transported incoming graph.
    pub d_um: f64,
    /// Mean drift of the incoming graph along the evolution.
    pub d_um_drift: f64,
    /// Combined oscillation/restriction size of the incoming graph.
    pub d_oh: f64,
}

impl SmallnessInputs {
    pub fn derived(&self) -> DerivedSmallness {
        let SmallnessInputs {
            eps,
            delta_uo,
            delta_um,
            ..
        } = *self;
        DerivedSmallness {
            d_uo: delta_uo,
            d_um: (1.0 + eps * delta_uo) * delta_um + delta_uo * delta_uo,
            d_um_drift: eps * delta_uo * delta_um + delta_uo * delta_uo,
            d_oh: delta_uo,
        }
    }
}

/// One monitored bound: observed norms, the bound shape evaluated with the
/// supplied smallness parameters, and the fitted constant.
pub struct BoundEntry {
    pub name: &'static str,
    pub observed: Vec<f64>,
    pub shape: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Largest observed/shape ratio along the run.
    pub fitted: f64,
    /// Largest over smallest nonzero ratio.
    pub variation: f64,
    /// Set when the ratio both varies beyond a factor two and peaks in the
    /// final third of the run.
    pub growing: bool,
}

/// Initial-leaf check row: name, observed value, admissible bound.
pub struct InitialLeafCheck {
    pub name: &'static str,
    pub observed: f64,
    pub bound: f64,
}

/// Full monitor output.
pub struct BoundReport {
    pub inputs: SmallnessInputs,
    pub derived: DerivedSmallness,
    pub us: Vec<f64>,
    pub entries: Vec<BoundEntry>,
    pub initial_leaf: Vec<InitialLeafCheck>,
}

fn make_entry(name: &'static str, us: &[f64], observed: Vec<f64>, shape: Vec<f64>) -> BoundEntry {
    let floor = observed
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        * 1e-10;
    let ratio: Vec<f64> = observed
        .iter()
        .zip(&shape)
        .map(|(o, s)| {
            if *o <= floor || *s <= 0.0 {
                0.0
            } else {
                o / s
            }
        })
        .collect();
    let fitted = ratio.iter().fold(0.0f64, |m, r| m.max(*r));
    let nonzero: Vec<f64> = ratio.iter().copied().filter(|r| *r > 0.0).collect();
    let variation = if nonzero.len() >= 2 {
        let lo = nonzero.iter().fold(f64::INFINITY, |m, r| m.min(*r));
        if lo > 0.0 {
            fitted / lo
        } else {
            1.0
        }
    } else {
        1.0
    };
    let peak_idx = ratio
        .iter()
        .enumerate()
        .fold((0usize, 0.0f64), |acc, (i, r)| {
            if *r > acc.1 {
                (i, *r)
            } else {
                acc
            }
        })
        .0;
    // Roundoff-level ratios carry no information; only flag growth when the
    // bound is actually being exercised.
    let growing =
        fitted > 1e-6 && variation > 2.0 && us.len() > 2 && peak_idx * 3 >= 2 * us.len();
    BoundEntry {
        name,
        observed,
        shape,
        ratio,
        fitted,
        variation,
        growing,
    }
}

/// Fit every a-priori bound shape against the observed norms of a stored
/// trajectory.
pub fn bootstrap_monitor(
    traj: &FoliationTrajectory,
    inputs: SmallnessInputs,
) -> BoundReport {
    let derived = inputs.derived();
    let r0 = traj.r0;
    let us: Vec<f64> = traj.leaves.iter().map(|l| l.u).collect();
    let r_s: Vec<f64> = us.iter().map(|u| traj.rbar0_ref + u).collect();

    let q_o = inputs.eps + inputs.delta_o + derived.d_oh;
    let q_m = inputs.eps + inputs.delta_o + inputs.delta_m;
    let q_all = q_m + derived.d_oh + derived.d_um_drift;

    let col = |g: &dyn Fn(&Leaf) -> f64| -> Vec<f64> { traj.leaves.iter().map(g).collect() };
    let shape = |g: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..us.len()).map(g).collect() };

    let mean_fbar0 = traj
        .leaves
        .first()
        .map_or(0.0, |l| l.norms.mean_fbar);

    let mut entries = Vec::new();
    let mut push = |name: &'static str, observed: Vec<f64>, shp: Vec<f64>| {
        entries.push(make_entry(name, &us, observed, shp));
    };

    push(
        "incoming_graph_gradient",
        col(&|l| l.norms.grad_fbar),
        shape(&|_| derived.d_oh * r0),
    );
    push(
        "incoming_graph_mean_drift",
        col(&|l| (l.norms.mean_fbar - mean_fbar0).abs()),
        shape(&|_| derived.d_um_drift * r0),
    );
    push(
        "incoming_graph_mean",
        col(&|l| l.norms.mean_fbar.abs()),
        shape(&|_| derived.d_um * r0),
    );
    push(
        "incoming_slope_restriction",
        col(&|l| l.norms.slope_restriction),
        shape(&|_| derived.d_oh * r0),
    );
    push(
        "incoming_hessian_restriction",
        col(&|l| l.norms.hessian_restriction),
        shape(&|_| derived.d_oh * r0),
    );
    push(
        "outgoing_graph_mean_gap",
        col(&|l| (l.norms.mean_f - l.reference.s_s).abs()),
        shape(&|i| q_all * r_s[i]),
    );
    push(
        "outgoing_graph_gradient",
        col(&|l| l.norms.grad_f),
        shape(&|i| q_o * r_s[i]),
    );
    push(
        "lapse_gap",
        col(&|l| l.norms.lapse_dev),
        shape(&|_| q_all),
    );
    push(
        "lapse_gradient",
        col(&|l| l.norms.grad_lapse),
        shape(&|_| q_o),
    );
    push(
        "area_radius_gap",
        traj.leaves
            .iter()
            .zip(&r_s)
            .map(|(l, r)| (l.r_u - r).abs())
            .collect(),
        shape(&|_| q_m * r0),
    );
    push(
        "metric_gap",
        col(&|l| l.norms.metric_dev),
        shape(&|i| q_all * r_s[i] * r_s[i]),
    );
    push(
        "metric_gradient",
        col(&|l| l.norms.grad_metric),
        shape(&|i| q_o * r_s[i] * r_s[i]),
    );
    push(
        "tr_chibar_mean_gap",
        col(&|l| l.norms.tr_chibar_mean_gap),
        shape(&|i| q_m * r0 / (r_s[i] * r_s[i])),
    );
    push(
        "tr_chibar_gradient",
        col(&|l| l.norms.grad_tr_chibar),
        shape(&|i| q_o * r0 / (r_s[i] * r_s[i])),
    );
    push(
        "chibarhat",
        col(&|l| l.norms.chibarhat),
        shape(&|_| q_o * r0),
    );
    push(
        "tr_chi_prime_mean_gap",
        col(&|l| l.norms.tr_chi_prime_mean_gap),
        shape(&|i| q_m / r_s[i] + derived.d_oh * us[i] / (r_s[i] * r_s[i])),
    );
    push(
        "tr_chi_prime_gradient",
        col(&|l| l.norms.grad_tr_chi_prime),
        shape(&|i| q_o / r_s[i]),
    );
    push(
        "chihat_prime",
        col(&|l| l.norms.chihat_prime),
        shape(&|i| q_o * r_s[i]),
    );
    push("eta", col(&|l| l.norms.eta), shape(&|i| q_o * r0 / r_s[i]));
    push(
        "omegabar_mean",
        col(&|l| l.norms.omegabar_mean_abs),
        shape(&|i| q_o * q_o * r0 * r0 / (r_s[i] * r_s[i] * r_s[i])),
    );
    push(
        "omegabar_gradient",
        col(&|l| l.norms.grad_omegabar),
        shape(&|i| {
            inputs.eps * r0.powf(1.5) / r_s[i].powf(2.5)
                + (inputs.delta_o + derived.d_oh) * r0 * r0 / (r_s[i] * r_s[i] * r_s[i])
        }),
    );
    push(
        "mu_gap",
        col(&|l| l.norms.mu_gap),
        shape(&|i| {
            q_m * r0 / (r_s[i] * r_s[i] * r_s[i])
                + derived.d_oh * us[i] * r0 / (r_s[i] * r_s[i] * r_s[i] * r_s[i])
        }),
    );
    push(
        "beta_under",
        col(&|l| l.norms.beta_under),
        shape(&|i| {
            inputs.eps * r0.powf(1.5) / r_s[i].powf(2.5)
                + derived.d_oh * r0 * r0 / (r_s[i] * r_s[i] * r_s[i])
        }),
    );
    push(
        "rho_mean_gap",
        col(&|l| l.norms.rho_mean_gap),
        shape(&|i| q_all * r0 / (r_s[i] * r_s[i] * r_s[i])),
    );
    push(
        "rho_gradient",
        col(&|l| l.norms.grad_rho),
        shape(&|i| q_o * r0 / (r_s[i] * r_s[i] * r_s[i])),
    );
    push(
        "sigma",
        col(&|l| l.norms.sigma),
        shape(&|i| {
            (inputs.eps + inputs.delta_o * derived.d_oh + derived.d_oh * derived.d_oh) * r0
                / (r_s[i] * r_s[i] * r_s[i])
        }),
    );
    push(
        "beta",
        col(&|l| l.norms.beta),
        shape(&|i| inputs.eps / r_s[i] + (inputs.delta_o + derived.d_oh) * r0 / (r_s[i] * r_s[i])),
    );

    let initial_leaf = traj
        .leaves
        .first()
        .map(|l| {
            vec![
                InitialLeafCheck {
                    name: "initial_incoming_gradient",
                    observed: l.norms.grad_fbar,
                    bound: inputs.delta_uo * r0,
                },
                InitialLeafCheck {
                    name: "initial_incoming_mean",
                    observed: l.norms.mean_fbar.abs(),
                    bound: inputs.delta_um * r0,
                },
                InitialLeafCheck {
                    name: "initial_outgoing_gradient",
                    observed: l.norms.grad_f,
                    bound: inputs.delta_o * (r0 + l.norms.mean_f),
                },
                InitialLeafCheck {
                    name: "initial_outgoing_mean",
                    observed: l.norms.mean_f.abs(),
                    bound: inputs.delta_m * r0,
                },
            ]
        })
        .unwrap_or_default();

    BoundReport {
        inputs,
        derived,
        us,
        entries,
        initial_leaf,
    }
}

#[cfg(test)]
mod tests;
