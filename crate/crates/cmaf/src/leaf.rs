//! Adapted-frame geometry of one spacelike leaf inside the evolved
//! hypersurface.
//!
//! The geometry is built in three stages.  First the ambient null frame is
//! tilted so the outgoing-coordinate direction runs inside the hypersurface
//! graph ([`DotGeometry`]); then the angular directions are tilted into the
//! tangent space of the leaf `s = f(theta)` ([`DDotGeometry`]); finally the
//! incoming null normal is rescaled by a lapse so it generates the leaf
//! parameter `u` ([`BarGeometry`]).  Every transformation law is implemented
//! in full — no term is dropped as "higher order" — so at zero perturbation
//! amplitude the transported curvature satisfies the intrinsic Gauss
//! constraint to discretisation accuracy, which the tests use as an
//! end-to-end oracle.
//!
//! All angular fields live in the rotational frame of the [`sphere`]
//! module: covectors and (contravariant) vectors carry tangential euclidean
//! components, so a vector–covector contraction is the plain componentwise
//! dot product while metric pairings go through [`MetricOps`].
//!
//! [`sphere`]: crate::sphere

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hypersurface::HypersurfaceState;
use crate::metric::{frame_dot, AmbientSample, SyntheticProvider};
use crate::sphere::{
    cov_deriv_covector, eps_round, grad, hessian_round, outer_sym, round_laplacian,
    sobolev_norm_covector, sobolev_norm_scalar, CovectorField, Grid, MetricOps, ScalarField,
    SymTensor2Field,
};

// ---------------------------------------------------------------------------
// Christoffel difference tables
// ---------------------------------------------------------------------------

/// Raised Christoffel difference `delta^d_{ab}` of some connection against
/// the round one, stored per node and indexed `d * 9 + a * 3 + b`.
///
/// The pulled-back connections of the leaf frames differ from the
/// Levi-Civita connection of the composite (restricted) metric only through
/// corrections of the form
/// `delta(a, T)^d_{ab} = g^{dl} (a_a T_{bl} + a_b T_{al} - a_l T_{ab})`,
/// built from a slope covector `a` and a metric-derivative tensor `T`;
/// this type assembles and contracts such tables.
#[derive(Clone)]
struct ConnDelta {
    comps: Vec<Array2<f64>>,
    grid: Grid,
}

impl ConnDelta {
    /// Copy the Christoffel difference of a leaf metric against the round
    /// connection (spectral angular derivatives of the metric components).
    fn from_ops(ops: &MetricOps) -> ConnDelta {
        let grid = ops.grid().clone();
        let (n_lat, n_lon) = grid.shape();
        let mut comps: Vec<Array2<f64>> = vec![Array2::zeros((n_lat, n_lon)); 27];
        for d in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let dst = &mut comps[d * 9 + a * 3 + b];
                    for i in 0..n_lat {
                        for j in 0..n_lon {
                            dst[[i, j]] = ops.delta_coeff(d, a, b, i, j);
                        }
                    }
                }
            }
        }
        ConnDelta { comps, grid }
    }

    /// Table of `g^{dl} (a_a t_{bl} + a_b t_{al} - a_l t_{ab})`.
    fn from_pair(ops: &MetricOps, a: &CovectorField, t: &SymTensor2Field) -> ConnDelta {
        let grid = ops.grid().clone();
        let (n_lat, n_lon) = grid.shape();
        let mut comps: Vec<Array2<f64>> = vec![Array2::zeros((n_lat, n_lon)); 27];
        for i in 0..n_lat {
            for j in 0..n_lon {
                let gi = ops.inverse().matrix(i, j);
                let tm = t.matrix(i, j);
                let av = a.vector(i, j);
                let u = gi * tm;
                let wv = gi * av;
                for d in 0..3 {
                    for p in 0..3 {
                        for q in 0..3 {
                            comps[d * 9 + p * 3 + q][[i, j]] =
                                av[p] * u[(d, q)] + av[q] * u[(d, p)] - wv[d] * tm[(p, q)];
                        }
                    }
                }
            }
        }
        ConnDelta { comps, grid }
    }

    fn sub(mut self, other: &ConnDelta) -> ConnDelta {
        for (dst, src) in self.comps.iter_mut().zip(&other.comps) {
            *dst -= src;
        }
        self
    }

    /// Symmetric tensor `delta^d_{ab} w_d`, tangentially projected.
    fn contract_cov(&self, w: &CovectorField) -> SymTensor2Field {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = SymTensor2Field::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let wv = w.vector(i, j);
                let mut m = Matrix3::zeros();
                for a in 0..3 {
                    for b in 0..3 {
                        let mut acc = 0.0;
                        for d in 0..3 {
                            acc += self.comps[d * 9 + a * 3 + b][[i, j]] * wv[d];
                        }
                        m[(a, b)] = acc;
                    }
                }
                out.set_matrix(i, j, pi * m * pi);
            }
        }
        out
    }

    /// Covector `delta^d_{ab} v^b m_d` on the free index `a`, tangentially
    /// projected (the correction term of a directional vector derivative
    /// paired with a metric-lowered weight `m`).
    fn contract_vec_cov(&self, v: &CovectorField, m: &CovectorField) -> CovectorField {
        let (n_lat, n_lon) = self.grid.shape();
        let mut out = CovectorField::zeros(&self.grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = self.grid.unit_normal(i, j);
                let vv = v.vector(i, j);
                let mv = m.vector(i, j);
                let mut o = Vector3::zeros();
                for a in 0..3 {
                    let mut acc = 0.0;
                    for d in 0..3 {
                        for b in 0..3 {
                            acc += self.comps[d * 9 + a * 3 + b][[i, j]] * vv[b] * mv[d];
                        }
                    }
                    o[a] = acc;
                }
                out.set_vector(i, j, o - x * x.dot(&o));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Small field helpers
// ---------------------------------------------------------------------------

/// Plain contraction `T_{ij} v^j` of a tensor with a (contravariant) vector.
fn tensor_dot_vec(t: &SymTensor2Field, v: &CovectorField) -> CovectorField {
    let grid = t.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut out = CovectorField::zeros(grid);
    for i in 0..n_lat {
        for j in 0..n_lon {
            out.set_vector(i, j, t.matrix(i, j) * v.vector(i, j));
        }
    }
    out
}

/// Plain bilinear form `T_{ij} v^i u^j` of a tensor with two vectors.
fn tensor_bilinear_vec(t: &SymTensor2Field, v: &CovectorField, u: &CovectorField) -> ScalarField {
    frame_dot(v, &tensor_dot_vec(t, u))
}

/// Round trace of a (tangential) symmetric tensor.
fn round_trace(t: &SymTensor2Field) -> ScalarField {
    let grid = t.grid();
    let (n_lat, n_lon) = grid.shape();
    let mut values = Array2::zeros((n_lat, n_lon));
    for i in 0..n_lat {
        for j in 0..n_lon {
            let x = grid.unit_normal(i, j);
            let pi = Matrix3::identity() - x * x.transpose();
            values[[i, j]] = (pi * t.matrix(i, j)).trace();
        }
    }
    ScalarField::from_values(grid, values)
}

/// Round contraction `T_{ij} delta^{jk} w_k` of a tensor with a covector.
fn tensor_dot_round(t: &SymTensor2Field, w: &CovectorField) -> CovectorField {
    tensor_dot_vec(t, w)
}

// ---------------------------------------------------------------------------
// Tilted frame on a leaf (outgoing direction running inside the graph)
// ---------------------------------------------------------------------------

/// Frame data on the leaf `s = f(theta)` after the first frame change: the
/// angular directions follow the hypersurface graph `sbar = h(s, theta)`,
/// the incoming null direction is tilted into the graph, and the outgoing
/// null normal stays ambient.  Connection and curvature components are
/// transported with the complete transformation laws.
pub struct DotGeometry {
    /// Background scale of the configuration.
    pub r0: f64,
    /// Leaf parameterisation `s = f(theta)`.
    pub f: ScalarField,
    /// Incoming coordinate of the leaf, `fbar = h(f(theta), theta)`.
    pub fbar: ScalarField,
    /// Ambient metric data restricted to the leaf.
    pub sample: AmbientSample,
    /// Fixed-coordinate angular differential of the graph function on the
    /// leaf (composite variation through `f` removed).
    pub h_cov: CovectorField,
    /// Graph slope `dh/ds` along the hypersurface, on the leaf.
    pub h_s: ScalarField,
    /// Second graph slope `d^2 h/ds^2` along the hypersurface.
    pub h_ss: ScalarField,
    /// Null-tilt scalar of the incoming direction.
    pub eps_under: ScalarField,
    /// Null-tilt vector of the incoming direction (contravariant).
    pub eps_under_vec: CovectorField,
    /// Tilted shift vector (contravariant).
    pub b: CovectorField,
    /// `s`-derivative of the tilted shift along the hypersurface.
    pub ds_b: CovectorField,
    /// Normalised outgoing second fundamental form (full tensor).
    pub chi_prime: SymTensor2Field,
    pub tr_chi_prime: ScalarField,
    pub chihat_prime: SymTensor2Field,
    /// Incoming second fundamental form of the tilted frame (full tensor).
    pub chibar: SymTensor2Field,
    pub tr_chibar: ScalarField,
    pub chibarhat: SymTensor2Field,
    /// Torsion of the tilted frame.
    pub eta: CovectorField,
    /// Incoming acceleration of the tilted frame.
    pub omegabar: ScalarField,
    pub alpha_under: SymTensor2Field,
    pub beta_under: CovectorField,
    pub rho: ScalarField,
    pub sigma: ScalarField,
    pub beta: CovectorField,
    pub alpha: SymTensor2Field,
    /// Operators of the restricted leaf metric.
    ops: MetricOps,
    /// Christoffel difference of the tilted-frame connection against the
    /// round one.
    delta_dot: ConnDelta,
}

impl DotGeometry {
    /// Operators of the restricted leaf metric (angular derivatives taken
    /// along the leaf).
    pub fn ops(&self) -> &MetricOps {
        &self.ops
    }

    /// Build the tilted frame on the leaf `s = f(theta)` of an evolved
    /// hypersurface.
    pub fn on_leaf(
        provider: &SyntheticProvider,
        state: &HypersurfaceState,
        f: &ScalarField,
    ) -> Result<DotGeometry> {
        let fbar = state.h_at_nodes(f)?;
        DotGeometry::on_graph_section(provider, &fbar, f)
    }

    /// Build the tilted frame directly from the leaf coordinates
    /// `(fbar, f)`, with `fbar` understood as the restriction of the
    /// hypersurface graph.  The graph slopes along the hypersurface are
    /// recovered exactly from the generator equation of the graph, so no
    /// numerical differencing in `s` enters.
    pub fn on_graph_section(
        provider: &SyntheticProvider,
        fbar: &ScalarField,
        f: &ScalarField,
    ) -> Result<DotGeometry> {
        let grid = provider.grid();
        grid.check_same(f.grid(), "leaf parameterisation")?;
        grid.check_same(fbar.grid(), "leaf graph restriction")?;
        let r0 = provider.config().r0;
        let (n_lat, n_lon) = grid.shape();

        let sample = provider.sample_on_surface(fbar, f)?;
        let ops = MetricOps::new(&sample.metric)?;
        let om2 = &sample.omega_sq;

        let df = grad(f);
        let c = grad(fbar); // composite angular differential of the graph

        // First graph slope h_s on the leaf.  The generator equation
        // h_s = -b . dh + Omega^2 |dh|^2 with dh = c - h_s df closes into a
        // per-node quadratic for h_s; take its small root in the
        // subtraction-free form.
        let a2 = om2.mul(&ops.norm_sq_cov(&df));
        let a1 = frame_dot(&sample.b, &df)
            .sub(&ops.dot_cov(&c, &df).mul(om2).scale(2.0))
            .add_scalar(-1.0);
        let a0 = om2.mul(&ops.norm_sq_cov(&c)).sub(&frame_dot(&sample.b, &c));
        let mut h_s_v = Array2::zeros((n_lat, n_lon));
        for i in 0..n_lat {
            for j in 0..n_lon {
                let (q2, q1, q0) = (
                    a2.values()[[i, j]],
                    a1.values()[[i, j]],
                    a0.values()[[i, j]],
                );
                let disc = q1 * q1 - 4.0 * q2 * q0;
                if disc < 0.0 {
                    return Err(Error::NearCharacteristic(format!(
                        "graph-slope discriminant {disc:.3e} negative at node ({i},{j})"
                    )));
                }
                let den = q1.abs() + disc.sqrt();
                h_s_v[[i, j]] = if den > 0.0 {
                    -2.0 * q0 * q1.signum() / den
                } else {
                    0.0
                };
            }
        }
        let h_s = ScalarField::from_values(grid, h_s_v);
        let w = c.sub(&df.mul_scalar_field(&h_s)); // fixed-coordinate dh

        // Metric and conformal-factor derivatives along the hypersurface.
        let lie_half = ops.sym_grad_cov(&ops.lower(&sample.b));
        let s_half = sample.chibar.sub(&lie_half); // (1/2) d g / d s
        let t_s = sample
            .chi
            .mul_scalar_field(&h_s)
            .add(&s_half); // (1/2) of the metric s-derivative along the graph
        let ombar_nos = sample
            .omegabar
            .sub(&frame_dot(&sample.b, &sample.dlog_omega));
        let ds_om2 = om2
            .mul(&ombar_nos.add(&h_s.mul(&sample.omega)))
            .scale(2.0);

        // Second graph slope from the s-derivative of the generator
        // equation; h_ss enters linearly through dh/ds = p - h_ss df.
        let p = grad(&h_s);
        let ds_b_graph = sample
            .ds_b
            .add(&sample.dsbar_b.mul_scalar_field(&h_s));
        let k = frame_dot(&ds_b_graph, &w)
            .scale(-1.0)
            .sub(&frame_dot(&sample.b, &p))
            .add(&ds_om2.mul(&ops.norm_sq_cov(&w)))
            .sub(&ops.tensor_bilinear(&t_s, &w, &w).mul(om2).scale(2.0))
            .add(&ops.dot_cov(&p, &w).mul(om2).scale(2.0));
        let den = ScalarField::constant(grid, 1.0)
            .sub(&frame_dot(&sample.b, &df))
            .add(&ops.dot_cov(&df, &w).mul(om2).scale(2.0));
        if den.min_value().abs() < 1e-8 || den.min_value() < 0.0 {
            return Err(Error::NearCharacteristic(format!(
                "graph-curvature denominator {:.3e} too close to zero",
                den.min_value()
            )));
        }
        let h_ss = k.div(&den);
        let v = p.sub(&df.mul_scalar_field(&h_ss)); // fixed-coordinate d(h_s)

        // Null-tilt scalars and tilted shift.
        let wsq = ops.norm_sq_cov(&w);
        let eps_under = om2.mul(&wsq).scale(-1.0);
        let eps_under_vec = ops.raise(&w).mul_scalar_field(om2).scale(-2.0).tangential();
        let b_dot = sample.b.add(&eps_under_vec);

        // s-derivative of the tilted shift along the hypersurface:
        // differentiate  b_dot = b - 2 Omega^2 g^{-1} dh  through all four
        // factors (shift, conformal factor, inverse metric, graph slope).
        let ds_b_dot = ds_b_graph
            .sub(&ops.raise(&w).mul_scalar_field(&ds_om2).scale(2.0))
            .add(
                &ops.raise(&ops.tensor_dot_cov(&t_s, &w))
                    .mul_scalar_field(om2)
                    .scale(4.0),
            )
            .sub(&ops.raise(&v).mul_scalar_field(om2).scale(2.0))
            .tangential();

        // Fixed-coordinate round Hessian of the graph function, assembled
        // from the composite one by removing the variation through `f`.
        let hess_h_round = hessian_round(fbar)
            .sub(&outer_sym(&df, &v).scale(2.0))
            .sub(&outer_sym(&df, &df).mul_scalar_field(&h_ss))
            .sub(&hessian_round(f).mul_scalar_field(&h_s));

        // Connection tables.  The composite table of the restricted metric
        // sees angular variation through both leaf coordinates; stripping
        // the variation through `f` gives the tilted-frame connection, and
        // stripping additionally the graph slope (against the incoming
        // metric derivative) gives the fixed-coordinate one.
        let delta_dot =
            ConnDelta::from_ops(&ops).sub(&ConnDelta::from_pair(&ops, &df, &t_s));
        let delta_fixed = delta_dot
            .clone()
            .sub(&ConnDelta::from_pair(&ops, &w, &sample.chi));
        // Pull-back Hessian of the graph function: fixed-coordinate round
        // Hessian corrected by the fixed-coordinate leaf connection.
        let hess_pull = hess_h_round.sub(&delta_fixed.contract_cov(&w));

        // Connection components of the tilted frame.
        let inv_om2 = om2.map(|x| 1.0 / x);
        let chi_prime = sample.chi.mul_scalar_field(&inv_om2);
        let cw = ops.tensor_dot_cov(&sample.chi, &w);
        let chibar_dot = sample
            .chibar
            .sub(&sample.chi.mul_scalar_field(&wsq.mul(om2)))
            .sub(&hess_pull.mul_scalar_field(om2).scale(2.0))
            .sub(&outer_sym(&sample.etabar, &w).mul_scalar_field(om2).scale(4.0))
            .sub(
                &outer_sym(&w, &w)
                    .mul_scalar_field(&om2.mul(&sample.omega))
                    .scale(4.0),
            )
            .add(&outer_sym(&w, &cw).mul_scalar_field(om2).scale(4.0));
        let eta_dot = sample.eta.add(&cw);
        let omegabar_dot = sample
            .omegabar
            .sub(&ops.dot_cov(&sample.eta, &w).mul(om2).scale(2.0))
            .sub(&ops.tensor_bilinear(&sample.chi, &w, &w).mul(om2));

        // Curvature components of the tilted frame, transformed per node.
        let mut alpha_under = SymTensor2Field::zeros(grid);
        let mut beta_under = CovectorField::zeros(grid);
        let mut sigma_v = Array2::zeros((n_lat, n_lon));
        let mut rho_v = Array2::zeros((n_lat, n_lon));
        let mut beta_out = CovectorField::zeros(grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let g = {
                    let pi = Matrix3::identity() - x * x.transpose();
                    pi * sample.metric.matrix(i, j) * pi
                };
                let gi = ops.inverse().matrix(i, j);
                let e_mat = eps_round(x) * ops.sqrt_density().values()[[i, j]];
                let o2 = om2.values()[[i, j]];
                let o4 = o2 * o2;
                let hb = w.vector(i, j); // covector components of dh
                let eu = eps_under.values()[[i, j]];
                let euv = eps_under_vec.vector(i, j);
                let au = sample.alpha_under.matrix(i, j);
                let bu = sample.beta_under.vector(i, j);
                let rh = sample.rho.values()[[i, j]];
                let sg = sample.sigma.values()[[i, j]];
                let be = sample.beta.vector(i, j);
                let al = sample.alpha.matrix(i, j);

                let outer = |a: Vector3<f64>, b: Vector3<f64>| a * b.transpose();
                let sym2 =
                    |a: Vector3<f64>, b: Vector3<f64>| a * b.transpose() + b * a.transpose();

                let bu_up = gi * bu; // raised incoming curvature covector
                let be_up = gi * be;
                let e_euv = e_mat * euv;
                let et_euv = e_mat.transpose() * euv;
                // scalar eps_under^k (area form)_{kh} beta^h
                let d_scal = euv.dot(&(e_mat * be_up));
                let c_scal = euv.dot(&be); // eps_under . beta
                let a_euv = al * euv;
                let quad_a = euv.dot(&a_euv); // alpha(eps_under, eps_under)

                let mut m = au.clone_owned();
                m += sym2(e_mat * bu_up, et_euv);
                m += sym2(bu, hb) * (-2.0 * o2);
                m += outer(hb, hb) * (4.0 * o4 * rh);
                m += g * (2.0 * o2 * eu * rh);
                m += outer(et_euv, e_euv) * rh;
                m += sym2(hb, g * euv) * (-o2 * rh);
                m += sym2(hb, e_euv) * (o2 * sg);
                m += sym2(hb, e_euv) * (2.0 * o2 * sg);
                m += outer(hb, hb) * (-4.0 * o4 * c_scal);
                m += sym2(hb, be) * (2.0 * o4 * eu);
                m += sym2(e_mat * be_up, et_euv) * (o2 * eu);
                m += sym2(hb, e_euv) * (o2 * d_scal);
                m += al * (o4 * eu * eu);
                m += outer(hb, hb) * (o4 * quad_a);
                m += sym2(a_euv, hb) * (-o4 * eu);
                alpha_under.set_matrix(i, j, 0.5 * (m + m.transpose()));

                let mut bv = bu.clone_owned();
                bv += hb * (-3.0 * o2 * rh);
                bv += et_euv * (-1.5 * sg);
                bv += be * (-o2 * eu);
                bv += hb * (2.0 * o2 * c_scal);
                bv += et_euv * (0.5 * d_scal);
                bv += hb * (-0.5 * o2 * quad_a);
                bv += a_euv * (0.5 * o2 * eu);
                beta_under.set_vector(i, j, bv - x * x.dot(&bv));

                let sm = e_mat * sg
                    + (outer(be, hb) - outer(hb, be)) * o2
                    + e_mat * (0.5 * d_scal)
                    + (outer(hb, a_euv) - outer(a_euv, hb)) * (0.5 * o2);
                let e_up = gi * e_mat * gi;
                let mut contr = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        contr += e_up[(a, b)] * sm[(a, b)];
                    }
                }
                sigma_v[[i, j]] = 0.5 * contr;

                rho_v[[i, j]] = rh - c_scal + 0.25 * quad_a;

                let bo = be - 0.5 * a_euv;
                beta_out.set_vector(i, j, bo - x * x.dot(&bo));
            }
        }
        let sigma_dot = ScalarField::from_values(grid, sigma_v);
        let rho_dot = ScalarField::from_values(grid, rho_v);

        let tr_chi_prime = ops.trace(&chi_prime);
        let chihat_prime = ops.traceless(&chi_prime);
        let tr_chibar = ops.trace(&chibar_dot);
        let chibarhat = ops.traceless(&chibar_dot);
        // the outgoing extreme curvature component is invariant under this
        // frame change
        let alpha_dot = sample.alpha.clone();

        Ok(DotGeometry {
            r0,
            f: f.clone(),
            fbar: fbar.clone(),
            sample,
            h_cov: w,
            h_s,
            h_ss,
            eps_under,
            eps_under_vec,
            b: b_dot,
            ds_b: ds_b_dot,
            chi_prime,
            tr_chi_prime,
            chihat_prime,
            chibar: chibar_dot,
            tr_chibar,
            chibarhat,
            eta: eta_dot,
            omegabar: omegabar_dot,
            alpha_under,
            beta_under,
            rho: rho_dot,
            sigma: sigma_dot,
            beta: beta_out,
            alpha: alpha_dot,
            ops,
            delta_dot,
        })
    }
}

// ---------------------------------------------------------------------------
// Leaf frame (angular directions tangent to the leaf)
// ---------------------------------------------------------------------------

/// Frame data after the second frame change: the angular directions are
/// tilted along the incoming generator so they become tangent to the leaf
/// `s = f(theta)`.  The induced metric of the leaf is `metric`; all traces
/// and the mass aspect are taken with it.
pub struct DDotGeometry {
    /// Angular-tilt scalar of the outgoing direction.
    pub eps_prime: ScalarField,
    /// Angular-tilt vector of the outgoing direction (contravariant).
    pub eps_prime_vec: CovectorField,
    /// Induced metric of the leaf.
    pub metric: SymTensor2Field,
    pub chi_prime: SymTensor2Field,
    pub tr_chi_prime: ScalarField,
    pub chihat_prime: SymTensor2Field,
    pub chibar: SymTensor2Field,
    pub tr_chibar: ScalarField,
    pub chibarhat: SymTensor2Field,
    pub eta: CovectorField,
    /// Incoming acceleration (unchanged by the angular tilt).
    pub omegabar: ScalarField,
    pub alpha_under: SymTensor2Field,
    pub beta_under: CovectorField,
    pub rho: ScalarField,
    pub sigma: ScalarField,
    pub beta: CovectorField,
    pub alpha: SymTensor2Field,
    /// Mass aspect of the leaf frame,
    /// `mu = -rho - (1/2)(chibarhat, chihat') - div eta`.
    pub mu: ScalarField,
    ops: MetricOps,
}

impl DDotGeometry {
    /// Operators of the induced leaf metric.
    pub fn ops(&self) -> &MetricOps {
        &self.ops
    }

    /// Tilt the angular directions of a [`DotGeometry`] into the tangent
    /// space of its leaf.
    pub fn from_dot(dot: &DotGeometry) -> Result<DDotGeometry> {
        let grid = dot.f.grid();
        let (n_lat, n_lon) = grid.shape();
        let ops = &dot.ops;
        let df = grad(&dot.f);

        // Per-node basis change B = I - df (x) b_dot with pseudo-inverse in
        // the tangential frame, tilt vector eps' = -2 g^{-1} B^{-1} df and
        // induced metric B g B^T.
        let mut eps_prime_vec = CovectorField::zeros(grid);
        let mut eps_prime_v = Array2::zeros((n_lat, n_lon));
        let mut gddot = SymTensor2Field::zeros(grid);
        let mut b_mats: Vec<Matrix3<f64>> = Vec::with_capacity(n_lat * n_lon);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let pi = Matrix3::identity() - x * x.transpose();
                let fv = df.vector(i, j);
                let bv = dot.b.vector(i, j);
                let margin = 1.0 - fv.dot(&bv);
                if margin < 0.05 {
                    return Err(Error::NearCharacteristic(format!(
                        "leaf-tilt margin {margin:.3e} at node ({i},{j})"
                    )));
                }
                let bmat = pi - fv * bv.transpose();
                let aug = bmat + x * x.transpose();
                let inv = aug.try_inverse().ok_or_else(|| {
                    Error::NearCharacteristic(format!(
                        "leaf-tilt basis change singular at node ({i},{j})"
                    ))
                })?;
                let binv = inv - x * x.transpose();
                let u = binv * fv;
                let gi = ops.inverse().matrix(i, j);
                let ev = gi * u;
                eps_prime_vec.set_vector(i, j, -2.0 * ev);
                eps_prime_v[[i, j]] = -u.dot(&ev);
                let g = pi * dot.sample.metric.matrix(i, j) * pi;
                gddot.set_matrix(i, j, bmat * g * bmat.transpose());
                b_mats.push(bmat);
            }
        }
        let eps_prime = ScalarField::from_values(grid, eps_prime_v);
        let ops_dd = MetricOps::new(&gddot)?;

        // Second fundamental forms and torsion in the leaf frame.
        let chibar_b = tensor_dot_vec(&dot.chibar, &dot.b);
        let chibar_bb = tensor_bilinear_vec(&dot.chibar, &dot.b, &dot.b);
        let chibar_dd = dot
            .chibar
            .sub(&outer_sym(&chibar_b, &df).scale(2.0))
            .add(&outer_sym(&df, &df).mul_scalar_field(&chibar_bb));

        // Pull-back Hessian of f in the tilted frame.
        let hess_f = hessian_round(&dot.f).sub(&dot.delta_dot.contract_cov(&df));

        // Directional derivative of the tilted shift paired with the
        // metric-lowered tilt vector.
        let m_low = ops.lower(&eps_prime_vec);
        let raw = cov_deriv_covector(&dot.b);
        let mut nabla_b_e = CovectorField::zeros(grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let mv = m_low.vector(i, j);
                let mut o = Vector3::zeros();
                for a in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += raw[a][k][[i, j]] * mv[k];
                    }
                    o[a] = acc;
                }
                nabla_b_e.set_vector(i, j, o - x * x.dot(&o));
            }
        }
        let nabla_b_e = nabla_b_e.add(&dot.delta_dot.contract_vec_cov(&dot.b, &m_low));

        let chibar_e = tensor_dot_vec(&dot.chibar, &eps_prime_vec);
        let chibar_be = tensor_bilinear_vec(&dot.chibar, &dot.b, &eps_prime_vec);
        let chi_p_b = tensor_dot_vec(&dot.chi_prime, &dot.b);
        let chi_p_bb = tensor_bilinear_vec(&dot.chi_prime, &dot.b, &dot.b);
        let eta_b = frame_dot(&dot.eta, &dot.b);
        let b_dot_e = frame_dot(&dot.b, &m_low);
        let nbb_e = frame_dot(&dot.b, &nabla_b_e);
        let dsb_e = frame_dot(&dot.ds_b, &m_low);

        let bracket_cov = nabla_b_e
            .sub(&chibar_e)
            .sub(&chibar_b.mul_scalar_field(&eps_prime))
            .sub(&chi_p_b)
            .sub(&dot.eta.scale(2.0));
        let bracket_scal = chibar_be
            .scale(2.0)
            .add(&chibar_bb.mul(&eps_prime))
            .add(&chi_p_bb)
            .add(&eta_b.scale(4.0))
            .sub(&nbb_e)
            .sub(&dsb_e)
            .sub(&dot.omegabar.scale(4.0));
        let chi_p_dd = dot
            .chi_prime
            .add(&dot.chibar.mul_scalar_field(&eps_prime))
            .add(&hess_f.mul_scalar_field(&b_dot_e.add_scalar(-2.0)))
            .add(&outer_sym(&df, &bracket_cov).scale(2.0))
            .add(&outer_sym(&df, &df).mul_scalar_field(&bracket_scal));

        let eta_dd = dot
            .eta
            .add(&chibar_e.scale(0.5))
            .add(&df.mul_scalar_field(
                &dot.omegabar
                    .scale(2.0)
                    .sub(&eta_b)
                    .sub(&chibar_be.scale(0.5)),
            ));

        // Curvature components, per node.
        let mut alpha_under = SymTensor2Field::zeros(grid);
        let mut beta_under = CovectorField::zeros(grid);
        let mut rho_v = Array2::zeros((n_lat, n_lon));
        let mut sigma_v = Array2::zeros((n_lat, n_lon));
        let mut beta_out = CovectorField::zeros(grid);
        let mut alpha_out = SymTensor2Field::zeros(grid);
        for i in 0..n_lat {
            for j in 0..n_lon {
                let x = grid.unit_normal(i, j);
                let bmat = b_mats[i * n_lon + j];
                let fv = df.vector(i, j);
                let ev = eps_prime_vec.vector(i, j);
                let e = eps_prime.values()[[i, j]];
                let gi = ops.inverse().matrix(i, j);
                let g = {
                    let pi = Matrix3::identity() - x * x.transpose();
                    pi * dot.sample.metric.matrix(i, j) * pi
                };
                let e_mat = eps_round(x) * ops.sqrt_density().values()[[i, j]];
                let au = dot.alpha_under.matrix(i, j);
                let bu = dot.beta_under.vector(i, j);
                let rh = dot.rho.values()[[i, j]];
                let sg = dot.sigma.values()[[i, j]];
                let be = dot.beta.vector(i, j);
                let al = dot.alpha.matrix(i, j);

                let outer = |a: Vector3<f64>, b: Vector3<f64>| a * b.transpose();
                let sym2 =
                    |a: Vector3<f64>, b: Vector3<f64>| a * b.transpose() + b * a.transpose();
                let asym2 =
                    |a: Vector3<f64>, b: Vector3<f64>| a * b.transpose() - b * a.transpose();

                let au_e = au * ev; // alpha_under . eps'
                let quad_au = ev.dot(&au_e);
                let bu_up = gi * bu;
                let be_up = gi * be;
                let c_scal = ev.dot(&(e_mat * bu_up)); // eps' eps(., beta_under)
                let ebu = ev.dot(&bu); // eps' . beta_under

                // incoming extreme component
                let m_au = bmat * au * bmat.transpose();
                alpha_under.set_matrix(i, j, 0.5 * (m_au + m_au.transpose()));

                // incoming intermediate component
                let bv = bmat * (bu - 0.5 * au_e);
                beta_under.set_vector(i, j, bv - x * x.dot(&bv));

                rho_v[[i, j]] = rh - ebu + 0.25 * quad_au;

                // dualised component: assemble sigma eps'' and contract with
                // the raised area form of the induced metric
                let mut sm = bmat * (e_mat * sg) * bmat.transpose();
                sm += asym2(fv, bmat * bu);
                sm += bmat * (e_mat * (-0.5 * c_scal)) * bmat.transpose();
                sm += 0.5 * asym2(bmat * au_e, fv);
                let dens_dd = {
                    let aug = gddot.matrix(i, j) + x * x.transpose();
                    let det = aug.determinant();
                    if !(det > 0.0) {
                        return Err(Error::DegenerateMetric(format!(
                            "induced leaf metric degenerate at node ({i},{j})"
                        )));
                    }
                    det.sqrt()
                };
                let e_dd = eps_round(x) * dens_dd;
                let gdi = ops_dd.inverse().matrix(i, j);
                let e_dd_up = gdi * e_dd * gdi;
                let mut contr = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        contr += e_dd_up[(a, b)] * sm[(a, b)];
                    }
                }
                sigma_v[[i, j]] = 0.5 * contr;

                // outgoing intermediate component
                let et_ev = e_mat.transpose() * ev;
                let e_ev = e_mat * ev;
                let mut bo = bmat * be;
                bo += fv * (-3.0 * rh);
                bo += (bmat * e_ev) * (1.5 * sg);
                bo += (bmat * bu) * (-e);
                bo += fv * (2.0 * ebu);
                bo += (bmat * et_ev) * (0.5 * c_scal);
                bo += (bmat * au_e) * (0.5 * e);
                bo += fv * (-0.5 * quad_au);
                beta_out.set_vector(i, j, bo - x * x.dot(&bo));

                // outgoing extreme component
                let mut ao = bmat * al * bmat.transpose();
                ao += sym2(bmat * be, fv) * (-2.0);
                ao += bmat * outer(e_mat * be_up, et_ev) * bmat.transpose();
                ao += bmat * outer(et_ev, e_mat * be_up) * bmat.transpose();
                ao += sym2(bmat * (g * ev), fv) * (-rh);
                ao += sym2(bmat * (e_mat.transpose() * ev), fv) * (sg);
                ao += outer(fv, fv) * (4.0 * rh);
                ao += bmat * g * bmat.transpose() * (2.0 * e * rh);
                ao += bmat * outer(et_ev, e_ev) * bmat.transpose() * rh;
                ao += sym2(bmat * et_ev, fv) * (2.0 * sg);
                ao += outer(fv, fv) * (-4.0 * ebu);
                ao += sym2(fv, bmat * bu) * (2.0 * e);
                ao += bmat
                    * (outer(e_mat * bu_up, et_ev) + outer(et_ev, e_mat * bu_up))
                    * bmat.transpose()
                    * e;
                ao += sym2(bmat * (e_mat * ev), fv) * c_scal;
                ao += bmat * au * bmat.transpose() * (e * e);
                ao += outer(fv, fv) * quad_au;
                ao += sym2(bmat * au_e, fv) * (-e);
                alpha_out.set_matrix(i, j, 0.5 * (ao + ao.transpose()));
            }
        }
        let rho_dd = ScalarField::from_values(grid, rho_v);
        let sigma_dd = ScalarField::from_values(grid, sigma_v);

        let tr_chi_prime = ops_dd.trace(&chi_p_dd);
        let chihat_prime = ops_dd.traceless(&chi_p_dd);
        let tr_chibar = ops_dd.trace(&chibar_dd);
        let chibarhat = ops_dd.traceless(&chibar_dd);

        let mu = rho_dd
            .scale(-1.0)
            .sub(&ops_dd.dot_tensor(&chibarhat, &chihat_prime).scale(0.5))
            .sub(&ops_dd.div_cov(&eta_dd));

        Ok(DDotGeometry {
            eps_prime,
            eps_prime_vec,
            metric: gddot,
            chi_prime: chi_p_dd,
            tr_chi_prime,
            chihat_prime,
            chibar: chibar_dd,
            tr_chibar,
            chibarhat,
            eta: eta_dd,
            omegabar: dot.omegabar.clone(),
            alpha_under,
            beta_under,
            rho: rho_dd,
            sigma: sigma_dd,
            beta: beta_out,
            alpha: alpha_out,
            mu,
            ops: ops_dd,
        })
    }
}

// ---------------------------------------------------------------------------
// Lapse-normalised frame
// ---------------------------------------------------------------------------

/// Frame data after the lapse rescaling: the incoming null normal is scaled
/// so it generates the foliation parameter.  The induced metric is
/// unchanged; connection and curvature components pick up powers of the
/// lapse.
pub struct BarGeometry {
    /// Lapse of the incoming normal.
    pub lapse: ScalarField,
    /// Induced leaf metric (shared with the leaf frame).
    pub metric: SymTensor2Field,
    /// Area radius of the leaf.
    pub r_u: f64,
    pub tr_chibar: ScalarField,
    pub chibarhat: SymTensor2Field,
    pub tr_chi_prime: ScalarField,
    pub chihat_prime: SymTensor2Field,
    pub eta: CovectorField,
    /// Normalised incoming acceleration; filled by the foliation driver
    /// from its elliptic equation (it needs the parameter derivative of the
    /// lapse).
    pub omegabar: Option<ScalarField>,
    /// Mass aspect of the normalised frame.
    pub mu: ScalarField,
    pub rho: ScalarField,
    pub sigma: ScalarField,
    pub beta: CovectorField,
    pub beta_under: CovectorField,
    pub alpha: SymTensor2Field,
    pub alpha_under: SymTensor2Field,
    ops: MetricOps,
}

impl BarGeometry {
    pub fn ops(&self) -> &MetricOps {
        &self.ops
    }

    /// Rescale a leaf frame by the (positive) lapse.
    pub fn rescale(ddot: &DDotGeometry, lapse: &ScalarField) -> Result<BarGeometry> {
        ddot.metric.grid().check_same(lapse.grid(), "lapse")?;
        if lapse.min_value() <= 0.0 {
            return Err(Error::Regime(format!(
                "lapse must stay positive, minimum {:.3e}",
                lapse.min_value()
            )));
        }
        let inv = lapse.map(|a| 1.0 / a);
        let inv_sq = lapse.map(|a| 1.0 / (a * a));
        let sq = lapse.mul(lapse);
        let log_lapse = lapse.map(f64::ln);
        let ops = MetricOps::new(&ddot.metric)?;
        let eta = ddot.eta.add(&grad(&log_lapse));
        let tr_chibar = ddot.tr_chibar.mul(lapse);
        let chibarhat = ddot.chibarhat.mul_scalar_field(lapse);
        let tr_chi_prime = ddot.tr_chi_prime.mul(&inv);
        let chihat_prime = ddot.chihat_prime.mul_scalar_field(&inv);
        let rho = ddot.rho.clone();
        let sigma = ddot.sigma.clone();
        // The traceless inner product is lapse-invariant; the mass aspect
        // changes only through the torsion divergence.
        let mu = rho
            .scale(-1.0)
            .sub(&ops.dot_tensor(&chibarhat, &chihat_prime).scale(0.5))
            .sub(&ops.div_cov(&eta));
        let r_u = ops.area_radius();
        Ok(BarGeometry {
            lapse: lapse.clone(),
            metric: ddot.metric.clone(),
            r_u,
            tr_chibar,
            chibarhat,
            tr_chi_prime,
            chihat_prime,
            eta,
            omegabar: None,
            mu,
            rho,
            sigma,
            beta: ddot.beta.mul_scalar_field(&inv),
            beta_under: ddot.beta_under.mul_scalar_field(lapse),
            alpha: ddot.alpha.mul_scalar_field(&inv_sq),
            alpha_under: ddot.alpha_under.mul_scalar_field(&sq),
            ops,
        })
    }

    /// Intrinsic Gauss curvature of the leaf, and the mass aspect computed
    /// from it instead of the transported curvature.  The difference of the
    /// two mass aspects is the Gauss-constraint residual of the data.
    pub fn gauss_data(&self) -> GaussData {
        let gauss = self.ops.gauss_curvature();
        let mu_gauss = gauss
            .sub(&self.tr_chi_prime.mul(&self.tr_chibar).scale(0.25))
            .sub(&self.ops.div_cov(&self.eta));
        let residual = self.mu.sub(&mu_gauss).max_abs();
        GaussData {
            gauss,
            mu_gauss,
            residual,
        }
    }

    /// Hawking mass of the leaf,
    /// `(r_u / 2) (1 - (1/16 pi) \oint tr chi' tr chibar)`.
    pub fn hawking_mass(&self) -> f64 {
        let flux = self
            .ops
            .integral(&self.tr_chi_prime.mul(&self.tr_chibar));
        0.5 * self.r_u * (1.0 - flux / (16.0 * std::f64::consts::PI))
    }
}

/// Output of [`BarGeometry::gauss_data`].
pub struct GaussData {
    pub gauss: ScalarField,
    pub mu_gauss: ScalarField,
    /// Max-norm gap between the transported-curvature and intrinsic mass
    /// aspects.
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Constraint residuals
// ---------------------------------------------------------------------------

/// `L^2`-type and Sobolev norms of one residual field.
#[derive(Debug, Clone, Copy)]
pub struct ResidualNorms {
    pub l2: f64,
    pub sobolev: f64,
}

/// Residuals of the tangential constraint equations on a leaf: the two
/// shear-divergence identities and the torsion curl/divergence pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintResiduals {
    /// Incoming shear-divergence identity.
    pub codazzi_in: ResidualNorms,
    /// Outgoing shear-divergence identity.
    pub codazzi_out: ResidualNorms,
    /// Torsion curl identity.
    pub torsion_curl: ResidualNorms,
    /// Torsion divergence identity (equal to the Gauss-constraint gap of
    /// the two mass-aspect forms).
    pub torsion_div: ResidualNorms,
}

impl ConstraintResiduals {
    pub fn max_l2(&self) -> f64 {
        self.codazzi_in
            .l2
            .max(self.codazzi_out.l2)
            .max(self.torsion_curl.l2)
            .max(self.torsion_div.l2)
    }
}

/// Evaluate the constraint residuals of a normalised leaf frame, reporting
/// each in the plain `L^2` norm and in the Sobolev norm of order `n - 1`
/// and exponent `p`.
pub fn constraint_residuals(
    bar: &BarGeometry,
    n: usize,
    p: f64,
) -> Result<ConstraintResiduals> {
    let ops = &bar.ops;
    let order = n.saturating_sub(1);

    let cod_in = ops
        .div_tensor(&bar.chibarhat)
        .sub(&grad(&bar.tr_chibar).scale(0.5))
        .sub(&ops.tensor_dot_cov(&bar.chibarhat, &bar.eta))
        .add(&bar.eta.mul_scalar_field(&bar.tr_chibar).scale(0.5))
        .add(&bar.beta_under);
    let cod_out = ops
        .div_tensor(&bar.chihat_prime)
        .sub(&grad(&bar.tr_chi_prime).scale(0.5))
        .add(&ops.tensor_dot_cov(&bar.chihat_prime, &bar.eta))
        .sub(&bar.eta.mul_scalar_field(&bar.tr_chi_prime).scale(0.5))
        .add(&bar.beta);
    let curl = ops
        .curl_cov(&bar.eta)
        .sub(&ops.wedge(&bar.chihat_prime, &bar.chibarhat).scale(0.5))
        .sub(&bar.sigma);
    // The divergence identity defines the transported mass aspect, so its
    // residual is measured against the intrinsic (Gauss-curvature) form.
    let gauss = bar.gauss_data();
    let div = bar.mu.sub(&gauss.mu_gauss);

    let norms_cov = |w: &CovectorField| -> Result<ResidualNorms> {
        Ok(ResidualNorms {
            l2: sobolev_norm_covector(w, 0, 2.0)?,
            sobolev: sobolev_norm_covector(w, order, p)?,
        })
    };
    let norms_scal = |f: &ScalarField| -> Result<ResidualNorms> {
        Ok(ResidualNorms {
            l2: sobolev_norm_scalar(f, 0, 2.0)?,
            sobolev: sobolev_norm_scalar(f, order, p)?,
        })
    };

    Ok(ConstraintResiduals {
        codazzi_in: norms_cov(&cod_in)?,
        codazzi_out: norms_cov(&cod_out)?,
        torsion_curl: norms_scal(&curl)?,
        torsion_div: norms_scal(&div)?,
    })
}

// ---------------------------------------------------------------------------
// Low/high-order decomposition
// ---------------------------------------------------------------------------

/// A field of any of the three valences, for uniform low/high-order
/// reporting.
pub enum FieldValue {
    Scalar(ScalarField),
    Covector(CovectorField),
    Tensor(SymTensor2Field),
}

impl FieldValue {
    pub fn max_abs(&self) -> f64 {
        match self {
            FieldValue::Scalar(f) => f.max_abs(),
            FieldValue::Covector(w) => w.max_round_norm(),
            FieldValue::Tensor(t) => t.max_abs(),
        }
    }
}

/// Pointwise background reference values on the leaf, closed forms of the
/// coordinates and the solved area radius.
struct RefFields {
    om2: ScalarField,
    tr_chi: ScalarField,
    tr_chi_prime: ScalarField,
    tr_chibar: ScalarField,
    omegabar: ScalarField,
    rho: ScalarField,
    r: ScalarField,
}

fn reference_fields(dot: &DotGeometry) -> RefFields {
    let grid = dot.f.grid();
    let (n_lat, n_lon) = grid.shape();
    let r0 = dot.r0;
    let mut om2 = Array2::zeros((n_lat, n_lon));
    let mut tr_chi = Array2::zeros((n_lat, n_lon));
    let mut tr_chi_p = Array2::zeros((n_lat, n_lon));
    let mut tr_chibar = Array2::zeros((n_lat, n_lon));
    let mut ombar = Array2::zeros((n_lat, n_lon));
    let mut rho = Array2::zeros((n_lat, n_lon));
    for i in 0..n_lat {
        for j in 0..n_lon {
            let sb = dot.fbar.values()[[i, j]];
            let s = dot.f.values()[[i, j]];
            let r = dot.sample.r.values()[[i, j]];
            let e = ((sb + s + r0 - r) / r0).exp();
            let o2 = (s + r0) / r * e;
            om2[[i, j]] = o2;
            tr_chi[[i, j]] = 2.0 * (r - r0) / (r * r);
            tr_chi_p[[i, j]] = 2.0 * s / (r * (s + r0));
            tr_chibar[[i, j]] = 2.0 * (s + r0) * e / (r * r);
            ombar[[i, j]] = 0.5 / (s + r0) + 0.5 / r0 - (0.5 / r + 0.5 / r0) * o2;
            rho[[i, j]] = -r0 / (r * r * r);
        }
    }
    RefFields {
        om2: ScalarField::from_values(grid, om2),
        tr_chi: ScalarField::from_values(grid, tr_chi),
        tr_chi_prime: ScalarField::from_values(grid, tr_chi_p),
        tr_chibar: ScalarField::from_values(grid, tr_chibar),
        omegabar: ScalarField::from_values(grid, ombar),
        rho: ScalarField::from_values(grid, rho),
        r: dot.sample.r.clone(),
    }
}

/// Split a named leaf-frame quantity into its closed-form low-order part
/// (background plus the leading graph/tilt response) and the high-order
/// remainder, returned as `(lo, hi)` with `hi = full - lo`.
pub fn decompose_lo_hi(
    name: &str,
    dot: &DotGeometry,
    ddot: &DDotGeometry,
) -> Result<(FieldValue, FieldValue)> {
    let grid = dot.f.grid();
    let refs = reference_fields(dot);
    let round = SymTensor2Field::round_metric(grid);
    let r_sq = refs.r.mul(&refs.r);
    let inv_r_sq = r_sq.map(|x| 1.0 / x);
    let w = &dot.h_cov;
    let df = grad(&dot.f);

    // Fixed-coordinate round Hessian and Laplacian of the graph function on
    // the leaf, reassembled the same way the frame change does it.
    let hess_h = {
        let v = grad(&dot.h_s).sub(&df.mul_scalar_field(&dot.h_ss));
        hessian_round(&dot.fbar)
            .sub(&outer_sym(&df, &v).scale(2.0))
            .sub(&outer_sym(&df, &df).mul_scalar_field(&dot.h_ss))
            .sub(&hessian_round(&dot.f).mul_scalar_field(&dot.h_s))
    };
    let lap_h = round_trace(&hess_h);

    let scalar = |lo: ScalarField, full: &ScalarField| {
        let hi = full.sub(&lo);
        Ok((FieldValue::Scalar(lo), FieldValue::Scalar(hi)))
    };
    let covector = |lo: CovectorField, full: &CovectorField| {
        let hi = full.sub(&lo);
        Ok((FieldValue::Covector(lo), FieldValue::Covector(hi)))
    };
    let tensor = |lo: SymTensor2Field, full: &SymTensor2Field| {
        let hi = full.sub(&lo);
        Ok((FieldValue::Tensor(lo), FieldValue::Tensor(hi)))
    };

    match name {
        // -------- tilted frame --------
        "b_dot" => covector(
            w.mul_scalar_field(&refs.om2.mul(&inv_r_sq)).scale(-2.0),
            &dot.b,
        ),
        "metric_dot" => tensor(round.mul_scalar_field(&r_sq), &dot.sample.metric),
        "chi_prime_dot" => tensor(
            round.mul_scalar_field(&r_sq.mul(&refs.tr_chi_prime).scale(0.5)),
            &dot.chi_prime,
        ),
        "tr_chi_prime_dot" => scalar(refs.tr_chi_prime.clone(), &dot.tr_chi_prime),
        "chihat_prime_dot" => tensor(SymTensor2Field::zeros(grid), &dot.chihat_prime),
        "chibar_dot" => tensor(
            round
                .mul_scalar_field(&r_sq.mul(&refs.tr_chibar).scale(0.5))
                .sub(&hess_h.mul_scalar_field(&refs.om2).scale(2.0)),
            &dot.chibar,
        ),
        "tr_chibar_dot" => scalar(
            refs.tr_chibar
                .sub(&lap_h.mul(&refs.om2).mul(&inv_r_sq).scale(2.0)),
            &dot.tr_chibar,
        ),
        "chibarhat_dot" => tensor(
            hess_h
                .sub(&round.mul_scalar_field(&lap_h.scale(0.5)))
                .mul_scalar_field(&refs.om2)
                .scale(-2.0),
            &dot.chibarhat,
        ),
        "eta_dot" => covector(w.mul_scalar_field(&refs.tr_chi.scale(0.5)), &dot.eta),
        "omegabar_dot" => scalar(refs.omegabar.clone(), &dot.omegabar),
        "alpha_under_dot" => tensor(SymTensor2Field::zeros(grid), &dot.alpha_under),
        "beta_under_dot" => covector(
            w.mul_scalar_field(&refs.om2.mul(&refs.rho)).scale(-3.0),
            &dot.beta_under,
        ),
        "rho_dot" => scalar(refs.rho.clone(), &dot.rho),
        "sigma_dot" => scalar(ScalarField::zeros(grid), &dot.sigma),
        "beta_dot" => covector(CovectorField::zeros(grid), &dot.beta),
        "alpha_dot" => tensor(SymTensor2Field::zeros(grid), &dot.alpha),

        // -------- leaf frame --------
        "eps_prime_vec" => covector(
            df.mul_scalar_field(&inv_r_sq).scale(-2.0),
            &ddot.eps_prime_vec,
        ),
        "metric_ddot" => tensor(round.mul_scalar_field(&r_sq), &ddot.metric),
        "chi_prime_ddot" => tensor(
            round
                .mul_scalar_field(&r_sq.mul(&refs.tr_chi_prime).scale(0.5))
                .sub(&hessian_round(&dot.f).scale(2.0)),
            &ddot.chi_prime,
        ),
        "tr_chi_prime_ddot" => scalar(
            refs.tr_chi_prime
                .sub(&round_laplacian(&dot.f).mul(&inv_r_sq).scale(2.0)),
            &ddot.tr_chi_prime,
        ),
        "chihat_prime_ddot" => tensor(
            hessian_round(&dot.f)
                .sub(&round.mul_scalar_field(&round_laplacian(&dot.f).scale(0.5)))
                .scale(-2.0),
            &ddot.chihat_prime,
        ),
        "chibar_ddot" => tensor(
            round
                .mul_scalar_field(&r_sq.mul(&refs.tr_chibar).scale(0.5))
                .sub(&hess_h.mul_scalar_field(&refs.om2).scale(2.0)),
            &ddot.chibar,
        ),
        "tr_chibar_ddot" => scalar(
            refs.tr_chibar
                .sub(&lap_h.mul(&refs.om2).mul(&inv_r_sq).scale(2.0)),
            &ddot.tr_chibar,
        ),
        "chibarhat_ddot" => tensor(
            hess_h
                .sub(&round.mul_scalar_field(&lap_h.scale(0.5)))
                .mul_scalar_field(&refs.om2)
                .scale(-2.0),
            &ddot.chibarhat,
        ),
        "eta_ddot" => covector(
            w.mul_scalar_field(&refs.tr_chi.scale(0.5))
                .sub(&df.mul_scalar_field(&refs.tr_chibar.scale(0.5)))
                .add(
                    &tensor_dot_round(&hess_h, &df)
                        .mul_scalar_field(&refs.om2.mul(&inv_r_sq))
                        .scale(2.0),
                ),
            &ddot.eta,
        ),
        "alpha_under_ddot" => tensor(SymTensor2Field::zeros(grid), &ddot.alpha_under),
        "beta_under_ddot" => covector(
            w.mul_scalar_field(&refs.om2.mul(&refs.rho)).scale(-3.0),
            &ddot.beta_under,
        ),
        "rho_ddot" => scalar(refs.rho.clone(), &ddot.rho),
        "sigma_ddot" => scalar(ScalarField::zeros(grid), &ddot.sigma),
        "beta_ddot" => covector(
            df.mul_scalar_field(&refs.rho).scale(-3.0),
            &ddot.beta,
        ),
        "alpha_ddot" => tensor(SymTensor2Field::zeros(grid), &ddot.alpha),

        other => Err(Error::UnknownQuantity(other.to_string())),
    }
}
