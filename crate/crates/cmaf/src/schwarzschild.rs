//! Exact Schwarzschild background in double-null coordinates, plus the
//! spherically symmetric constant-mass-aspect reference foliation.
//!
//! The chart is fixed by the implicit relation
//!
//! ```text
//! (r - r0) e^{r/r0} = s e^{(sbar + s + r0)/r0}
//! ```
//!
//! where `r0 = 2m` is the horizon area radius, `s` the outgoing and `sbar`
//! the incoming null coordinate.  All closed forms below are evaluated
//! through the factor `E = e^{(sbar + s + r0 - r)/r0}`, whose exponent stays
//! O(log) even when `s` is tens of `r0`, so nothing here over- or
//! underflows in the working domain.

use std::io::Write;

use crate::error::{Error, Result};

/// Background parameters: horizon radius and the half-width fraction of the
/// admissible coordinate slab.
#[derive(Debug, Clone, Copy)]
pub struct SchwarzschildConfig {
    /// Horizon area radius `r0 = 2m`.
    pub r0: f64,
    /// Domain half-width fraction: points must satisfy `s > -kappa r0`
    /// and `|sbar| < kappa r0`.
    pub kappa: f64,
}

/// All nonvanishing background connection and curvature scalars at one
/// coordinate point.  Shears, torsion and every curvature component other
/// than `rho` vanish identically in spherical symmetry and are therefore
/// not stored.
#[derive(Debug, Clone, Copy)]
pub struct BackgroundSample {
    /// Area radius solving the implicit chart relation.
    pub r: f64,
    /// Conformal factor squared, `Omega^2 = ((s + r0)/r) E`.
    pub omega_sq: f64,
    /// `d r / d sbar = (r - r0)/r`.
    pub dsbar_r: f64,
    /// `d r / d s = ((s + r0)/r) E`.
    pub ds_r: f64,
    /// Normalised outgoing expansion `tr chi' = 2s / (r (s + r0))`.
    pub tr_chi_prime: f64,
    /// Outgoing expansion `tr chi = 2 (r - r0)/r^2 = Omega^2 tr chi'`.
    pub tr_chi: f64,
    /// Incoming expansion `tr chibar = (2 (s + r0)/r^2) E`.
    pub tr_chibar: f64,
    /// `omega = r0 / (2 r^2)`.
    pub omega: f64,
    /// `omegabar = 1/(2(s+r0)) + 1/(2 r0) - (1/(2r) + 1/(2 r0)) ds_r`.
    pub omegabar: f64,
    /// Only nonzero curvature component, `rho = -r0 / r^3`.
    pub rho: f64,
}

/// One row of the spherically symmetric reference foliation, indexed by the
/// area-radius parameter `u` (so `rbar = rbar0 + u`).
#[derive(Debug, Clone, Copy)]
pub struct ReferenceLeaf {
    pub u: f64,
    /// Leaf area radius `rbar = rbar0 + u`.
    pub rbar: f64,
    /// Outgoing coordinate of the leaf on the hypersurface `sbar = const`.
    pub s_u: f64,
    /// Exact lapse `abar = rbar s_u / ((s_u + r0)(rbar - r0))`, evaluated
    /// in the equivalent exponential form that stays finite at `rbar = r0`.
    pub lapse: f64,
    /// `tr chibar = 2 / rbar` in the lapse-normalised frame.
    pub tr_chibar: f64,
    /// `tr chi' = (2/rbar)(1 - r0/rbar)`.
    pub tr_chi_prime: f64,
    /// `rho = -r0 / rbar^3`.
    pub rho: f64,
    /// Mass aspect `mu = -rho = r0 / rbar^3` (shears and torsion vanish).
    pub mu: f64,
}

impl ReferenceLeaf {
    /// Hawking mass `(rbar/2)(1 - (1/16 pi) \oint tr chi' tr chibar)`,
    /// evaluated from the stored round-leaf expansions.  Cancels to `r0/2`
    /// analytically; computing it from the fields keeps it an honest check.
    pub fn hawking_mass(&self) -> f64 {
        0.5 * self.rbar * (1.0 - 0.25 * self.rbar * self.rbar * self.tr_chi_prime * self.tr_chibar)
    }
}

/// Tabulated spherically symmetric reference foliation on a fixed
/// incoming hypersurface.
#[derive(Debug, Clone)]
pub struct ReferenceFoliation {
    pub r0: f64,
    /// Incoming coordinate of the underlying hypersurface.
    pub sbar: f64,
    /// Area radius of the `u = 0` leaf.
    pub rbar0: f64,
    pub leaves: Vec<ReferenceLeaf>,
}

impl SchwarzschildConfig {
    pub fn new(r0: f64, kappa: f64) -> Result<SchwarzschildConfig> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon radius must be positive, got {r0}"
            )));
        }
        if !(kappa > 0.0 && kappa <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "domain fraction kappa must lie in (0, 0.1], got {kappa}"
            )));
        }
        Ok(SchwarzschildConfig { r0, kappa })
    }

    /// Membership in the admissible coordinate slab.
    pub fn contains(&self, sbar: f64, s: f64) -> bool {
        s > -self.kappa * self.r0 && sbar.abs() < self.kappa * self.r0
    }

    fn check_domain(&self, sbar: f64, s: f64) -> Result<()> {
        if self.contains(sbar, s) {
            Ok(())
        } else {
            Err(Error::Regime(format!(
                "point (sbar, s) = ({sbar}, {s}) outside the slab s > {:.3e}, |sbar| < {:.3e}",
                -self.kappa * self.r0,
                self.kappa * self.r0
            )))
        }
    }

    /// Area radius at a coordinate point, by safeguarded Newton on the
    /// monotone rescaled relation `(r - r0) e^{(r - sbar - s - r0)/r0} = s`.
    pub fn radius_from_coords(&self, sbar: f64, s: f64) -> Result<f64> {
        self.check_domain(sbar, s)?;
        let r0 = self.r0;
        // phi is strictly increasing in r (phi' = (r/r0) E^{-1} > 0), so a
        // sign-changing bracket pins the root.
        let phi = |r: f64| (r - r0) * ((r - sbar - s - r0) / r0).exp() - s;
        let mut lo = r0 * (1.0 - self.kappa) * 0.5;
        let mut hi = r0 * (3.0 + s / r0 + 2.0 * self.kappa);
        debug_assert!(phi(lo) < 0.0 && phi(hi) > 0.0);
        // Start from the flat-space guess and polish with Newton, falling
        // back to bisection whenever an iterate leaves the bracket.
        let mut r = (r0 + s).clamp(lo, hi);
        for _ in 0..200 {
            let f = phi(r);
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let df = (r / r0) * ((r - sbar - s - r0) / r0).exp();
            let mut next = r - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() < 1e-16 * r0 {
                r = next;
                break;
            }
            r = next;
        }
        // Both sides of the relation grow linearly with s; certify the
        // residual relative to that scale so the tolerance is attainable in
        // double precision far out on the hypersurface.
        let residual = phi(r).abs() / (1.0 + s.abs() / r0);
        if residual > 1e-13 * r0 {
            return Err(Error::NoConvergence {
                context: format!("area radius at (sbar, s) = ({sbar}, {s})"),
                iterations: 200,
                residual,
                tol: 1e-13 * r0,
            });
        }
        Ok(r)
    }

    /// Inverse of [`radius_from_coords`] in the `s` slot: the outgoing
    /// coordinate at which the hypersurface `sbar = const` reaches area
    /// radius `r`.  Solves `s e^{s/r0} = (r - r0) e^{(r - sbar - r0)/r0}`,
    /// again monotone in `s` on `s > -r0`.
    pub fn s_from_radius(&self, sbar: f64, r: f64) -> Result<f64> {
        let r0 = self.r0;
        if !(r > r0 * (1.0 - self.kappa)) {
            return Err(Error::Regime(format!(
                "area radius {r} below the admissible range (> {:.3e})",
                r0 * (1.0 - self.kappa)
            )));
        }
        let target = (r - r0) * ((r - sbar - r0) / r0).exp();
        let psi = |s: f64| s * (s / r0).exp() - target;
        let mut lo = -self.kappa * r0;
        let mut hi = (r - r0).abs().max(r0) * 2.0 + r0;
        let mut s = (r - r0 - sbar).clamp(lo, hi);
        for _ in 0..200 {
            let f = psi(s);
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let df = (1.0 + s / r0) * (s / r0).exp();
            let mut next = s - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() < 1e-16 * r0 * (1.0 + s.abs() / r0) {
                s = next;
                break;
            }
            s = next;
        }
        // Certify against the primary relation rather than psi, whose
        // scale grows with r.
        let e = ((sbar + s + r0 - r) / r0).exp();
        let residual = ((r - r0) - s * e).abs() / (1.0 + (r - r0).abs() / r0);
        if residual > 1e-13 * r0 {
            return Err(Error::NoConvergence {
                context: format!("outgoing coordinate at (sbar, r) = ({sbar}, {r})"),
                iterations: 200,
                residual,
                tol: 1e-13 * r0,
            });
        }
        Ok(s)
    }

    /// All background connection and curvature scalars at one point.
    pub fn background(&self, sbar: f64, s: f64) -> Result<BackgroundSample> {
        let r = self.radius_from_coords(sbar, s)?;
        let r0 = self.r0;
        let e = ((sbar + s + r0 - r) / r0).exp();
        let ds_r = (s + r0) / r * e;
        Ok(BackgroundSample {
            r,
            omega_sq: (s + r0) / r * e,
            dsbar_r: (r - r0) / r,
            ds_r,
            tr_chi_prime: 2.0 * s / (r * (s + r0)),
            tr_chi: 2.0 * (r - r0) / (r * r),
            tr_chibar: 2.0 * (s + r0) / (r * r) * e,
            omega: r0 / (2.0 * r * r),
            omegabar: 0.5 / (s + r0) + 0.5 / r0 - (0.5 / r + 0.5 / r0) * ds_r,
            rho: -r0 / (r * r * r),
        })
    }

    /// Tabulate the spherically symmetric reference foliation starting from
    /// the leaf at outgoing coordinate `s0` on the hypersurface `sbar`.
    pub fn reference_foliation(
        &self,
        sbar: f64,
        s0: f64,
        u_max: f64,
        du: f64,
    ) -> Result<ReferenceFoliation> {
        if !(du > 0.0 && u_max >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need du > 0 and u_max >= 0, got du = {du}, u_max = {u_max}"
            )));
        }
        let r0 = self.r0;
        let rbar0 = self.radius_from_coords(sbar, s0)?;
        let n = (u_max / du).round() as usize;
        let mut leaves = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let u = (k as f64) * du;
            let rbar = rbar0 + u;
            let s_u = self.s_from_radius(sbar, rbar)?;
            // abar = rbar s_u / ((s_u + r0)(rbar - r0)); substituting the
            // chart relation for (rbar - r0) gives the form below, which is
            // finite at rbar = r0 where both factors vanish.
            let lapse = rbar / (s_u + r0) * (-(sbar + s_u + r0 - rbar) / r0).exp();
            leaves.push(ReferenceLeaf {
                u,
                rbar,
                s_u,
                lapse,
                tr_chibar: 2.0 / rbar,
                tr_chi_prime: 2.0 / rbar * (1.0 - r0 / rbar),
                rho: -r0 / (rbar * rbar * rbar),
                mu: r0 / (rbar * rbar * rbar),
            });
        }
        Ok(ReferenceFoliation {
            r0,
            sbar,
            rbar0,
            leaves,
        })
    }
}

impl ReferenceFoliation {
    /// Write the table as CSV with a documenting header comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# reference foliation: r0 = {:.17e}, sbar = {:.17e}, rbar0 = {:.17e}",
            self.r0, self.sbar, self.rbar0
        )?;
        writeln!(w, "u,rbar,s_u,lapse,tr_chibar,tr_chi_prime,rho,mu")?;
        for leaf in &self.leaves {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                leaf.u,
                leaf.rbar,
                leaf.s_u,
                leaf.lapse,
                leaf.tr_chibar,
                leaf.tr_chi_prime,
                leaf.rho,
                leaf.mu
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config() -> SchwarzschildConfig {
        SchwarzschildConfig::new(1.0, 0.1).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SchwarzschildConfig::new(-1.0, 0.1).is_err());
        assert!(SchwarzschildConfig::new(1.0, 0.2).is_err());
        assert!(SchwarzschildConfig::new(1.0, 0.0).is_err());
    }

    #[test]
    fn radius_closed_form_points() {
        let c = config();
        // Both sides of the chart relation vanish at the horizon point.
        assert_relative_eq!(c.radius_from_coords(0.0, 0.0).unwrap(), 1.0, epsilon = 1e-13);
        // (x - 1) e^x = e^2 at x = 2.
        assert_relative_eq!(c.radius_from_coords(0.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_matches_bisection_oracle() {
        // Root of (x - 1) e^x = 0.5 e^{1.55} in x = r/r0, by plain bisection.
        let target = 0.5 * (1.55f64).exp();
        let f = |x: f64| (x - 1.0) * x.exp() - target;
        let (mut lo, mut hi) = (1.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let c = config();
        assert_relative_eq!(
            c.radius_from_coords(0.05, 0.5).unwrap(),
            oracle,
            epsilon = 1e-12
        );
    }

    #[test]
    fn radius_rejects_out_of_domain() {
        let c = config();
        assert!(c.radius_from_coords(0.0, -0.2).is_err());
        assert!(c.radius_from_coords(0.5, 1.0).is_err());
    }

    #[test]
    fn radius_monotone_in_both_coordinates() {
        let c = config();
        let mut prev = 0.0;
        for k in 0..40 {
            let s = -0.05 + 0.3 * k as f64;
            let r = c.radius_from_coords(0.02, s).unwrap();
            assert!(r > prev, "r not increasing in s at s = {s}");
            prev = r;
        }
        let mut prev = 0.0;
        for k in 0..20 {
            let sbar = -0.09 + 0.009 * k as f64;
            let r = c.radius_from_coords(sbar, 2.0).unwrap();
            assert!(r > prev, "r not increasing in sbar at sbar = {sbar}");
            prev = r;
        }
    }

    #[test]
    fn radius_residual_certificate_over_grid() {
        let c = config();
        for i in 0..10 {
            for j in 0..30 {
                let sbar = -0.09 + 0.02 * i as f64;
                let s = -0.05 + 1.7 * j as f64;
                let r = c.radius_from_coords(sbar, s).unwrap();
                let e = ((sbar + s + 1.0 - r) / 1.0).exp();
                assert!(
                    ((r - 1.0) - s * e).abs() < 1e-13 * (1.0 + s.abs()),
                    "residual too large at ({sbar}, {s})"
                );
            }
        }
    }

    #[test]
    fn background_values_at_reference_points() {
        let c = config();
        let b = c.background(0.0, 0.0).unwrap();
        assert_relative_eq!(b.r, 1.0, epsilon = 1e-13);
        assert_relative_eq!(b.tr_chi_prime, 0.0, epsilon = 1e-13);
        assert_relative_eq!(b.tr_chibar, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b.omega, 0.5, epsilon = 1e-12);
        assert!(b.omegabar.abs() < 1e-12);
        // dr/dsbar = (r - r0)/r vanishes on the horizon sphere.
        assert!(b.dsbar_r.abs() < 1e-12);

        // rho = -r0/r^3 at r = 2 r0.
        let b2 = c.background(0.0, 1.0).unwrap();
        assert_relative_eq!(b2.rho, -0.125, epsilon = 1e-11);
        // The two expansion normalisations are linked by Omega^2.
        assert_relative_eq!(
            b2.tr_chi,
            b2.omega_sq * b2.tr_chi_prime,
            epsilon = 1e-12
        );
    }

    #[test]
    fn background_derivatives_match_finite_differences() {
        let c = config();
        let h = 1e-5;
        for &(sbar, s) in &[(0.0, 0.7), (0.05, 2.5), (-0.03, 8.0)] {
            let b = c.background(sbar, s).unwrap();
            let fd_s = (c.radius_from_coords(sbar, s + h).unwrap()
                - c.radius_from_coords(sbar, s - h).unwrap())
                / (2.0 * h);
            let fd_sbar = (c.radius_from_coords(sbar + h, s).unwrap()
                - c.radius_from_coords(sbar - h, s).unwrap())
                / (2.0 * h);
            assert_relative_eq!(b.ds_r, fd_s, epsilon = 1e-8);
            assert_relative_eq!(b.dsbar_r, fd_sbar, epsilon = 1e-8);
            // omegabar = d/ds log Omega and omega = d/dsbar log Omega.
            let lom = |sb: f64, ss: f64| c.background(sb, ss).unwrap().omega_sq.ln() * 0.5;
            let fd_lom_s = (lom(sbar, s + h) - lom(sbar, s - h)) / (2.0 * h);
            let fd_lom_sbar = (lom(sbar + h, s) - lom(sbar - h, s)) / (2.0 * h);
            assert_relative_eq!(b.omegabar, fd_lom_s, epsilon = 1e-7);
            assert_relative_eq!(b.omega, fd_lom_sbar, epsilon = 1e-7);
        }
    }

    #[test]
    fn reference_foliation_exact_values() {
        let c = config();
        let fol = c.reference_foliation(0.0, 0.0, 50.0, 0.5).unwrap();
        assert_relative_eq!(fol.rbar0, 1.0, epsilon = 1e-13);
        // Lapse at u = 0 is exp(-sbar/r0) = 1 on this hypersurface.
        assert_relative_eq!(fol.leaves[0].lapse, 1.0, epsilon = 1e-12);
        for leaf in &fol.leaves {
            assert_relative_eq!(leaf.rbar, 1.0 + leaf.u, epsilon = 1e-13);
            // Sandwich bounds for the root whenever rbar >= r0.
            let x = leaf.rbar - 1.0;
            let lo = ((-0.1f64).exp() * x).max(leaf.rbar - 1.1);
            let hi = ((0.1f64).exp() * x).min(leaf.rbar - 0.9);
            assert!(
                leaf.s_u >= lo - 1e-12 && leaf.s_u <= hi + 1e-12,
                "root bounds violated at u = {}",
                leaf.u
            );
            assert_relative_eq!(leaf.hawking_mass(), 0.5, epsilon = 1e-12);
            // The rational and exponential lapse forms agree away from the
            // removable singularity at rbar = r0.
            if x > 0.1 {
                let rational = leaf.rbar * leaf.s_u / ((leaf.s_u + 1.0) * x);
                assert_relative_eq!(leaf.lapse, rational, epsilon = 1e-11);
            }
        }
        // tr chi' at rbar = 2 r0 is 1/(2 r0).
        let at_two = fol.leaves.iter().find(|l| (l.rbar - 2.0).abs() < 1e-9).unwrap();
        assert_relative_eq!(at_two.tr_chi_prime, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reference_foliation_csv_deterministic() {
        let c = config();
        let fol = c.reference_foliation(0.01, 0.2, 3.0, 0.5).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        fol.write_csv(&mut a).unwrap();
        fol.write_csv(&mut b).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("u,rbar"));
    }
}
