//! The lift `ū(x, t) = u(x)·e^{√λ t}` on the slab `Ω × (−R, R)`.
//!
//! The t-dependence is a pure exponential, so every integral over a ball
//! centered on the `t = 0` slice reduces to a 2D integral against a
//! closed-form t-kernel evaluated at the half-height `τ(x) = √(r² − |x − x₀|²)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::field::{domain_max, FieldRepr, SolutionField};
use crate::quad::{integrate_clipped_disk, maximize_clipped_disk, QuadConfig};

/// Slab half-width used throughout.
pub const SLAB_HALFWIDTH: f64 = 2.0;

/// `g(a)/a³` with `g(a) = a·cosh a − sinh a`.
fn g_over_cube(a: f64) -> f64 {
    if a.abs() < 0.1 {
        let a2 = a * a;
        1.0 / 3.0 + a2 * (1.0 / 30.0 + a2 * (1.0 / 840.0 + a2 / 45360.0))
    } else {
        (a * a.cosh() - a.sinh()) / (a * a * a)
    }
}

fn sinhc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        1.0 + a * a / 6.0
    } else {
        a.sinh() / a
    }
}

/// The t-kernels at half-height `tau` for `s = √λ`:
/// `[∫e^{2st}, ∫(τ²−t²)e^{2st}, ∫t·e^{2st}]` over `(−τ, τ)`.
pub fn t_kernels(s: f64, tau: f64) -> [f64; 3] {
    let a = 2.0 * s * tau;
    let k0 = 2.0 * tau * sinhc(a);
    let kw = 4.0 * tau.powi(3) * g_over_cube(a);
    [k0, kw, s * kw]
}

#[derive(Clone, Debug)]
pub struct LiftedField {
    pub base: SolutionField,
    pub lambda: f64,
    pub slab_halfwidth: f64,
    pub quad: QuadConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    /// `max V̄` over the sample.
    pub max_vbar: f64,
    /// `max (V̄ + |∇V̄|)` over the sample.
    pub max_vbar_plus_grad: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    pub center: [f64; 2],
    pub radius: f64,
    pub clipped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrals {
    pub h: f64,
    pub i_def: f64,
    pub i_ibp: f64,
    pub h_err: f64,
    pub i_def_err: f64,
    pub i_ibp_err: f64,
    pub evaluations: usize,
}

impl Integrals {
    /// Quadrature error bar on `I` (both forms).
    pub fn i_error(&self) -> f64 {
        self.i_def_err + self.i_ibp_err
    }

    pub fn relative_gap(&self) -> f64 {
        (self.i_def - self.i_ibp).abs() / self.i_def.abs().max(self.i_ibp.abs()).max(1e-300)
    }
}

/// Lifts a solution with slab half-width `r_slab`.
pub fn lift(field: SolutionField, r_slab: f64) -> Result<LiftedField> {
    if !(r_slab > 1.0) {
        return Err(invalid("R", "slab half-width must exceed 1"));
    }
    let lambda = field.potential.sup_norm + field.potential.grad_sup_norm;
    let quad = match field.repr {
        FieldRepr::Exact { .. } => QuadConfig::default(),
        FieldRepr::Mesh(_) => QuadConfig::for_mesh(),
    };
    Ok(LiftedField {
        base: field,
        lambda,
        slab_halfwidth: r_slab,
        quad,
    })
}

impl LiftedField {
    pub fn sqrt_lambda(&self) -> f64 {
        self.lambda.sqrt()
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> LiftedField {
        self.quad = quad;
        self
    }

    pub fn value(&self, x: [f64; 2], t: f64) -> f64 {
        let u = self.base.value(x);
        if t == 0.0 {
            u
        } else {
            u * (self.sqrt_lambda() * t).exp()
        }
    }

    pub fn vbar(&self, x: [f64; 2]) -> f64 {
        self.base.potential.value(x) - self.lambda
    }

    /// Sampled sign conditions `V̄ ≤ 0` and `V̄ + |∇V̄| ≤ 0`.
    pub fn sign_check(&self) -> SignCheck {
        let p = &self.base.potential;
        let lam = self.lambda;
        let max_vbar = -domain_max(&self.base.domain, &|x| lam - p.value(x));
        let max_vbar_plus_grad = -domain_max(&self.base.domain, &|x| {
            let g = p.gradient(x);
            lam - p.value(x) - g[0].hypot(g[1])
        });
        SignCheck {
            max_vbar,
            max_vbar_plus_grad,
        }
    }

    /// Relative residual of the lifted equation; equals the base residual
    /// since `Δ_{x,t}ū + V̄ū = (Δu + Vu)e^{√λ t}`.
    pub fn lifted_residual(&self) -> f64 {
        self.base.residual
    }

    pub fn ball(&self, center: [f64; 2], radius: f64) -> Result<BallRegion> {
        if !(radius > 0.0) || radius >= 1.0 || radius >= self.slab_halfwidth {
            return Err(invalid("r", format!("radius {radius} outside (0, 1)")));
        }
        if !self.base.domain.contains(center) {
            return Err(LabError::EmptyRegion);
        }
        Ok(BallRegion {
            center,
            radius,
            clipped: self.base.domain.boundary_distance(center) < radius,
        })
    }

    /// `H`, `I_def` and `I_ibp` from a single quadrature pass.
    pub fn integrals(&self, region: &BallRegion) -> Result<Integrals> {
        self.integrals_with(region, &self.quad)
    }

    pub fn integrals_with(&self, region: &BallRegion, cfg: &QuadConfig) -> Result<Integrals> {
        let x0 = region.center;
        let r = region.radius;
        let s = self.sqrt_lambda();
        let dom = &self.base.domain;
        let exit = |t: f64| dom.exit_distance(x0, t);
        let breaks = dom.clip_breaks(x0, r);
        let pot = &self.base.potential;
        let lam = self.lambda;
        let res = integrate_clipped_disk::<3>(r, &exit, &breaks, cfg, &|off, tau| {
            let x = [x0[0] + off[0], x0[1] + off[1]];
            let (u, g) = self.base.value_grad(x);
            let [k0, kw, k1] = t_kernels(s, tau);
            let u2 = u * u;
            let grad2 = g[0] * g[0] + g[1] * g[1];
            let radial = g[0] * off[0] + g[1] * off[1];
            [
                u2 * k0,
                (grad2 + (2.0 * lam - pot.value(x)) * u2) * kw,
                2.0 * (u * radial * k0 + s * u2 * k1),
            ]
        });
        let [h, i_def, i_ibp] = res.value;
        let scale = h.abs().max(self.base.value(x0).powi(2) * r.powi(3));
        if h <= 1e-14 * scale.max(f64::MIN_POSITIVE) || h == 0.0 {
            return Err(LabError::TrivialField(format!(
                "H vanishes on the ball of radius {r}"
            )));
        }
        Ok(Integrals {
            h,
            i_def,
            i_ibp,
            h_err: res.error[0],
            i_def_err: res.error[1],
            i_ibp_err: res.error[2],
            evaluations: res.evaluations,
        })
    }

    pub fn integral_h(&self, region: &BallRegion) -> Result<f64> {
        Ok(self.integrals(region)?.h)
    }

    pub fn integral_i_def(&self, region: &BallRegion) -> Result<f64> {
        Ok(self.integrals(region)?.i_def)
    }

    pub fn integral_i_ibp(&self, region: &BallRegion) -> Result<f64> {
        Ok(self.integrals(region)?.i_ibp)
    }

    /// `sup |ū|` over the ball; the t-maximizer sits at `t = τ(x)`.
    pub fn sup_on_ball(&self, region: &BallRegion) -> Result<f64> {
        let x0 = region.center;
        let r = region.radius;
        if !self.base.domain.contains(x0) {
            return Err(LabError::EmptyRegion);
        }
        let s = self.sqrt_lambda();
        let dom = &self.base.domain;
        let exit = |t: f64| dom.exit_distance(x0, t);
        let (mut best, _) = maximize_clipped_disk(r, &exit, 96, 24, &|off, tau| {
            self.base.value([x0[0] + off[0], x0[1] + off[1]]).abs() * (s * tau).exp()
        });
        if let FieldRepr::Mesh(mf) = &self.base.repr {
            for (p, v) in mf.mesh.nodes.iter().zip(&mf.values) {
                let d2 = (p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2);
                if d2 <= r * r {
                    best = best.max(v.abs() * (s * (r * r - d2).sqrt()).exp());
                }
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ClosedForm, Potential};
    use std::f64::consts::PI;

    fn lifted(form: ClosedForm) -> LiftedField {
        lift(SolutionField::closed_form(form).unwrap(), SLAB_HALFWIDTH).unwrap()
    }

    #[test]
    fn kernels_at_zero_lambda() {
        let [k0, kw, k1] = t_kernels(0.0, 0.3);
        assert!((k0 - 0.6).abs() < 1e-15);
        assert!((kw - 4.0 * 0.027 / 3.0).abs() < 1e-15);
        assert_eq!(k1, 0.0);
    }

    #[test]
    fn kernel_series_matches_closed_form_at_switch() {
        let a: f64 = 0.1;
        let direct = (a * a.cosh() - a.sinh()) / a.powi(3);
        let a2 = a * a;
        let series = 1.0 / 3.0 + a2 * (1.0 / 30.0 + a2 * (1.0 / 840.0 + a2 / 45360.0));
        assert!((direct - series).abs() < 1e-12);
        assert_eq!(g_over_cube(a), direct);
    }

    #[test]
    fn lift_rejects_thin_slab() {
        let f = SolutionField::closed_form(ClosedForm::HarmonicPoly { degree: 1 }).unwrap();
        assert!(lift(f, 1.0).is_err());
    }

    #[test]
    fn harmonic_lift_is_t_independent() {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: 2 });
        assert_eq!(lf.lambda, 0.0);
        assert_eq!(lf.value([0.3, 0.1], 0.7), lf.value([0.3, 0.1], 0.0));
    }

    #[test]
    fn square_mode_has_flat_lifted_potential() {
        let lf = lifted(ClosedForm::SquareMode { k: 1, m: 1 });
        assert!((lf.lambda - 2.0 * PI * PI).abs() < 1e-12);
        assert!(lf.vbar([0.3, 0.4]).abs() < 1e-12);
        let sc = lf.sign_check();
        assert!(sc.max_vbar <= 1e-12 && sc.max_vbar_plus_grad <= 1e-12);
    }

    #[test]
    fn constant_field_h_is_ball_volume() {
        let lf = lifted(ClosedForm::Constant { value: 1.0 });
        let b = lf.ball([0.0, 0.0], 0.4).unwrap();
        let it = lf.integrals(&b).unwrap();
        assert!((it.h - 4.0 / 3.0 * PI * 0.064).abs() < 1e-12);
        assert!(it.i_def.abs() < 1e-14 && it.i_ibp.abs() < 1e-14);
    }

    #[test]
    fn linear_field_second_moment() {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: 1 });
        let b = lf.ball([0.0, 0.0], 0.5).unwrap();
        let it = lf.integrals(&b).unwrap();
        assert!((it.h - 4.0 / 15.0 * PI * 0.5f64.powi(5)).abs() < 1e-13);
        assert!((it.i_ibp / it.h - 2.0).abs() < 1e-11);
    }

    #[test]
    fn sup_with_exponential_factor() {
        let f = SolutionField::closed_form(ClosedForm::Constant { value: 1.0 })
            .unwrap()
            .with_potential(Potential::constant(1.0));
        let lf = lift(f, SLAB_HALFWIDTH).unwrap();
        assert_eq!(lf.lambda, 1.0);
        let b = lf.ball([0.0, 0.0], 0.5).unwrap();
        assert!((lf.sup_on_ball(&b).unwrap() - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_field_is_flagged() {
        let lf = lifted(ClosedForm::Constant { value: 0.0 });
        let b = lf.ball([0.0, 0.0], 0.4).unwrap();
        assert!(matches!(lf.integrals(&b), Err(LabError::TrivialField(_))));
    }

    #[test]
    fn identity_on_clipped_balls() {
        let sq = lifted(ClosedForm::SquareMode { k: 1, m: 1 });
        for (c, r) in [([0.1, 0.2], 0.3), ([0.05, 0.05], 0.5), ([0.5, 0.5], 0.9)] {
            let it = sq.integrals(&sq.ball(c, r).unwrap()).unwrap();
            assert!(it.relative_gap() < 1e-6, "{c:?} {r} {it:?}");
        }
        let dk = lifted(ClosedForm::DiskMode {
            radial: 1,
            angular: 0,
        });
        let it = dk.integrals(&dk.ball([0.6, 0.1], 0.7).unwrap()).unwrap();
        assert!(it.relative_gap() < 1e-6, "{it:?}");
    }
}
