//! The frequency function `N = I/H` and checkers for its monotonicity, the
//! doubling inequalities for `H`, and the change-of-center estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::lifted::LiftedField;

/// Additive tolerance folded into every error bar.
pub const FD_TOLERANCE: f64 = 1e-9;

/// Space dimension of the base domain.
const N_DIM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEval {
    pub center: [f64; 2],
    pub radius: f64,
    pub h: f64,
    pub i_def: f64,
    pub i_ibp: f64,
    /// Consensus value, taken from the first-order form.
    pub i: f64,
    pub n: f64,
    /// Error bar on `N`.
    pub quadrature_error: f64,
    /// Relative error bar on `H`.
    pub h_rel_error: f64,
    pub admissible: bool,
}

impl FrequencyEval {
    pub fn n_def(&self) -> f64 {
        self.i_def / self.h
    }

    /// Whether the two forms of `I` agree within the error bar.
    pub fn forms_agree(&self) -> bool {
        (self.n - self.n_def()).abs() <= self.quadrature_error
    }
}

/// Evaluates `N` at one ball.
pub fn frequency_at(lf: &LiftedField, x0: [f64; 2], r: f64) -> Result<FrequencyEval> {
    let ball = lf.ball(x0, r)?;
    let it = lf.integrals(&ball)?;
    let n = it.i_ibp / it.h;
    let h_rel = it.h_err / it.h;
    let err = it.i_error() / it.h + n.abs() * h_rel + FD_TOLERANCE * (1.0 + n.abs());
    Ok(FrequencyEval {
        center: x0,
        radius: r,
        h: it.h,
        i_def: it.i_def,
        i_ibp: it.i_ibp,
        i: it.i_ibp,
        n,
        quadrature_error: err,
        h_rel_error: h_rel + FD_TOLERANCE,
        admissible: admissible(lf, x0, r),
    })
}

/// Star-shapedness of `B_r(x₀) ∩ Ω` and `dist(x₀, ∂Ω) ≥ C₀r²`.
pub fn admissible(lf: &LiftedField, x0: [f64; 2], r: f64) -> bool {
    let dom = &lf.base.domain;
    let c0 = dom.collar_params().c0;
    dom.is_star_shaped(x0, r).star_shaped && dom.boundary_distance(x0) >= c0 * r * r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub evals: Vec<FrequencyEval>,
    pub admissible: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub admissible: bool,
    pub h: f64,
    pub i_def: f64,
    pub i_ibp: f64,
    pub n: f64,
    pub err: f64,
}

impl RadiusProfile {
    pub fn rows(&self) -> Vec<ProfileRow> {
        self.evals
            .iter()
            .map(|e| ProfileRow {
                r: e.radius,
                admissible: e.admissible,
                h: e.h,
                i_def: e.i_def,
                i_ibp: e.i_ibp,
                n: e.n,
                err: e.quadrature_error,
            })
            .collect()
    }
}

pub fn frequency_profile(lf: &LiftedField, x0: [f64; 2], radii: &[f64]) -> Result<RadiusProfile> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radii", "must be strictly increasing"));
    }
    let evals = radii
        .iter()
        .map(|&r| frequency_at(lf, x0, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusProfile {
        center: x0,
        radii: radii.to_vec(),
        admissible: evals.iter().map(|e| e.admissible).collect(),
        evals,
    })
}

/// Profiles at several centers, computed concurrently.
pub fn frequency_profiles(
    lf: &LiftedField,
    centers: &[[f64; 2]],
    radii: &[f64],
) -> Vec<Result<RadiusProfile>> {
    centers
        .par_iter()
        .map(|&c| frequency_profile(lf, c, radii))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub r1: f64,
    pub r2: f64,
    pub gap: f64,
    pub error_bar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Most negative `N(r₂) − N(r₁) + error` seen (positive when all hold).
    pub worst_gap: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Consecutive admissible radii must satisfy `N(r₂) − N(r₁) ≥ −error`.
pub fn check_monotonicity(profile: &RadiusProfile) -> Result<MonotonicityReport> {
    let adm: Vec<&FrequencyEval> = profile.evals.iter().filter(|e| e.admissible).collect();
    if adm.len() < 4 {
        return Err(invalid(
            "profile",
            format!("{} admissible radii, need at least 4", adm.len()),
        ));
    }
    let mut violations = Vec::new();
    let mut worst = f64::INFINITY;
    for w in adm.windows(2) {
        let gap = w[1].n - w[0].n;
        let bar = w[0].quadrature_error + w[1].quadrature_error;
        worst = worst.min(gap + bar);
        if gap < -bar {
            violations.push(Violation {
                r1: w[0].radius,
                r2: w[1].radius,
                gap,
                error_bar: bar,
            });
        }
    }
    Ok(MonotonicityReport {
        checks: adm.len() - 1,
        violations,
        worst_gap: worst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub r1: f64,
    pub r2: f64,
    /// `log(H(r₂)/H(r₁)) / log(r₂/r₁)`.
    pub growth_exponent: f64,
    /// `N(r₂) + n + 1`.
    pub upper_exponent: f64,
    /// `N(r₁) + n + 1`.
    pub lower_exponent: f64,
    pub upper_slack: f64,
    pub lower_slack: f64,
    pub error_bar: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
}

impl DoublingReport {
    pub fn passed(&self) -> bool {
        self.upper_holds && self.lower_holds
    }
}

/// Both doubling inequalities for `H`, compared in exponent form.
pub fn check_doubling(lf: &LiftedField, x0: [f64; 2], r1: f64, r2: f64) -> Result<DoublingReport> {
    if !(r1 < r2) {
        return Err(invalid("r1", "must be below r2"));
    }
    let e1 = frequency_at(lf, x0, r1)?;
    let e2 = frequency_at(lf, x0, r2)?;
    Ok(doubling_from_evals(&e1, &e2))
}

pub fn doubling_from_evals(e1: &FrequencyEval, e2: &FrequencyEval) -> DoublingReport {
    let log_ratio = (e2.radius / e1.radius).ln();
    let growth = (e2.h / e1.h).ln() / log_ratio;
    let upper = e2.n + N_DIM + 1.0;
    let lower = e1.n + N_DIM + 1.0;
    let bar = (e1.h_rel_error + e2.h_rel_error) / log_ratio
        + e1.quadrature_error.max(e2.quadrature_error);
    let upper_slack = upper - growth;
    let lower_slack = growth - lower;
    DoublingReport {
        r1: e1.radius,
        r2: e2.radius,
        growth_exponent: growth,
        upper_exponent: upper,
        lower_exponent: lower,
        upper_slack,
        lower_slack,
        error_bar: bar,
        upper_holds: upper_slack >= -bar,
        lower_holds: lower_slack >= -bar,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangingCenterReport {
    pub a: f64,
    pub r: f64,
    pub rho: f64,
    pub n_outer: f64,
    pub n_shifted: f64,
    /// Smallest `C ≥ 0` with `N(z₁,ρ) ≤ (1 + Ca/r)N(z₀,r) + Ca/r`; infinite when
    /// `a = 0` and the shifted value exceeds the outer one beyond error.
    pub fitted_c: f64,
    pub error_bar: f64,
}

pub fn check_changing_center(
    lf: &LiftedField,
    x0: [f64; 2],
    x1: [f64; 2],
    r: f64,
    rho: f64,
) -> Result<ChangingCenterReport> {
    let a = (x1[0] - x0[0]).hypot(x1[1] - x0[1]);
    let dom = &lf.base.domain;
    let c0 = dom.collar_params().c0;
    let mut failed = Vec::new();
    if a > r / 4.0 {
        failed.push(format!("shift {a} exceeds r/4 = {}", r / 4.0));
    }
    if rho > r / 2.0 {
        failed.push(format!("rho {rho} exceeds r/2 = {}", r / 2.0));
    }
    if !dom.contains(x1) {
        failed.push("shifted center outside the domain".to_string());
    } else if dom.boundary_distance(x1) < c0 * (r - a).powi(2) {
        failed.push(format!(
            "dist(x1, boundary) = {} below C0(r-a)^2 = {}",
            dom.boundary_distance(x1),
            c0 * (r - a).powi(2)
        ));
    }
    if !failed.is_empty() {
        return Err(LabError::Inadmissible(failed.join("; ")));
    }
    let outer = frequency_at(lf, x0, r)?;
    let inner = frequency_at(lf, x1, rho)?;
    let bar = outer.quadrature_error + inner.quadrature_error;
    let excess = inner.n - outer.n;
    let fitted_c = if excess <= bar {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        (excess - bar) / ((a / r) * (outer.n + 1.0))
    };
    Ok(ChangingCenterReport {
        a,
        r,
        rho,
        n_outer: outer.n,
        n_shifted: inner.n,
        fitted_c,
        error_bar: bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ClosedForm, SolutionField};
    use crate::lifted::{lift, SLAB_HALFWIDTH};

    fn lifted(form: ClosedForm) -> LiftedField {
        lift(SolutionField::closed_form(form).unwrap(), SLAB_HALFWIDTH).unwrap()
    }

    #[test]
    fn harmonic_profile_is_flat() {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: 2 });
        let p = frequency_profile(&lf, [0.0, 0.0], &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        for e in &p.evals {
            assert!((e.n - 4.0).abs() < 1e-9, "{}", e.n);
        }
        assert!(check_monotonicity(&p).unwrap().passed());
    }

    #[test]
    fn constant_field_has_zero_frequency() {
        let lf = lifted(ClosedForm::Constant { value: 2.0 });
        assert!(frequency_at(&lf, [0.1, 0.0], 0.3).unwrap().n.abs() < 1e-13);
    }

    #[test]
    fn doubling_is_tight_for_homogeneous_fields() {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: 3 });
        let rep = check_doubling(&lf, [0.0, 0.0], 0.2, 0.4).unwrap();
        assert!(rep.passed());
        assert!((rep.growth_exponent - 9.0).abs() < 1e-9);
        assert!(rep.upper_slack.abs() < 1e-6 * 9.0 && rep.lower_slack.abs() < 1e-6 * 9.0);
    }

    #[test]
    fn zero_shift_gives_zero_constant() {
        let lf = lifted(ClosedForm::SquareMode { k: 1, m: 1 });
        let rep = check_changing_center(&lf, [0.5, 0.5], [0.5, 0.5], 0.3, 0.1).unwrap();
        assert_eq!(rep.fitted_c, 0.0);
    }

    #[test]
    fn inadmissible_shift_lists_failures() {
        let lf = lifted(ClosedForm::SquareMode { k: 1, m: 1 });
        let err = check_changing_center(&lf, [0.5, 0.5], [0.7, 0.5], 0.3, 0.2).unwrap_err();
        let LabError::Inadmissible(msg) = err else {
            panic!()
        };
        assert!(msg.contains("r/4") && msg.contains("r/2"));
    }
}
