//! Local estimates on lifted solutions: the sup–L² bound on shrunken balls,
//! propagation of smallness from a cube face, and the collar scale knob `R₀`.

use serde::{Deserialize, Serialize};

use crate::doubling::least_squares;
use crate::error::{invalid, LabError, Result};
use crate::lifted::LiftedField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiRow {
    pub radius: f64,
    pub sup_inner: f64,
    pub l2_norm: f64,
    /// `sup_{B_θr}|ū| · ((1−θ)r)^{(n+1)/2} / ‖ū‖_{L²(B_r)}`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiReport {
    pub center: [f64; 2],
    pub theta: f64,
    pub rows: Vec<DeGiorgiRow>,
    pub fitted_c: f64,
    /// max/min of the ratio over the grid.
    pub spread: f64,
}

/// Fits the constant in `sup_{B_θr}|ū| ≤ C((1−θ)r)^{−(n+1)/2}‖ū‖_{L²(B_r)}`.
pub fn check_de_giorgi(
    lf: &LiftedField,
    x0: [f64; 2],
    radii: &[f64],
    theta: f64,
) -> Result<DeGiorgiReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", "must lie in (0, 1)"));
    }
    if radii.is_empty() {
        return Err(invalid("radii", "must be nonempty"));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let outer = lf.ball(x0, r)?;
        let inner = lf.ball(x0, theta * r)?;
        let l2_norm = lf.integral_h(&outer)?.sqrt();
        let sup_inner = lf.sup_on_ball(&inner)?;
        rows.push(DeGiorgiRow {
            radius: r,
            sup_inner,
            l2_norm,
            ratio: sup_inner * ((1.0 - theta) * r).powf(1.5) / l2_norm,
        });
    }
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(DeGiorgiReport {
        center: x0,
        theta,
        rows,
        fitted_c: max,
        spread: max / min,
    })
}

/// Planar square `[lo, lo + side]²` with a distinguished face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceCube {
    pub lo: [f64; 2],
    pub side: f64,
    pub face: Face,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessSample {
    /// `max(sup_F |u|, R·sup_F |∇u|)`.
    pub eps: f64,
    pub sup_half: f64,
    pub sup_cube: f64,
}

/// Grid points per side used for the sup measurements.
const SMALLNESS_GRID: usize = 129;

/// Face data and the sup over the concentric half cube for one field.
pub fn measure_smallness(
    f: &dyn Fn([f64; 2]) -> (f64, [f64; 2]),
    cube: &FaceCube,
) -> Result<SmallnessSample> {
    if !(cube.side > 0.0) {
        return Err(invalid("side", "must be positive"));
    }
    let n = SMALLNESS_GRID;
    let step = cube.side / (n - 1) as f64;
    let mut sup_cube: f64 = 0.0;
    let mut sup_half: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i as f64 * step, j as f64 * step);
            let v = f([cube.lo[0] + a, cube.lo[1] + b]).0.abs();
            sup_cube = sup_cube.max(v);
            let q = 0.25 * cube.side;
            if a >= q - 1e-12 && a <= 3.0 * q + 1e-12 && b >= q - 1e-12 && b <= 3.0 * q + 1e-12 {
                sup_half = sup_half.max(v);
            }
        }
    }
    if sup_cube > 1.0 + 1e-9 {
        return Err(invalid(
            "field",
            format!("|u| ≤ 1 required on the cube (sup {sup_cube:.4})"),
        ));
    }
    let mut eps: f64 = 0.0;
    for k in 0..n {
        let s = k as f64 * step;
        let p = match cube.face {
            Face::Bottom => [cube.lo[0] + s, cube.lo[1]],
            Face::Top => [cube.lo[0] + s, cube.lo[1] + cube.side],
            Face::Left => [cube.lo[0], cube.lo[1] + s],
            Face::Right => [cube.lo[0] + cube.side, cube.lo[1] + s],
        };
        let (u, g) = f(p);
        eps = eps.max(u.abs()).max(cube.side * g[0].hypot(g[1]));
    }
    Ok(SmallnessSample {
        eps,
        sup_half,
        sup_cube,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub samples: Vec<SmallnessSample>,
    /// Slope of `log sup_{½Q}` against `log ε`; `None` when every sup vanishes.
    pub alpha: Option<f64>,
    pub residual: f64,
}

/// Least-squares exponent `α` in `sup_{½Q}|u| ≲ ε^α` over an ε-series.
pub fn smallness_propagation(samples: &[SmallnessSample]) -> Result<SmallnessReport> {
    if samples.len() < 3 {
        return Err(invalid("eps", "need at least 3 ε-points"));
    }
    if samples.iter().any(|s| !(s.eps > 0.0 && s.eps < 1.0)) {
        return Err(invalid("eps", "face data must lie in (0, 1)"));
    }
    if samples.iter().all(|s| s.sup_half == 0.0) {
        return Ok(SmallnessReport {
            samples: samples.to_vec(),
            alpha: None,
            residual: 0.0,
        });
    }
    if samples.iter().any(|s| s.sup_half == 0.0) {
        return Err(LabError::TrivialField(
            "some members vanish on the half cube".into(),
        ));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.eps.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.sup_half.ln()).collect();
    let (slope, _, rms) = least_squares(&xs, &ys);
    Ok(SmallnessReport {
        samples: samples.to_vec(),
        alpha: Some(slope),
        residual: rms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R0Report {
    pub center: [f64; 2],
    pub grad_norm: f64,
    /// Largest `R₀` on the scan with `‖w̄‖_∞ ≤ 1/2` on the cube of side `R₀‖∇V‖^{−1/2}`.
    pub r0_max: f64,
    pub scan: Vec<(f64, f64)>,
}

/// Interior grid points per axis for the `w̄` problem.
const W_GRID: usize = 11;

/// `max |w̄|` for `Δw̄ + V̄w̄ = −V̄` in the lifted cube of side `side` centered
/// at `(x0, 0)`, with `w̄ = 0` on the cube boundary.
pub fn w_bar_max(lf: &LiftedField, x0: [f64; 2], side: f64) -> f64 {
    let n = W_GRID;
    let h = side / (n + 1) as f64;
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let x = [
                x0[0] - 0.5 * side + (i + 1) as f64 * h,
                x0[1] - 0.5 * side + (j + 1) as f64 * h,
            ];
            c[i * n + j] = -lf.vbar(x).min(0.0);
        }
    }
    let len = n * n * n;
    // Operator A w = −Δ_h w + c w, right side c; A is SPD.
    let apply = |w: &[f64], out: &mut [f64]| {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = 6.0 * w[idx(i, j, k)];
                    if i > 0 {
                        s -= w[idx(i - 1, j, k)];
                    }
                    if i + 1 < n {
                        s -= w[idx(i + 1, j, k)];
                    }
                    if j > 0 {
                        s -= w[idx(i, j - 1, k)];
                    }
                    if j + 1 < n {
                        s -= w[idx(i, j + 1, k)];
                    }
                    if k > 0 {
                        s -= w[idx(i, j, k - 1)];
                    }
                    if k + 1 < n {
                        s -= w[idx(i, j, k + 1)];
                    }
                    out[idx(i, j, k)] = s / (h * h) + c[i * n + j] * w[idx(i, j, k)];
                }
            }
        }
    };
    let b: Vec<f64> = (0..len).map(|l| c[l / n]).collect();
    let mut w = vec![0.0; len];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-24 * rr.max(1e-300);
    for _ in 0..10 * len {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for l in 0..len {
            w[l] += alpha * p[l];
            r[l] -= alpha * ap[l];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for l in 0..len {
            p[l] = r[l] + beta * p[l];
        }
        rr = rr_new;
    }
    w.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Scans `R₀` on `grid` and reports the largest value whose cube keeps `‖w̄‖_∞ ≤ 1/2`.
pub fn r0_proxy(lf: &LiftedField, x0: [f64; 2], grid: &[f64]) -> Result<R0Report> {
    let grad_norm = lf.base.potential.grad_sup_norm;
    if !(grad_norm > 0.0) {
        return Err(LabError::NotApplicable(
            "∇V ≡ 0: the collar scale is unconstrained".into(),
        ));
    }
    let mut scan = Vec::with_capacity(grid.len());
    let mut r0_max: f64 = 0.0;
    for &r0 in grid {
        let side = r0 / grad_norm.sqrt();
        let wm = w_bar_max(lf, x0, side);
        if wm <= 0.5 {
            r0_max = r0_max.max(r0);
        }
        scan.push((r0, wm));
    }
    Ok(R0Report {
        center: x0,
        grad_norm,
        r0_max,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_family_has_unit_exponent() {
        let cube = FaceCube {
            lo: [0.0, 0.0],
            side: 1.0,
            face: Face::Bottom,
        };
        let samples: Vec<SmallnessSample> = [0.2, 0.05, 0.01, 0.002]
            .iter()
            .map(|&e| {
                let f = |x: [f64; 2]| {
                    let (s, c) = (std::f64::consts::PI * x[0]).sin_cos();
                    let (t, d) = (std::f64::consts::PI * x[1]).sin_cos();
                    let pi = std::f64::consts::PI;
                    (e * s * t, [e * pi * c * t, e * pi * s * d])
                };
                measure_smallness(&f, &cube).unwrap()
            })
            .collect();
        let rep = smallness_propagation(&samples).unwrap();
        assert!((rep.alpha.unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_field_is_consistent_with_any_exponent() {
        let cube = FaceCube {
            lo: [0.0, 0.0],
            side: 1.0,
            face: Face::Bottom,
        };
        let s = measure_smallness(&|_| (0.0, [0.0, 0.0]), &cube).unwrap();
        let samples = vec![
            SmallnessSample { eps: 0.1, ..s },
            SmallnessSample { eps: 0.01, ..s },
            SmallnessSample { eps: 0.001, ..s },
        ];
        assert_eq!(smallness_propagation(&samples).unwrap().alpha, None);
    }

    #[test]
    fn two_points_are_rejected() {
        let s = SmallnessSample {
            eps: 0.1,
            sup_half: 0.1,
            sup_cube: 1.0,
        };
        assert!(smallness_propagation(&[s, s]).is_err());
    }
}
