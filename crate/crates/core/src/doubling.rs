//! The sup-norm doubling index `M(z₀, r) = log₂(sup_{B_r}ū² / sup_{B_{r/2}}ū²)`
//! at points and on cubes, with checkers for its relations to `N`, its
//! almost-monotonicity, the global `C(1 + √λ)` bound, and vanishing orders.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::frequency::frequency_at;
use crate::geometry::{BoundaryGraph, StraightenedChart};
use crate::lifted::LiftedField;
use crate::quad::{integrate_clipped_disk, maximize_clipped_disk, QuadConfig};

/// Dimension of the lifted space, `n + 1`.
const LIFTED_DIM: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingEval {
    pub center: [f64; 2],
    pub radius: f64,
    pub sup_outer: f64,
    pub sup_inner: f64,
    pub m: f64,
}

fn index_from_sups(center: [f64; 2], radius: f64, outer: f64, inner: f64) -> Result<DoublingEval> {
    if !(inner > 0.0) {
        return Err(LabError::TrivialField(format!(
            "sup vanishes on the half ball at {center:?}, r/2 = {}",
            radius / 2.0
        )));
    }
    Ok(DoublingEval {
        center,
        radius,
        sup_outer: outer,
        sup_inner: inner,
        m: 2.0 * (outer / inner).log2(),
    })
}

pub fn doubling_index(lf: &LiftedField, x0: [f64; 2], r: f64) -> Result<DoublingEval> {
    let outer = lf.sup_on_ball(&lf.ball(x0, r)?)?;
    let inner = lf.sup_on_ball(&lf.ball(x0, r / 2.0)?)?;
    index_from_sups(x0, r, outer.max(inner), inner)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub eta: f64,
    pub m: f64,
    /// `N(z₀, (1 + η)r)`.
    pub n_upper: f64,
    /// `N(z₀, (1 + η)r/2)`.
    pub n_lower: f64,
    /// Smallest `C₁ ≥ 0` for the upper inequality.
    pub c1: f64,
    /// Smallest `C₂ ≥ 0` for the lower inequality.
    pub c2: f64,
}

/// Fits the constants relating `M` and `N` at one ball.
pub fn check_bridge_n_m(lf: &LiftedField, x0: [f64; 2], r: f64, eta: f64) -> Result<BridgeReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("eta", "must lie in (0, 1)"));
    }
    let dom = &lf.base.domain;
    let cert = dom.is_star_shaped(x0, 2.0 * r);
    if !cert.star_shaped {
        return Err(LabError::Inadmissible(format!(
            "B_2r not star-shaped about {x0:?} (margin {})",
            cert.margin
        )));
    }
    let m = doubling_index(lf, x0, r)?.m;
    let n_upper = frequency_at(lf, x0, (1.0 + eta) * r)?.n;
    let n_lower = frequency_at(lf, x0, 0.5 * (1.0 + eta) * r)?.n;
    let l = (1.0 + eta).log2();
    let denom = 1.0 - eta.log2();
    Ok(BridgeReport {
        eta,
        m,
        n_upper,
        n_lower,
        c1: ((m - (1.0 + l) * n_upper) / denom).max(0.0),
        c2: (((1.0 - l) * n_lower - m) / denom).max(0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostMonotonicityReport {
    pub r0: f64,
    pub m_r0: f64,
    pub evals: Vec<DoublingEval>,
    /// Smallest `C ≥ 1` with `M(r) ≤ C·M(r₀) + C` across the grid.
    pub fitted_c: f64,
    /// `min_r (C·M(r₀) + C − M(r))`.
    pub slack: f64,
}

pub fn check_almost_monotonicity(
    lf: &LiftedField,
    x0: [f64; 2],
    r_grid: &[f64],
    r0: f64,
) -> Result<AlmostMonotonicityReport> {
    if r_grid.iter().any(|&r| !(r > 0.0 && r < r0)) {
        return Err(invalid("r_grid", format!("radii must lie in (0, {r0})")));
    }
    let m_r0 = doubling_index(lf, x0, r0)?.m;
    let evals = r_grid
        .par_iter()
        .map(|&r| doubling_index(lf, x0, r))
        .collect::<Result<Vec<_>>>()?;
    let need = evals
        .iter()
        .map(|e| e.m / (m_r0 + 1.0))
        .fold(1.0f64, f64::max);
    let slack = evals
        .iter()
        .map(|e| need * (m_r0 + 1.0) - e.m)
        .fold(f64::INFINITY, f64::min);
    Ok(AlmostMonotonicityReport {
        r0,
        m_r0,
        evals,
        fitted_c: need,
        slack,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBoundReport {
    pub sqrt_lambda: f64,
    pub max_m: f64,
    /// `max M / (1 + √λ)`.
    pub ratio: f64,
    pub argmax_center: [f64; 2],
    pub argmax_radius: f64,
    pub evaluations: usize,
}

/// Maximum of `M/(1 + √λ)` over a center grid and a radius grid; centers outside
/// the domain are skipped.
pub fn global_doubling_bound(
    lf: &LiftedField,
    centers: &[[f64; 2]],
    r_grid: &[f64],
) -> Result<GlobalBoundReport> {
    let pairs: Vec<([f64; 2], f64)> = centers
        .iter()
        .filter(|c| lf.base.domain.contains(**c))
        .flat_map(|&c| r_grid.iter().map(move |&r| (c, r)))
        .collect();
    if pairs.is_empty() {
        return Err(LabError::EmptyRegion);
    }
    let evals: Vec<DoublingEval> = pairs
        .par_iter()
        .map(|&(c, r)| doubling_index(lf, c, r))
        .collect::<Result<Vec<_>>>()?;
    let best = evals
        .iter()
        .copied()
        .fold(evals[0], |a, e| if e.m > a.m { e } else { a });
    let s = lf.sqrt_lambda();
    Ok(GlobalBoundReport {
        sqrt_lambda: s,
        max_m: best.m,
        ratio: best.m / (1.0 + s),
        argmax_center: best.center,
        argmax_radius: best.radius,
        evaluations: evals.len(),
    })
}

/// Residual (rms, natural-log units) above which a vanishing-order fit is flagged.
pub const VANISHING_FIT_LIMIT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingOrderEstimate {
    pub point: [f64; 2],
    pub slope: f64,
    pub radii_used: Vec<f64>,
    pub residual: f64,
    pub reliable: bool,
}

/// Half the slope of `log ⨍_{B_r} u²` against `log r`.
pub fn vanishing_order(
    lf: &LiftedField,
    x0: [f64; 2],
    radii: &[f64],
) -> Result<VanishingOrderEstimate> {
    if radii.len() < 3 {
        return Err(invalid("radii", "need at least 3 radii"));
    }
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |a, &r| (a.0.min(r), a.1.max(r)));
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(invalid("radii", "must span at least one decade"));
    }
    let dom = &lf.base.domain;
    if !dom.contains(x0) {
        return Err(LabError::EmptyRegion);
    }
    let cfg = QuadConfig::default();
    let mut xs = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for &r in radii {
        let exit = |t: f64| dom.exit_distance(x0, t);
        let breaks = dom.clip_breaks(x0, r);
        let res = integrate_clipped_disk::<2>(r, &exit, &breaks, &cfg, &|off, _| {
            let u = lf.base.value([x0[0] + off[0], x0[1] + off[1]]);
            [u * u, 1.0]
        });
        let mean = res.value[0] / res.value[1];
        if !(mean > 0.0) {
            return Err(LabError::TrivialField(format!(
                "u vanishes on B_{r}({x0:?})"
            )));
        }
        xs.push(r.ln());
        ys.push(mean.ln());
    }
    let (slope, _, rms) = least_squares(&xs, &ys);
    Ok(VanishingOrderEstimate {
        point: x0,
        slope: 0.5 * slope,
        radii_used: radii.to_vec(),
        residual: rms,
        reliable: rms <= VANISHING_FIT_LIMIT,
    })
}

/// Ordinary least squares `y ≈ a·x + b`; returns `(a, b, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a * x - b).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (a, b, rms)
}

/// Axis-aligned cube in straightened coordinates `(y₁, y₂, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: [f64; 3],
    pub side: f64,
}

impl Cube {
    pub fn diameter(&self) -> f64 {
        self.side * LIFTED_DIM.sqrt()
    }

    pub fn center(&self) -> [f64; 3] {
        let h = 0.5 * self.side;
        [self.lo[0] + h, self.lo[1] + h, self.lo[2] + h]
    }
}

/// The lifted solution read through a boundary chart and extended oddly
/// across `{y₂ = 0}`. Points mapped outside the domain contribute zero.
pub struct ChartField<'a> {
    pub lf: &'a LiftedField,
    pub chart: StraightenedChart,
}

impl<'a> ChartField<'a> {
    pub fn new(lf: &'a LiftedField, chart: StraightenedChart) -> ChartField<'a> {
        ChartField { lf, chart }
    }

    /// `ũ` on the `t = 0` slice.
    pub fn value(&self, y: [f64; 2]) -> f64 {
        let (sign, yn) = if y[1] < 0.0 {
            (-1.0, -y[1])
        } else {
            (1.0, y[1])
        };
        let yy = [y[0], yn, 0.0];
        if !matches!(self.chart.graph, BoundaryGraph::Flat) && !self.chart.in_chart(yy, false) {
            return 0.0;
        }
        let x = self.chart.psi(yy);
        let x = [x[0], x[1]];
        if !self.lf.base.domain.contains(x) {
            return 0.0;
        }
        sign * self.lf.base.value(x)
    }

    /// `sup |ũ|` over the 3D ball of radius `r` centered at `(y, t₀)`, divided by `e^{√λ t₀}`.
    pub fn sup_on_ball(&self, y: [f64; 2], r: f64) -> f64 {
        let s = self.lf.sqrt_lambda();
        let (v, _) = maximize_clipped_disk(r, &|_| f64::INFINITY, 96, 24, &|off, tau| {
            self.value([y[0] + off[0], y[1] + off[1]]).abs() * (s * tau).exp()
        });
        v
    }

    /// `M_ũ` at `(y, t₀)`; independent of `t₀`.
    pub fn doubling_index(&self, y: [f64; 2], r: f64) -> Result<DoublingEval> {
        let outer = self.sup_on_ball(y, r);
        let inner = self.sup_on_ball(y, r / 2.0);
        index_from_sups(y, r, outer.max(inner), inner)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDoubling {
    pub cube: Cube,
    pub m_q: f64,
    pub argmax_center: [f64; 2],
    pub argmax_radius: f64,
    pub radii: Vec<f64>,
    pub lattice_points: usize,
    pub refinement_points: usize,
    /// Increase of `M` gained by the refinement pass; used as the error bar.
    pub refinement_gain: f64,
}

/// Lattice points per cube edge for `M(Q)`.
pub const CUBE_LATTICE: usize = 8;

/// Radii above this cap are excluded so that every ball stays inside the slab.
pub const RADIUS_CAP: f64 = 0.99;

/// `M(Q)` as the maximum of `M(y₀, r)` over a lattice of centers in `Q`
/// (spacing side/8) and 8 geometric radii up to `min(10(n+1)·diam Q, 0.99)`,
/// followed by one refinement pass around the argmax.
pub fn cube_doubling(cf: &ChartField<'_>, cube: &Cube) -> Result<CubeDoubling> {
    let r_max = (10.0 * LIFTED_DIM * cube.diameter()).min(RADIUS_CAP);
    let radii: Vec<f64> = (0..8).map(|k| r_max * 2f64.powi(k - 7)).collect();
    let step = cube.side / CUBE_LATTICE as f64;
    let mut pairs = Vec::new();
    for i in 0..=CUBE_LATTICE {
        for j in 0..=CUBE_LATTICE {
            let y = [cube.lo[0] + i as f64 * step, cube.lo[1] + j as f64 * step];
            for &r in &radii {
                pairs.push((y, r));
            }
        }
    }
    let eval = |&(y, r): &([f64; 2], f64)| -> Option<DoublingEval> { cf.doubling_index(y, r).ok() };
    let first: Vec<DoublingEval> = pairs.par_iter().filter_map(eval).collect();
    let best = first
        .iter()
        .copied()
        .reduce(|a, e| if e.m > a.m { e } else { a })
        .ok_or_else(|| LabError::TrivialField("ũ vanishes on every lattice ball".into()))?;

    let half = 0.5 * step;
    let mut refine = Vec::new();
    for di in -2i32..=2 {
        for dj in -2i32..=2 {
            let y = [
                (best.center[0] + di as f64 * half / 2.0).clamp(cube.lo[0], cube.lo[0] + cube.side),
                (best.center[1] + dj as f64 * half / 2.0).clamp(cube.lo[1], cube.lo[1] + cube.side),
            ];
            for k in [-0.25f64, 0.0, 0.25] {
                let r = (best.radius * 2f64.powf(k)).min(r_max);
                refine.push((y, r));
            }
        }
    }
    let second: Vec<DoublingEval> = refine.par_iter().filter_map(eval).collect();
    let overall = second
        .iter()
        .copied()
        .fold(best, |a, e| if e.m > a.m { e } else { a });
    Ok(CubeDoubling {
        cube: *cube,
        m_q: overall.m,
        argmax_center: overall.center,
        argmax_radius: overall.radius,
        radii,
        lattice_points: pairs.len(),
        refinement_points: refine.len(),
        refinement_gain: overall.m - best.m,
    })
}
