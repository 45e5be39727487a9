//! Planar domains with C² boundary, star-shapedness certificates, and the
//! boundary-straightening chart with its coefficient matrices.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// The unit disk centered at the origin.
    UnitDisk,
    /// `[0, width] × [0, height]`.
    Rectangle { width: f64, height: f64 },
    /// Polar curve `ρ(θ) = radius + eps·cos(mode·θ)` about the origin.
    PerturbedDisk { radius: f64, eps: f64, mode: u32 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: [f64; 2],
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub curvature: f64,
    /// Curve parameter: polar angle for disks, arclength for rectangles.
    pub param: f64,
    /// Set on rectangle corners, where the boundary is not C².
    pub corner: bool,
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub kind: DomainKind,
    pub samples: Vec<BoundarySample>,
    collar: OnceLock<CollarParams>,
}

/// Point, first and second derivative of a smooth boundary parametrization.
#[derive(Clone, Copy, Debug)]
pub struct CurvePoint {
    pub c: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

impl DomainKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainKind::UnitDisk => Ok(()),
            DomainKind::Rectangle { width, height } => {
                if !(width > 0.0 && height > 0.0) {
                    return Err(invalid("rectangle", "width and height must be positive"));
                }
                Ok(())
            }
            DomainKind::PerturbedDisk { radius, eps, mode } => {
                if !(radius > 0.0) {
                    return Err(invalid("radius", "must be positive"));
                }
                let m2 = (mode as f64).powi(2);
                if eps.abs() * m2 >= radius / 4.0 || eps.abs() >= radius / 4.0 {
                    let (lo, hi) = polar_curvature_range(radius, eps, mode, 4096);
                    return Err(LabError::NonSimpleBoundary {
                        min_curvature: lo,
                        max_curvature: hi,
                    });
                }
                Ok(())
            }
        }
    }

    /// Smooth parametrization by polar angle (disks only).
    pub fn curve(&self, theta: f64) -> Option<CurvePoint> {
        let (rho, d, dd) = match *self {
            DomainKind::UnitDisk => (1.0, 0.0, 0.0),
            DomainKind::PerturbedDisk { radius, eps, mode } => {
                let m = mode as f64;
                (
                    radius + eps * (m * theta).cos(),
                    -eps * m * (m * theta).sin(),
                    -eps * m * m * (m * theta).cos(),
                )
            }
            DomainKind::Rectangle { .. } => return None,
        };
        let (s, c) = theta.sin_cos();
        Some(CurvePoint {
            c: [rho * c, rho * s],
            d1: [d * c - rho * s, d * s + rho * c],
            d2: [(dd - rho) * c - 2.0 * d * s, (dd - rho) * s + 2.0 * d * c],
        })
    }

    fn polar_radius(&self, theta: f64) -> f64 {
        match *self {
            DomainKind::UnitDisk => 1.0,
            DomainKind::PerturbedDisk { radius, eps, mode } => {
                radius + eps * (mode as f64 * theta).cos()
            }
            DomainKind::Rectangle { .. } => f64::NAN,
        }
    }
}

fn polar_curvature(radius: f64, eps: f64, mode: u32, theta: f64) -> f64 {
    let m = mode as f64;
    let r = radius + eps * (m * theta).cos();
    let d = -eps * m * (m * theta).sin();
    let dd = -eps * m * m * (m * theta).cos();
    (r * r + 2.0 * d * d - r * dd) / (r * r + d * d).powf(1.5)
}

fn polar_curvature_range(radius: f64, eps: f64, mode: u32, n: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let k = polar_curvature(radius, eps, mode, TAU * i as f64 / n as f64);
        lo = lo.min(k);
        hi = hi.max(k);
    }
    (lo, hi)
}

impl Domain {
    /// Builds the domain with `resolution` boundary samples equally spaced in arclength.
    pub fn build(kind: DomainKind, resolution: usize) -> Result<Domain> {
        if resolution < 64 {
            return Err(invalid("resolution", "must be at least 64"));
        }
        kind.validate()?;
        let samples = match kind {
            DomainKind::Rectangle { width, height } => rectangle_samples(width, height, resolution),
            _ => smooth_samples(&kind, resolution),
        };
        Ok(Domain {
            kind,
            samples,
            collar: OnceLock::new(),
        })
    }

    pub fn perimeter(&self) -> f64 {
        match self.kind {
            DomainKind::UnitDisk => TAU,
            DomainKind::Rectangle { width, height } => 2.0 * (width + height),
            DomainKind::PerturbedDisk { .. } => arclength_table(&self.kind, 1 << 14)
                .last()
                .copied()
                .unwrap_or(0.0),
        }
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            DomainKind::UnitDisk => ([-1.0, -1.0], [1.0, 1.0]),
            DomainKind::Rectangle { width, height } => ([0.0, 0.0], [width, height]),
            DomainKind::PerturbedDisk { radius, eps, .. } => {
                let r = radius + eps.abs();
                ([-r, -r], [r, r])
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::UnitDisk => PI,
            DomainKind::Rectangle { width, height } => width * height,
            DomainKind::PerturbedDisk { radius, eps, .. } => {
                PI * (radius * radius + 0.5 * eps * eps)
            }
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        match self.kind {
            DomainKind::Rectangle { width, height } => {
                x[0] > 0.0 && x[0] < width && x[1] > 0.0 && x[1] < height
            }
            _ => norm(x) < self.kind.polar_radius(x[1].atan2(x[0])),
        }
    }

    /// Distance from an interior point to the boundary.
    pub fn boundary_distance(&self, x: [f64; 2]) -> f64 {
        match self.kind {
            DomainKind::UnitDisk => 1.0 - norm(x),
            DomainKind::Rectangle { width, height } => {
                x[0].min(width - x[0]).min(x[1]).min(height - x[1])
            }
            DomainKind::PerturbedDisk { .. } => {
                let (i, _) = self
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, norm(sub(s.point, x))))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                let t0 = self.samples[i].param;
                let dt = TAU / self.samples.len() as f64 * 2.0;
                let f = |t: f64| norm(sub(self.kind.curve(t).unwrap().c, x));
                golden_min(f, t0 - dt, t0 + dt).1
            }
        }
    }

    /// Distance from an interior point `x0` to the boundary along direction `theta`.
    pub fn exit_distance(&self, x0: [f64; 2], theta: f64) -> f64 {
        let d = [theta.cos(), theta.sin()];
        match self.kind {
            DomainKind::UnitDisk => {
                let b = dot(x0, d);
                let c = dot(x0, x0) - 1.0;
                -b + (b * b - c).max(0.0).sqrt()
            }
            DomainKind::Rectangle { width, height } => {
                let mut t = f64::INFINITY;
                if d[0] > 1e-300 {
                    t = t.min((width - x0[0]) / d[0]);
                } else if d[0] < -1e-300 {
                    t = t.min(-x0[0] / d[0]);
                }
                if d[1] > 1e-300 {
                    t = t.min((height - x0[1]) / d[1]);
                } else if d[1] < -1e-300 {
                    t = t.min(-x0[1] / d[1]);
                }
                t.max(0.0)
            }
            DomainKind::PerturbedDisk { radius, eps, .. } => {
                let g = |s: f64| {
                    let p = [x0[0] + s * d[0], x0[1] + s * d[1]];
                    norm(p) - self.kind.polar_radius(p[1].atan2(p[0]))
                };
                let (mut lo, mut hi) = (0.0, 2.0 * (radius + eps.abs()) + norm(x0));
                if g(lo) >= 0.0 {
                    return 0.0;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Angles (about `x0`) where the clipped radius `min(r, exit)` has a kink.
    pub fn clip_breaks(&self, x0: [f64; 2], r: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if let DomainKind::Rectangle { width, height } = self.kind {
            for c in [[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]] {
                out.push((c[1] - x0[1]).atan2(c[0] - x0[0]));
            }
        }
        if self.boundary_distance(x0) >= r {
            return out;
        }
        let n = 720;
        let f = |t: f64| self.exit_distance(x0, t) - r;
        let mut prev = f(0.0);
        for i in 1..=n {
            let t = TAU * i as f64 / n as f64;
            let cur = f(t);
            if prev.signum() != cur.signum() {
                let (mut a, mut b) = (t - TAU / n as f64, t);
                let fa = prev;
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if f(m).signum() == fa.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev = cur;
        }
        out
    }

    /// Certificate for star-shapedness of `B_r(x0) ∩ Ω` about `x0`.
    pub fn is_star_shaped(&self, x0: [f64; 2], r: f64) -> StarShape {
        let mut margin = f64::INFINITY;
        let mut inside = 0usize;
        for s in &self.samples {
            if norm(sub(s.point, x0)) <= r {
                inside += 1;
                margin = margin.min(dot(s.normal, sub(s.point, x0)));
            }
        }
        if inside == 0 {
            margin = self
                .samples
                .iter()
                .map(|s| dot(s.normal, sub(s.point, x0)))
                .fold(f64::INFINITY, f64::min);
        }
        StarShape {
            star_shaped: margin >= 0.0,
            margin,
            samples_in_ball: inside,
        }
    }

    /// Largest width for which the inward normal map is injective on the samples.
    ///
    /// Uses the tangent-ball radius `|x_j − x_i|² / (2 ν_i·(x_i − x_j))`; rectangle
    /// samples closer than half the short side to a corner are skipped.
    pub fn normal_injectivity_width(&self) -> f64 {
        let skip = match self.kind {
            DomainKind::Rectangle { width, height } => {
                let q = 0.5 * width.min(height);
                let corners = [[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]];
                self.samples
                    .iter()
                    .map(|s| corners.iter().any(|c| norm(sub(s.point, *c)) < q - 1e-12))
                    .collect()
            }
            _ => vec![false; self.samples.len()],
        };
        let mut best = f64::INFINITY;
        for (i, si) in self.samples.iter().enumerate() {
            if skip[i] {
                continue;
            }
            for (j, sj) in self.samples.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = sub(si.point, sj.point);
                let den = 2.0 * dot(si.normal, d);
                if den > 1e-14 {
                    best = best.min(dot(d, d) / den);
                }
            }
        }
        best
    }

    pub fn max_curvature(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| !s.corner)
            .map(|s| s.curvature.abs())
            .fold(0.0, f64::max)
    }

    /// Constants for the star-shapedness lemma: `C0 = 2·max curvature`
    /// (floored), `r0` shrunk from `0.95·δ/10` until a grid certification passes.
    pub fn collar_params(&self) -> CollarParams {
        *self.collar.get_or_init(|| self.compute_collar_params())
    }

    fn compute_collar_params(&self) -> CollarParams {
        let delta = self.normal_injectivity_width();
        let safety_factor = 2.0;
        let c0 = (safety_factor * self.max_curvature()).max(C0_FLOOR);
        let mut r0 = 0.95 * delta / 10.0;
        let mut shrinks = 0;
        while !self.certify_grid(c0, r0) && shrinks < 30 {
            r0 *= 0.8;
            shrinks += 1;
        }
        CollarParams {
            delta,
            r0,
            c0,
            safety_factor,
            shrinks,
        }
    }

    fn certify_grid(&self, c0: f64, r0: f64) -> bool {
        let (lo, hi) = self.bounding_box();
        let n = 24;
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                ];
                if !self.contains(x) {
                    continue;
                }
                let dist = self.boundary_distance(x);
                for k in 1..=4 {
                    let r = r0 * k as f64 / 4.0;
                    if dist >= c0 * r * r && !self.is_star_shaped(x, r).star_shaped {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Point on the boundary closest to an exterior or interior query, with its parameter.
    fn nearest_param(&self, x: [f64; 2]) -> (f64, f64) {
        let (i, _) = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, norm(sub(s.point, x))))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let t0 = self.samples[i].param;
        match self.kind {
            DomainKind::Rectangle { .. } => {
                let ds = self.perimeter() / self.samples.len() as f64 * 2.0;
                golden_min(|s| norm(sub(self.rect_point(s), x)), t0 - ds, t0 + ds)
            }
            _ => {
                let dt = TAU / self.samples.len() as f64 * 2.0;
                golden_min(
                    |t| norm(sub(self.kind.curve(t).unwrap().c, x)),
                    t0 - dt,
                    t0 + dt,
                )
            }
        }
    }

    fn rect_point(&self, s: f64) -> [f64; 2] {
        let DomainKind::Rectangle {
            width: w,
            height: h,
        } = self.kind
        else {
            unreachable!()
        };
        let p = 2.0 * (w + h);
        let s = s.rem_euclid(p);
        if s < w {
            [s, 0.0]
        } else if s < w + h {
            [w, s - w]
        } else if s < 2.0 * w + h {
            [w - (s - w - h), h]
        } else {
            [0.0, h - (s - 2.0 * w - h)]
        }
    }

    /// Boundary-straightening chart anchored at a boundary point.
    pub fn straighten(&self, anchor: [f64; 2], chart_radius: f64) -> Result<StraightenedChart> {
        if !(chart_radius > 0.0) {
            return Err(invalid("chart_radius", "must be positive"));
        }
        let (param, distance) = self.nearest_param(anchor);
        if distance > 1e-9 {
            return Err(LabError::NotOnBoundary {
                x: anchor[0],
                y: anchor[1],
                distance,
            });
        }
        match self.kind {
            DomainKind::Rectangle { width, height } => {
                let corners = [[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]];
                let near = corners
                    .iter()
                    .map(|c| norm(sub(anchor, *c)))
                    .fold(f64::INFINITY, f64::min);
                if near < chart_radius {
                    return Err(invalid(
                        "anchor",
                        format!("corner within chart radius ({near:.4} < {chart_radius:.4})"),
                    ));
                }
                let p = self.rect_point(param);
                let s = param.rem_euclid(2.0 * (width + height));
                let tangent = if s < width {
                    [1.0, 0.0]
                } else if s < width + height {
                    [0.0, 1.0]
                } else if s < 2.0 * width + height {
                    [-1.0, 0.0]
                } else {
                    [0.0, -1.0]
                };
                Ok(StraightenedChart::new(
                    p,
                    tangent,
                    BoundaryGraph::Flat,
                    chart_radius,
                ))
            }
            DomainKind::UnitDisk => {
                if chart_radius >= 1.0 {
                    return Err(invalid("chart_radius", "must be below the disk radius"));
                }
                let cp = self.kind.curve(param).unwrap();
                let t = [cp.d1[0] / norm(cp.d1), cp.d1[1] / norm(cp.d1)];
                Ok(StraightenedChart::new(
                    cp.c,
                    t,
                    BoundaryGraph::Arc { radius: 1.0 },
                    chart_radius,
                ))
            }
            DomainKind::PerturbedDisk { radius, .. } => {
                if chart_radius >= 0.5 * radius {
                    return Err(invalid(
                        "chart_radius",
                        "must be below half the mean radius",
                    ));
                }
                let cp = self.kind.curve(param).unwrap();
                let t = [cp.d1[0] / norm(cp.d1), cp.d1[1] / norm(cp.d1)];
                Ok(StraightenedChart::new(
                    cp.c,
                    t,
                    BoundaryGraph::Parametric {
                        kind: self.kind.clone(),
                        anchor_param: param,
                    },
                    chart_radius,
                ))
            }
        }
    }
}

const C0_FLOOR: f64 = 1e-3;

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

fn arclength_table(kind: &DomainKind, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let h = TAU / n as f64;
    let speed = |t: f64| norm(kind.curve(t).unwrap().d1);
    let mut acc = 0.0;
    for i in 0..n {
        let a = i as f64 * h;
        // Simpson on each subinterval.
        acc += h / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * h) + speed(a + h));
        out.push(acc);
    }
    out
}

fn smooth_samples(kind: &DomainKind, resolution: usize) -> Vec<BoundarySample> {
    let fine = 64 * resolution;
    let table = arclength_table(kind, fine);
    let total = *table.last().unwrap();
    let h = TAU / fine as f64;
    let mut out = Vec::with_capacity(resolution);
    let mut seg = 0usize;
    for i in 0..resolution {
        let target = total * i as f64 / resolution as f64;
        while seg + 1 < fine && table[seg + 1] < target {
            seg += 1;
        }
        let frac = (target - table[seg]) / (table[seg + 1] - table[seg]).max(1e-300);
        let theta = (seg as f64 + frac) * h;
        let cp = kind.curve(theta).unwrap();
        let sp = norm(cp.d1);
        let normal = [cp.d1[1] / sp, -cp.d1[0] / sp];
        let curvature = (cp.d1[0] * cp.d2[1] - cp.d1[1] * cp.d2[0]) / sp.powi(3);
        out.push(BoundarySample {
            point: cp.c,
            normal,
            curvature,
            param: theta,
            corner: false,
        });
    }
    out
}

fn rectangle_samples(w: f64, h: f64, resolution: usize) -> Vec<BoundarySample> {
    let p = 2.0 * (w + h);
    let dom = Domain {
        kind: DomainKind::Rectangle {
            width: w,
            height: h,
        },
        samples: Vec::new(),
        collar: OnceLock::new(),
    };
    let corner_tol = 1e-12 * p;
    (0..resolution)
        .map(|i| {
            let s = p * i as f64 / resolution as f64;
            let pt = dom.rect_point(s);
            let on_corner = [0.0, w, w + h, 2.0 * w + h]
                .iter()
                .any(|c| (s - c).abs() < corner_tol);
            let normal = if on_corner {
                let cx = if pt[0] < 0.5 * w { -1.0 } else { 1.0 };
                let cy = if pt[1] < 0.5 * h { -1.0 } else { 1.0 };
                [cx / 2f64.sqrt(), cy / 2f64.sqrt()]
            } else if s < w {
                [0.0, -1.0]
            } else if s < w + h {
                [1.0, 0.0]
            } else if s < 2.0 * w + h {
                [0.0, 1.0]
            } else {
                [-1.0, 0.0]
            };
            BoundarySample {
                point: pt,
                normal,
                curvature: 0.0,
                param: s,
                corner: on_corner,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StarShape {
    pub star_shaped: bool,
    /// Minimum of `ν·(x − x0)` over boundary samples in the ball (over all
    /// samples when none lies in the ball).
    pub margin: f64,
    pub samples_in_ball: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarParams {
    /// Tubular neighborhood width.
    pub delta: f64,
    /// Admissible radius.
    pub r0: f64,
    /// Star-shapedness constant.
    pub c0: f64,
    /// Factor applied to the maximum curvature to obtain `c0`.
    pub safety_factor: f64,
    /// How many times `r0` was shrunk before the grid certification passed.
    pub shrinks: u32,
}

impl CollarParams {
    /// Hypothesis `dist(x0, ∂Ω) ≥ C0 r²` of the star-shapedness lemma.
    pub fn admits(&self, dist: f64, r: f64) -> bool {
        dist >= self.c0 * r * r
    }
}

/// The boundary near the chart anchor as a graph `n = γ(s)` in the local frame.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryGraph {
    Flat,
    /// Circle of the given radius tangent at the anchor, curving inward.
    Arc {
        radius: f64,
    },
    /// `γ(s) = curvature·s²/2`.
    Parabola {
        curvature: f64,
    },
    /// Implicit graph of a polar-parametrized boundary.
    Parametric {
        kind: DomainKind,
        anchor_param: f64,
    },
}

#[derive(Clone, Debug)]
pub struct StraightenedChart {
    pub anchor: [f64; 2],
    pub tangent: [f64; 2],
    /// Inward unit normal at the anchor.
    pub inward: [f64; 2],
    pub graph: BoundaryGraph,
    pub chart_radius: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Fitted constant in `|∇γ(s)| ≤ C|s|`.
    pub gradient_lipschitz: f64,
    /// `max |∇γ|` over the chart.
    pub max_slope: f64,
}

impl StraightenedChart {
    pub fn new(
        anchor: [f64; 2],
        tangent: [f64; 2],
        graph: BoundaryGraph,
        chart_radius: f64,
    ) -> StraightenedChart {
        let inward = [-tangent[1], tangent[0]];
        let mut chart = StraightenedChart {
            anchor,
            tangent,
            inward,
            graph,
            chart_radius,
            tau1: 1.0,
            tau2: 1.0,
            gradient_lipschitz: 0.0,
            max_slope: 0.0,
        };
        let mut slope = 0.0f64;
        let mut lip = 0.0f64;
        for i in 0..=200 {
            let s = chart_radius * (2.0 * i as f64 / 200.0 - 1.0);
            let g = chart.gamma_prime(s).abs();
            slope = slope.max(g);
            if s != 0.0 {
                lip = lip.max(g / s.abs());
            }
        }
        chart.max_slope = slope;
        chart.gradient_lipschitz = lip;
        chart.tau1 = 1.0 / (1.0 + slope);
        chart.tau2 = 1.0 + slope;
        chart
    }

    /// Flat chart for a straight boundary through `anchor` with the given tangent.
    pub fn flat(anchor: [f64; 2], tangent: [f64; 2], chart_radius: f64) -> StraightenedChart {
        StraightenedChart::new(anchor, tangent, BoundaryGraph::Flat, chart_radius)
    }

    fn parametric_theta(&self, kind: &DomainKind, theta0: f64, s: f64) -> f64 {
        let mut th = theta0;
        for _ in 0..60 {
            let cp = kind.curve(th).unwrap();
            let f = dot(self.tangent, sub(cp.c, self.anchor)) - s;
            let df = dot(self.tangent, cp.d1);
            let step = f / df;
            th -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        th
    }

    pub fn gamma(&self, s: f64) -> f64 {
        match &self.graph {
            BoundaryGraph::Flat => 0.0,
            BoundaryGraph::Arc { radius } => radius - (radius * radius - s * s).sqrt(),
            BoundaryGraph::Parabola { curvature } => 0.5 * curvature * s * s,
            BoundaryGraph::Parametric { kind, anchor_param } => {
                let th = self.parametric_theta(kind, *anchor_param, s);
                dot(self.inward, sub(kind.curve(th).unwrap().c, self.anchor))
            }
        }
    }

    pub fn gamma_prime(&self, s: f64) -> f64 {
        match &self.graph {
            BoundaryGraph::Flat => 0.0,
            BoundaryGraph::Arc { radius } => s / (radius * radius - s * s).sqrt(),
            BoundaryGraph::Parabola { curvature } => curvature * s,
            BoundaryGraph::Parametric { kind, anchor_param } => {
                let th = self.parametric_theta(kind, *anchor_param, s);
                let cp = kind.curve(th).unwrap();
                dot(self.inward, cp.d1) / dot(self.tangent, cp.d1)
            }
        }
    }

    pub fn gamma_second(&self, s: f64) -> f64 {
        match &self.graph {
            BoundaryGraph::Flat => 0.0,
            BoundaryGraph::Arc { radius } => radius * radius / (radius * radius - s * s).powf(1.5),
            BoundaryGraph::Parabola { curvature } => *curvature,
            BoundaryGraph::Parametric { kind, anchor_param } => {
                let th = self.parametric_theta(kind, *anchor_param, s);
                let cp = kind.curve(th).unwrap();
                let (a1, b1) = (dot(self.tangent, cp.d1), dot(self.inward, cp.d1));
                let (a2, b2) = (dot(self.tangent, cp.d2), dot(self.inward, cp.d2));
                (b2 * a1 - b1 * a2) / a1.powi(3)
            }
        }
    }

    /// `Φ(x, t) = (s, n − γ(s), t)` with `(s, n)` the local frame coordinates of `x`.
    pub fn phi(&self, z: [f64; 3]) -> [f64; 3] {
        let d = sub([z[0], z[1]], self.anchor);
        let s = dot(self.tangent, d);
        let n = dot(self.inward, d);
        [s, n - self.gamma(s), z[2]]
    }

    pub fn psi(&self, y: [f64; 3]) -> [f64; 3] {
        let n = y[1] + self.gamma(y[0]);
        [
            self.anchor[0] + y[0] * self.tangent[0] + n * self.inward[0],
            self.anchor[1] + y[0] * self.tangent[1] + n * self.inward[1],
            y[2],
        ]
    }

    pub fn in_chart(&self, y: [f64; 3], reflected: bool) -> bool {
        let r = self.chart_radius;
        y[0].abs() <= r && y[1].abs() <= r && (reflected || y[1] >= -1e-12)
    }

    /// Coefficient matrix of the straightened operator at `y`, or of its odd
    /// reflection across `{y_n = 0}` when `reflected` is set.
    pub fn coefficient_matrix(&self, y: [f64; 3], reflected: bool) -> Result<CoefficientMatrix> {
        if !self.in_chart(y, reflected) {
            return Err(LabError::OutsideChart { point: y });
        }
        let g = self.gamma_prime(y[0]);
        let sign = if reflected && y[1] < 0.0 { -1.0 } else { 1.0 };
        let off = -g * sign;
        let entries = Matrix3::new(1.0, off, 0.0, off, 1.0 + g * g, 0.0, 0.0, 0.0, 1.0);
        Ok(CoefficientMatrix { entries, reflected })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientMatrix {
    pub entries: Matrix3<f64>,
    pub reflected: bool,
}

impl CoefficientMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.symmetric_eigenvalues().min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disk_normals_are_radial() {
        let d = Domain::build(DomainKind::UnitDisk, 256).unwrap();
        assert_eq!(d.samples.len(), 256);
        for s in &d.samples {
            assert!((norm(s.point) - 1.0).abs() < 1e-12);
            assert!((s.normal[0] - s.point[0]).abs() < 1e-12);
            assert!((s.normal[1] - s.point[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_polyline_perimeter() {
        let d = Domain::build(
            DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            256,
        )
        .unwrap();
        let n = d.samples.len();
        let per: f64 = (0..n)
            .map(|i| norm(sub(d.samples[(i + 1) % n].point, d.samples[i].point)))
            .sum();
        assert!((per - 4.0).abs() < 1e-6);
    }

    #[test]
    fn large_perturbation_is_rejected() {
        let err = Domain::build(
            DomainKind::PerturbedDisk {
                radius: 1.0,
                eps: 0.1,
                mode: 3,
            },
            256,
        )
        .unwrap_err();
        assert!(matches!(err, LabError::NonSimpleBoundary { .. }));
    }

    #[test]
    fn star_shape_at_disk_center() {
        let d = Domain::build(DomainKind::UnitDisk, 256).unwrap();
        let c = d.is_star_shaped([0.0, 0.0], 0.9);
        assert!(c.star_shaped);
        assert!((c.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_center_is_star_shaped() {
        let d = Domain::build(
            DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            256,
        )
        .unwrap();
        assert!(d.is_star_shaped([0.5, 0.5], 0.25).star_shaped);
    }

    #[test]
    fn flat_chart_gives_identity() {
        let ch = StraightenedChart::flat([0.5, 0.0], [1.0, 0.0], 0.2);
        let m = ch.coefficient_matrix([0.05, 0.1, 0.0], false).unwrap();
        assert_eq!(m.entries, Matrix3::identity());
    }

    #[test]
    fn parabola_chart_entries() {
        let ch = StraightenedChart::new(
            [0.0, 0.0],
            [1.0, 0.0],
            BoundaryGraph::Parabola { curvature: 1.0 },
            0.5,
        );
        let m = ch
            .coefficient_matrix([0.3, 0.1, 0.0], false)
            .unwrap()
            .entries;
        assert!((m[(0, 1)] + 0.3).abs() < 1e-15);
        assert!((m[(1, 0)] + 0.3).abs() < 1e-15);
        assert!((m[(1, 1)] - 1.09).abs() < 1e-15);
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(2, 2)], 1.0);
        let r = ch
            .coefficient_matrix([0.3, -0.1, 0.0], true)
            .unwrap()
            .entries;
        assert!((r[(0, 1)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn chart_rejects_points_outside() {
        let ch = StraightenedChart::flat([0.5, 0.0], [1.0, 0.0], 0.2);
        assert!(ch.coefficient_matrix([0.3, 0.1, 0.0], false).is_err());
        assert!(ch.coefficient_matrix([0.1, -0.1, 0.0], false).is_err());
    }

    #[test]
    fn straighten_rejects_interior_anchor() {
        let d = Domain::build(DomainKind::UnitDisk, 256).unwrap();
        assert!(matches!(
            d.straighten([0.5, 0.0], 0.1),
            Err(LabError::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn rectangle_chart_keeps_away_from_corners() {
        let d = Domain::build(
            DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            256,
        )
        .unwrap();
        assert!(d.straighten([0.05, 0.0], 0.1).is_err());
        assert!(d.straighten([0.5, 0.0], 0.1).is_ok());
    }
}
