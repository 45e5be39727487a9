//! Quadrature and maximization over a disk clipped by a convex domain.
//!
//! Integrals use polar coordinates about the disk center with the radial
//! substitution `ρ = r sin φ`, so that `τ = √(r² − ρ²) = r cos φ` stays smooth
//! up to the rim. Angular panels are bisected adaptively.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Maximum bisection depth for angular and radial panels.
    pub depth: u32,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Relative acceptance tolerance per panel.
    pub rel_tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            depth: 6,
            order: 12,
            rel_tol: 1e-11,
        }
    }
}

impl QuadConfig {
    /// Setting for piecewise-linear mesh fields, whose integrands are only
    /// continuous across element edges.
    pub fn for_mesh() -> QuadConfig {
        QuadConfig {
            depth: 3,
            order: 6,
            rel_tol: 1e-6,
        }
    }

    pub fn refined(&self) -> QuadConfig {
        QuadConfig {
            depth: self.depth * 2,
            order: self.order + self.order / 2,
            rel_tol: self.rel_tol * 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PolarResult<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    pub evaluations: usize,
}

struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn new(order: usize) -> Rule {
        let (x, w) = gauss_legendre(order);
        Rule { x, w }
    }

    fn apply<const K: usize>(
        &self,
        a: f64,
        b: f64,
        f: &mut dyn FnMut(f64) -> [f64; K],
    ) -> [f64; K] {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; K];
        for (xi, wi) in self.x.iter().zip(&self.w) {
            let v = f(mid + half * xi);
            for k in 0..K {
                acc[k] += wi * half * v[k];
            }
        }
        acc
    }
}

fn accept<const K: usize>(coarse: &[f64; K], fine: &[f64; K], tol: f64) -> bool {
    coarse
        .iter()
        .zip(fine)
        .all(|(c, f)| (c - f).abs() <= tol * f.abs().max(1e-300) || (c - f).abs() < 1e-300)
}

#[allow(clippy::too_many_arguments)]
fn adapt<const K: usize>(
    rule: &Rule,
    a: f64,
    b: f64,
    whole: [f64; K],
    depth: u32,
    tol: f64,
    f: &mut dyn FnMut(f64) -> [f64; K],
    value: &mut [f64; K],
    error: &mut [f64; K],
) {
    let m = 0.5 * (a + b);
    let left = rule.apply(a, m, f);
    let right = rule.apply(m, b, f);
    let mut fine = [0.0; K];
    for k in 0..K {
        fine[k] = left[k] + right[k];
    }
    if depth == 0 || accept(&whole, &fine, tol) {
        for k in 0..K {
            value[k] += fine[k];
            error[k] += (fine[k] - whole[k]).abs();
        }
        return;
    }
    adapt(rule, a, m, left, depth - 1, tol, f, value, error);
    adapt(rule, m, b, right, depth - 1, tol, f, value, error);
}

/// Adaptive 1D Gauss–Legendre integration of a vector-valued function.
pub fn integrate_1d<const K: usize>(
    a: f64,
    b: f64,
    cfg: &QuadConfig,
    f: &mut dyn FnMut(f64) -> [f64; K],
) -> ([f64; K], [f64; K]) {
    let rule = Rule::new(cfg.order);
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    let whole = rule.apply(a, b, f);
    adapt(
        &rule,
        a,
        b,
        whole,
        cfg.depth,
        cfg.rel_tol,
        f,
        &mut value,
        &mut error,
    );
    (value, error)
}

/// Integrates `f(offset, τ)` over `{ρ < min(r, exit(θ))}` in polar coordinates
/// about the disk center, where `offset = ρ(cos θ, sin θ)` and `τ = √(r² − ρ²)`.
///
/// `exit(θ)` is the distance from the center to the domain boundary along the
/// ray at angle `θ`; `breaks` lists angles where the clipped radius has a kink.
pub fn integrate_clipped_disk<const K: usize>(
    r: f64,
    exit: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    cfg: &QuadConfig,
    f: &dyn Fn([f64; 2], f64) -> [f64; K],
) -> PolarResult<K> {
    let rule = Rule::new(cfg.order);
    let mut evaluations = 0usize;
    let mut angular = |theta: f64| -> [f64; K] {
        let s = exit(theta).min(r);
        if s <= 0.0 {
            return [0.0; K];
        }
        let phi_max = if s >= r { FRAC_PI_2 } else { (s / r).asin() };
        let (c, sn) = (theta.cos(), theta.sin());
        let mut radial = |phi: f64| -> [f64; K] {
            evaluations += 1;
            let (sp, cp) = phi.sin_cos();
            let rho = r * sp;
            let tau = r * cp;
            let v = f([rho * c, rho * sn], tau);
            let jac = rho * r * cp;
            let mut out = [0.0; K];
            for k in 0..K {
                out[k] = v[k] * jac;
            }
            out
        };
        let whole = rule.apply(0.0, phi_max, &mut radial);
        let mut value = [0.0; K];
        let mut error = [0.0; K];
        adapt(
            &rule,
            0.0,
            phi_max,
            whole,
            cfg.depth,
            cfg.rel_tol,
            &mut radial,
            &mut value,
            &mut error,
        );
        value
    };

    let mut cuts: Vec<f64> = (0..=8).map(|i| i as f64 * PI / 4.0).collect();
    for &b in breaks {
        let t = b.rem_euclid(2.0 * PI);
        cuts.push(t);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-14 {
            continue;
        }
        let whole = rule.apply(a, b, &mut angular);
        adapt(
            &rule,
            a,
            b,
            whole,
            cfg.depth,
            cfg.rel_tol,
            &mut angular,
            &mut value,
            &mut error,
        );
    }
    PolarResult {
        value,
        error,
        evaluations,
    }
}

/// Maximizes `g(offset, τ)` over the clipped disk by polar sampling followed by
/// a pattern-search refinement of the best candidates.
pub fn maximize_clipped_disk(
    r: f64,
    exit: &dyn Fn(f64) -> f64,
    n_theta: usize,
    n_rho: usize,
    g: &dyn Fn([f64; 2], f64) -> f64,
) -> (f64, [f64; 2]) {
    let eval = |rho: f64, theta: f64| -> f64 {
        let tau = (r * r - rho * rho).max(0.0).sqrt();
        g([rho * theta.cos(), rho * theta.sin()], tau)
    };
    let clip = |theta: f64| exit(theta).min(r).max(0.0);

    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(n_theta * (n_rho + 1) + 1);
    samples.push((eval(0.0, 0.0), 0.0, 0.0));
    for j in 0..n_theta {
        let theta = 2.0 * PI * j as f64 / n_theta as f64;
        let s = clip(theta);
        for i in 1..=n_rho {
            let rho = s * i as f64 / n_rho as f64;
            samples.push((eval(rho, theta), rho, theta));
        }
    }
    samples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut best = samples[0];
    let d_theta0 = 2.0 * PI / n_theta as f64;
    for cand in samples.iter().take(6) {
        let (mut v, mut rho, mut theta) = *cand;
        let mut d_rho = r / n_rho as f64;
        let mut d_theta = d_theta0;
        while d_rho > 1e-13 * r || d_theta > 1e-13 {
            let mut improved = false;
            for (dr, dt) in [(d_rho, 0.0), (-d_rho, 0.0), (0.0, d_theta), (0.0, -d_theta)] {
                let t2 = theta + dt;
                let r2 = (rho + dr).clamp(0.0, clip(t2));
                let v2 = eval(r2, t2);
                if v2 > v {
                    v = v2;
                    rho = r2;
                    theta = t2;
                    improved = true;
                }
            }
            if !improved {
                d_rho *= 0.5;
                d_theta *= 0.5;
            }
        }
        if v > best.0 {
            best = (v, rho, theta);
        }
    }
    let (v, rho, theta) = best;
    (v, [rho * theta.cos(), rho * theta.sin()])
}
