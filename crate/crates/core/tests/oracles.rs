//! Library values checked against independent computations done here.

use std::f64::consts::PI;

use nodalab::dividing::{binomial, class_count_formula, tail_terms, worst_case_class_counts};
use nodalab::field::{ClosedForm, SolutionField};
use nodalab::lifted::{lift, t_kernels, LiftedField, SLAB_HALFWIDTH};
use nodalab::special::{bessel_j, bessel_zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn lifted(form: ClosedForm) -> LiftedField {
    lift(SolutionField::closed_form(form).unwrap(), SLAB_HALFWIDTH).unwrap()
}

/// Half-range Bessel integral, a different rule from the library's.
fn j_simpson(m: i32, x: f64) -> f64 {
    simpson(|t| (m as f64 * t - x * t.sin()).cos(), 0.0, PI, 4000) / PI
}

#[test]
fn bessel_values_and_zeros() {
    for m in 0..4 {
        for x in [0.3, 1.0, 2.404, 5.5, 11.0] {
            assert!(
                (bessel_j(m, x) - j_simpson(m, x)).abs() < 1e-10,
                "J_{m}({x})"
            );
        }
    }
    for (m, lo, hi) in [(0, 2.0, 3.0), (1, 3.5, 4.0), (2, 5.0, 5.5)] {
        let (mut a, mut b) = (lo, hi);
        let fa = j_simpson(m, a);
        for _ in 0..60 {
            let c = 0.5 * (a + b);
            if (j_simpson(m, c) > 0.0) == (fa > 0.0) {
                a = c;
            } else {
                b = c;
            }
        }
        assert!(
            (bessel_zero(m as u32, 1) - a).abs() < 1e-9,
            "first zero of J_{m}"
        );
    }
}

#[test]
fn t_kernels_match_quadrature() {
    for (s, tau) in [
        (0.0, 0.4),
        (1e-5, 0.2),
        (3.1, 0.7),
        (17.0, 0.9),
        (40.0, 0.05),
    ] {
        let k = t_kernels(s, tau);
        let e = |t: f64| (2.0 * s * t).exp();
        let q = [
            simpson(e, -tau, tau, 20000),
            simpson(|t| (tau * tau - t * t) * e(t), -tau, tau, 20000),
            simpson(|t| t * e(t), -tau, tau, 20000),
        ];
        for i in 0..3 {
            let scale = q[0].abs().max(1e-300);
            assert!(
                (k[i] - q[i]).abs() <= 1e-9 * scale,
                "kernel {i} at s={s}, tau={tau}: {} vs {}",
                k[i],
                q[i]
            );
        }
    }
}

/// For `Re(z^k)` with no potential, `H(0, R) = 2πR^{2k+3}∫₀¹u^{2k+1}√(1−u²)du`.
#[test]
fn harmonic_h_closed_form() {
    for k in 1..=3u32 {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: k });
        let moment = simpson(
            |u| u.powi(2 * k as i32 + 1) * (1.0 - u * u).max(0.0).sqrt(),
            0.0,
            1.0,
            20000,
        );
        for r in [0.2f64, 0.5, 0.8] {
            let exact = 2.0 * PI * r.powi(2 * k as i32 + 3) * moment;
            let h = lf.integral_h(&lf.ball([0.0, 0.0], r).unwrap()).unwrap();
            assert!(
                (h - exact).abs() / exact < 1e-6,
                "k={k} r={r}: {h} vs {exact}"
            );
        }
    }
}

#[test]
fn h_matches_monte_carlo() {
    let lf = lifted(ClosedForm::SquareMode { k: 2, m: 1 });
    let (c, r) = ([0.4, 0.55], 0.2f64);
    let h = lf.integral_h(&lf.ball(c, r).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let vol = 4.0 / 3.0 * PI * r.powi(3);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut drawn = 0;
    while drawn < n {
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-r..r));
        if p.iter().map(|v| v * v).sum::<f64>() > r * r {
            continue;
        }
        let v = lf.value([c[0] + p[0], c[1] + p[1]], p[2]).powi(2);
        sum += v;
        sq += v * v;
        drawn += 1;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt() * vol;
    assert!(
        (h - mean * vol).abs() < 4.0 * se,
        "{h} vs {} ± {se}",
        mean * vol
    );
}

#[test]
fn sup_on_ball_matches_dense_grid() {
    let lf = lifted(ClosedForm::SquareMode { k: 3, m: 2 });
    for (c, r) in [([0.5, 0.5], 0.2), ([0.2, 0.7], 0.15)] {
        let sup = lf.sup_on_ball(&lf.ball(c, r).unwrap()).unwrap();
        let n = 60;
        let mut grid = 0.0f64;
        for i in 0..=n {
            for j in 0..=n {
                for l in 0..=n {
                    let p = [i, j, l].map(|v| -r + 2.0 * r * v as f64 / n as f64);
                    if p.iter().map(|v| v * v).sum::<f64>() <= r * r {
                        grid = grid.max(lf.value([c[0] + p[0], c[1] + p[1]], p[2]).abs());
                    }
                }
            }
        }
        assert!(grid <= sup * (1.0 + 1e-9), "grid {grid} above sup {sup}");
        assert!(
            grid >= sup * (1.0 - 2e-2),
            "grid {grid} far below sup {sup}"
        );
    }
}

/// `d ln H / d ln r = n + 1 + N` by central differences.
#[test]
fn log_derivative_of_h() {
    let lf = lifted(ClosedForm::SquareMode { k: 2, m: 1 });
    let c = [0.45, 0.5];
    let h = |r: f64| lf.integral_h(&lf.ball(c, r).unwrap()).unwrap();
    for r in [0.1, 0.2, 0.3] {
        let d = 1e-4 * r;
        let slope = (h(r + d).ln() - h(r - d).ln()) / ((r + d).ln() - (r - d).ln());
        let it = lf.integrals(&lf.ball(c, r).unwrap()).unwrap();
        let n = it.i_ibp / it.h;
        assert!(
            (slope - 3.0 - n).abs() < 1e-5 * (3.0 + n),
            "r={r}: {slope} vs {}",
            3.0 + n
        );
    }
}

#[test]
fn tail_terms_are_binomial_summands() {
    for a in [3u32, 5, 9] {
        let an = (a * a) as f64;
        let (p, q) = (0.5 / an, 1.0 - 1.0 / an);
        for k0 in [1u32, 4, 10] {
            for (i, (lhs, rhs)) in tail_terms(a, 2, k0, 60).into_iter().enumerate() {
                let k = k0 + i as u32;
                let full: f64 = (0..=k)
                    .map(|j| {
                        binomial(k, j).unwrap() as f64 * p.powi(j as i32) * q.powi((k - j) as i32)
                    })
                    .sum();
                assert!((rhs - full).abs() <= 1e-12 * full, "rhs is not (p+q)^k");
                let own =
                    binomial(k, k0).unwrap() as f64 * p.powi(k0 as i32) * q.powi((k - k0) as i32);
                assert!((lhs - own).abs() <= 1e-12 * own);
                assert!(lhs <= rhs);
            }
        }
    }
}

/// Counts built by adding one generation at a time: a cube of class `j` has
/// `Aⁿ − 1` children of class `j` and one of class `j + 1`.
#[test]
fn class_counts_follow_generation_rule() {
    for layer in [9u128, 25, 49] {
        let k_max = 18;
        let mut rows = vec![vec![1u128]];
        for k in 0..k_max {
            let prev = &rows[k];
            let next: Vec<u128> = (0..=k + 1)
                .map(|j| {
                    let stay = prev.get(j).map_or(0, |c| c * (layer - 1));
                    let up = if j > 0 { prev[j - 1] } else { 0 };
                    stay + up
                })
                .collect();
            rows.push(next);
        }
        let lib = worst_case_class_counts(layer, k_max as u32).unwrap();
        for k in 0..=k_max {
            for j in 0..=k {
                assert_eq!(lib[k][j], rows[k][j], "layer {layer}, k={k}, j={j}");
                assert_eq!(
                    class_count_formula(layer, k as u32, j as u32),
                    Some(rows[k][j])
                );
            }
        }
    }
}
