//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` fail on the implemented method; the run
//! succeeds only when the set of failing criteria equals that list.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nodalab::dividing::{
    check_dividing_lemma, class_count_formula, run_class_recursion, worst_case_class_counts,
    ClassModel, DividingConfig, FieldSource, SyntheticOracle,
};
use nodalab::doubling::{
    cube_doubling, doubling_index, global_doubling_bound, vanishing_order, ChartField, Cube,
};
use nodalab::field::{solve_eigenpair, ClosedForm, PotentialFamily, SolutionField};
use nodalab::frequency::{
    admissible, check_doubling, check_monotonicity, doubling_from_evals, frequency_at,
    frequency_profile,
};
use nodalab::geometry::{Domain, DomainKind, StraightenedChart};
use nodalab::lifted::{lift, LiftedField, SLAB_HALFWIDTH};
use nodalab::mesh::TriMesh;
use nodalab::nodal::{extract_nodal, interior_bound_study, theorem_sweep, trace_zero_set};
use nodalab::quad::QuadConfig;

const KNOWN_FAILURES: &[u32] = &[5, 10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lifted(form: ClosedForm) -> LiftedField {
    lift(SolutionField::closed_form(form).unwrap(), SLAB_HALFWIDTH).unwrap()
}

fn unit_square() -> Domain {
    Domain::build(
        DomainKind::Rectangle {
            width: 1.0,
            height: 1.0,
        },
        512,
    )
    .unwrap()
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// `J_m(x) = (1/π)∫₀^π cos(mτ − x sin τ) dτ` by composite Simpson.
fn bessel_simpson(m: u32, x: f64) -> f64 {
    let n = 4000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (m as f64 * t - x * t.sin()).cos();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0 / std::f64::consts::PI
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// N = 2k and M = 2k for homogeneous harmonic polynomials at the origin.
fn c1() -> Outcome {
    let t = Instant::now();
    let radii: Vec<f64> = (1..=8).map(|i| 0.1 * i as f64).collect();
    let (mut worst_n, mut worst_m) = (0.0f64, 0.0f64);
    for k in 1..=3u32 {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: k });
        let target = 2.0 * k as f64;
        for &r in &radii {
            worst_n = worst_n.max((frequency_at(&lf, [0.0, 0.0], r).unwrap().n - target).abs());
            worst_m = worst_m.max((doubling_index(&lf, [0.0, 0.0], r).unwrap().m - target).abs());
        }
    }
    let el = t.elapsed();
    outcome(
        worst_n <= 1e-3 && worst_m <= 1e-3 && el < Duration::from_secs(60),
        format!("max |N-2k| = {worst_n:.3e}, max |M-2k| = {worst_m:.3e} (tol 1e-3), {el:.1?} (limit 60s)"),
    )
}

/// Definition and integration-by-parts forms of I agree on 20 admissible balls.
fn c2() -> Outcome {
    let t = Instant::now();
    let square: [([f64; 2], f64); 10] = [
        ([0.5, 0.5], 0.2),
        ([0.3, 0.6], 0.15),
        ([0.7, 0.4], 0.25),
        ([0.5, 0.5], 0.4),
        ([0.4, 0.4], 0.1),
        ([0.5, 0.05], 0.1),
        ([0.1, 0.5], 0.2),
        ([0.05, 0.05], 0.1),
        ([0.9, 0.5], 0.3),
        ([0.5, 0.95], 0.15),
    ];
    let (s1, c1) = 1.0f64.sin_cos();
    let disk: [([f64; 2], f64); 10] = [
        ([0.0, 0.0], 0.3),
        ([0.2, 0.1], 0.4),
        ([-0.3, 0.2], 0.2),
        ([0.0, 0.0], 0.6),
        ([0.1, -0.4], 0.25),
        ([0.9, 0.0], 0.2),
        ([0.0, 0.8], 0.3),
        ([-0.6, -0.6], 0.25),
        ([0.7 * c1, 0.7 * s1], 0.35),
        ([0.0, -0.95], 0.12),
    ];
    let fine = QuadConfig::default().refined();
    let mut worst = 0.0f64;
    let (mut balls, mut clipped, mut inadmissible) = (0, 0, 0);
    for (form, set) in [
        (ClosedForm::SquareMode { k: 1, m: 1 }, &square),
        (
            ClosedForm::DiskMode {
                radial: 1,
                angular: 0,
            },
            &disk,
        ),
    ] {
        let lf = lifted(form).with_quad(fine.clone());
        for &(c, r) in set.iter() {
            if !admissible(&lf, c, r) {
                inadmissible += 1;
                continue;
            }
            let ball = lf.ball(c, r).unwrap();
            clipped += ball.clipped as usize;
            let it = lf.integrals(&ball).unwrap();
            worst = worst.max((it.i_def - it.i_ibp).abs() / it.i_ibp.abs());
            balls += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-4 && balls == 20 && clipped >= 2 && el < Duration::from_secs(300),
        format!(
            "max |I_def-I_ibp|/|I| = {worst:.3e} (tol 1e-4) on {balls} balls ({clipped} clipped, {inadmissible} inadmissible), {el:.1?} (limit 300s)"
        ),
    )
}

fn suite_modes() -> Vec<(ClosedForm, Vec<[f64; 2]>)> {
    let sq: Vec<[f64; 2]> = [0.3, 0.5, 0.7]
        .iter()
        .flat_map(|&x| [0.3, 0.5, 0.7].iter().map(move |&y| [x, y]))
        .collect();
    let dk: Vec<[f64; 2]> = vec![
        [0.0, 0.0],
        [0.3, 0.0],
        [-0.3, 0.0],
        [0.0, 0.3],
        [0.0, -0.3],
        [0.2, 0.2],
        [-0.2, -0.2],
        [0.2, -0.2],
        [-0.2, 0.2],
    ];
    vec![
        (ClosedForm::SquareMode { k: 1, m: 1 }, sq.clone()),
        (ClosedForm::SquareMode { k: 2, m: 1 }, sq.clone()),
        (ClosedForm::SquareMode { k: 3, m: 2 }, sq),
        (
            ClosedForm::DiskMode {
                radial: 1,
                angular: 0,
            },
            dk.clone(),
        ),
        (
            ClosedForm::DiskMode {
                radial: 1,
                angular: 1,
            },
            dk.clone(),
        ),
        (
            ClosedForm::DiskMode {
                radial: 1,
                angular: 2,
            },
            dk,
        ),
    ]
}

const SUITE_RADII: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

/// Shared (center, radius-pair) suite for monotonicity and the doubling inequalities.
struct Suite {
    mono_checks: usize,
    mono_violations: usize,
    worst_mono: f64,
    dbl_checks: usize,
    dbl_failures: usize,
    worst_dbl: f64,
}

fn run_suite() -> Suite {
    let mut s = Suite {
        mono_checks: 0,
        mono_violations: 0,
        worst_mono: f64::INFINITY,
        dbl_checks: 0,
        dbl_failures: 0,
        worst_dbl: f64::INFINITY,
    };
    for (form, centers) in suite_modes() {
        let lf = lifted(form);
        for c in centers {
            let p = frequency_profile(&lf, c, &SUITE_RADII).unwrap();
            let rep = check_monotonicity(&p).unwrap();
            s.mono_checks += rep.checks;
            s.mono_violations += rep.violations.len();
            s.worst_mono = s.worst_mono.min(rep.worst_gap);
            let adm: Vec<_> = p.evals.iter().filter(|e| e.admissible).collect();
            for w in adm.windows(2) {
                let d = doubling_from_evals(w[0], w[1]);
                s.dbl_checks += 1;
                s.dbl_failures += !d.passed() as usize;
                s.worst_dbl = s
                    .worst_dbl
                    .min(d.upper_slack.min(d.lower_slack) + d.error_bar);
            }
        }
    }
    s
}

fn c3(s: &Suite) -> Outcome {
    outcome(
        s.mono_checks >= 200 && s.mono_violations == 0,
        format!(
            "{} checks, {} violations beyond error bars, min N(r2)-N(r1)+bar = {:.3e}",
            s.mono_checks, s.mono_violations, s.worst_mono
        ),
    )
}

fn c4(s: &Suite) -> Outcome {
    let mut worst_rel = 0.0f64;
    for k in 1..=3u32 {
        let lf = lifted(ClosedForm::HarmonicPoly { degree: k });
        for w in [0.1, 0.2, 0.4, 0.8].windows(2) {
            let d = check_doubling(&lf, [0.0, 0.0], w[0], w[1]).unwrap();
            worst_rel = worst_rel
                .max(d.upper_slack.abs() / d.upper_exponent)
                .max(d.lower_slack.abs() / d.lower_exponent);
        }
    }
    outcome(
        s.dbl_checks >= 200 && s.dbl_failures == 0 && worst_rel <= 1e-6,
        format!(
            "{} checks, {} failures, min slack+bar = {:.3e}; harmonic anchors max relative slack {worst_rel:.3e} (tol 1e-6)",
            s.dbl_checks, s.dbl_failures, s.worst_dbl
        ),
    )
}

/// max M/(1+√λ) over a center grid for square modes (k, k), k = 1..20.
fn c5() -> Outcome {
    let t = Instant::now();
    let mut ratios = Vec::new();
    for k in 1..=20u32 {
        let lf = lifted(ClosedForm::SquareMode { k, m: k });
        let r0 = lf.base.domain.collar_params().r0;
        let step = r0 / 4.0;
        let n = (1.0 / step).floor() as usize;
        let centers: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| (0..n).map(move |j| [(i as f64 + 0.5) * step, (j as f64 + 0.5) * step]))
            .collect();
        let rep = global_doubling_bound(&lf, &centers, &[0.5 * r0, 0.999 * r0]).unwrap();
        ratios.push(rep.ratio);
    }
    let el = t.elapsed();
    let sp = spread(&ratios);
    outcome(
        sp < 2.0 && el < Duration::from_secs(1800),
        format!(
            "ratio max/min = {sp:.3} (limit 2); k=1: {:.4}, k=2: {:.4}, k=20: {:.4}; {el:.1?} (limit 1800s)",
            ratios[0], ratios[1], ratios[19]
        ),
    )
}

fn c6() -> Outcome {
    let radii = [0.01, 0.02, 0.04, 0.07, 0.1];
    let mut worst = 0.0f64;
    let mut orders = Vec::new();
    for m in 0..=2u32 {
        let lf = lifted(ClosedForm::DiskMode {
            radial: 1,
            angular: m,
        });
        let v = vanishing_order(&lf, [0.0, 0.0], &radii).unwrap();
        worst = worst.max((v.slope - m as f64).abs());
        orders.push(v.slope);
    }
    outcome(
        worst <= 0.1,
        format!("orders {orders:.4?} for m = 0, 1, 2; max error {worst:.3e} (tol 0.1)"),
    )
}

fn c7() -> Outcome {
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    let sq = unit_square();
    let errs: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|&d| {
            (solve_eigenpair(&sq, &PotentialFamily::Zero, 1, 1.0 / d)
                .unwrap()
                .eigenvalue
                - exact)
                .abs()
                / exact
        })
        .collect();
    let order = (errs[1] / errs[2]).log2();
    let j01 = bisect(|x| bessel_simpson(0, x), 2.0, 3.0);
    let disk = Domain::build(DomainKind::UnitDisk, 512).unwrap();
    let lam = solve_eigenpair(&disk, &PotentialFamily::Zero, 1, 1.0 / 64.0)
        .unwrap()
        .eigenvalue;
    let disk_err = (lam - j01 * j01).abs() / (j01 * j01);
    outcome(
        errs[2] <= 0.005 && (1.8..=2.2).contains(&order) && disk_err <= 0.005,
        format!(
            "square rel. errors {} at h = 1/16, 1/32, 1/64 (tol 0.5%), observed order {order:.3} (band [1.8, 2.2]); disk {lam:.5} vs j01^2 = {:.5}, rel. error {disk_err:.3e} (tol 0.5%)",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", "),
            j01 * j01
        ),
    )
}

fn c8() -> Outcome {
    let f = SolutionField::closed_form(ClosedForm::SquareMode { k: 3, m: 2 }).unwrap();
    let l128 = extract_nodal(&f, 1.0 / 128.0).unwrap().total_length;
    let l256 = extract_nodal(&f, 1.0 / 256.0).unwrap().total_length;
    let err256 = (l256 - 3.0).abs() / 3.0;
    let ratio = (l256 - 3.0).abs() / (l128 - 3.0).abs();
    let mesh = TriMesh::rectangle([-1.0, -1.0], [1.0, 1.0], 1.0 / 64.0);
    let vals: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1] - 0.25)
        .collect();
    let circle = trace_zero_set(&mesh, &vals, false).unwrap().total_length;
    let cerr = (circle - std::f64::consts::PI).abs() / std::f64::consts::PI;
    outcome(
        err256 <= 0.01 && cerr <= 0.01 && ratio <= 0.6,
        format!(
            "square (3,2) length {l256:.5} at h = 1/256 (rel. error {err256:.3e}, tol 1%); circle {circle:.5} (rel. error {cerr:.3e}, tol 1%); error ratio {ratio:.3} (limit 0.6)"
        ),
    )
}

fn c9() -> Outcome {
    let forms = [
        ClosedForm::SquareMode { k: 2, m: 2 },
        ClosedForm::SquareMode { k: 3, m: 2 },
        ClosedForm::SquareMode { k: 2, m: 3 },
        ClosedForm::SquareMode { k: 3, m: 3 },
        ClosedForm::SquareMode { k: 4, m: 3 },
        ClosedForm::DiskMode {
            radial: 1,
            angular: 1,
        },
        ClosedForm::DiskMode {
            radial: 1,
            angular: 2,
        },
        ClosedForm::DiskMode {
            radial: 2,
            angular: 0,
        },
        ClosedForm::DiskMode {
            radial: 2,
            angular: 1,
        },
        ClosedForm::DiskMode {
            radial: 1,
            angular: 3,
        },
    ];
    let family: Vec<(String, SolutionField)> = forms
        .iter()
        .map(|f| {
            (
                format!("{f:?}"),
                SolutionField::closed_form(f.clone()).unwrap(),
            )
        })
        .collect();
    let mut cs = Vec::new();
    let mut per_mode = Vec::new();
    for r in [0.05, 0.1] {
        let st = interior_bound_study(&family, r, 1.0 / 128.0).unwrap();
        cs.push(st.fitted_c);
        per_mode.push(spread(&st.rows.iter().map(|x| x.ratio).collect::<Vec<_>>()));
    }
    let sp = spread(&cs);
    outcome(
        sp <= 2.0,
        format!(
            "fitted C = {:.4} (r = 0.05), {:.4} (r = 0.1), max/min {sp:.3} (limit 2); per-mode spread {:.2}, {:.2}",
            cs[0], cs[1], per_mode[0], per_mode[1]
        ),
    )
}

fn c10() -> Outcome {
    let t = Instant::now();
    let rep = theorem_sweep(
        &unit_square(),
        &[0.0, 0.5, 1.0, 2.0, 4.0],
        3.0,
        &[2, 3, 4, 5, 6],
        1.0 / 128.0,
        1.0,
    )
    .unwrap();
    let el = t.elapsed();
    let zero: Vec<f64> = rep
        .rows
        .iter()
        .filter(|r| r.amplitude == 0.0)
        .map(|r| r.small_gradient_ratio)
        .collect();
    let zs = spread(&zero);
    outcome(
        rep.spread <= 4.0 && zs <= 2.0 && el < Duration::from_secs(3600),
        format!(
            "shape ratio max/min = {:.3} (limit 4), fitted C = {:.4}; a = 0 small-gradient max/min = {zs:.3} (limit 2); {el:.1?} (limit 3600s)",
            rep.spread, rep.fitted_c
        ),
    )
}

fn c11() -> Outcome {
    let base = DividingConfig {
        enforce_gate: true,
        ..DividingConfig::default()
    };
    let kappa_ok = base.kappa_rational() == (17, 18);

    let mut runs = 0;
    let mut within = true;
    let mut worst_c = 0.0f64;
    for a in [3u32, 5, 7, 9] {
        let cfg = DividingConfig { a, ..base.clone() };
        for m in [4.0, 16.0, 64.0, 256.0] {
            for model in [ClassModel::Halving, ClassModel::WorstCase] {
                let (acc, _) = run_class_recursion(&cfg, model, m, 20).unwrap();
                within &= acc.within_bound() && acc.series.chain_holds;
                worst_c = worst_c.max(acc.series.fitted_c);
                runs += 1;
            }
        }
    }

    let an = base.layer_size();
    let counts = worst_case_class_counts(an, 20).unwrap();
    let (_, hist) = run_class_recursion(&base, ClassModel::WorstCase, 2f64.powi(30), 20).unwrap();
    let mut identity = true;
    let mut compared = 0;
    for k in 0..=20u32 {
        for j in 0..=k {
            let f = class_count_formula(an, k, j).unwrap();
            identity &= counts[k as usize][j as usize] == f;
            compared += 1;
        }
    }
    for h in &hist {
        for (j, &c) in h.counts.iter().enumerate() {
            identity &= c == class_count_formula(an, h.generation, j as u32).unwrap();
            compared += 1;
        }
    }
    outcome(
        kappa_ok && within && identity && worst_c <= 2.0,
        format!(
            "kappa = {:?} (17/18: {kappa_ok}); {runs} runs within closed form: {within}; counting identity on {compared} entries: {identity}; max fitted C = {worst_c:.4} (limit 2)",
            base.kappa_rational()
        ),
    )
}

fn c12() -> Outcome {
    let lf = lifted(ClosedForm::SquareMode { k: 2, m: 2 });
    let cf = ChartField::new(&lf, StraightenedChart::flat([0.0, 0.0], [1.0, 0.0], 1.0));
    let side = 0.019;
    let q = Cube {
        lo: [0.5 - 0.5 * side, 0.0, 0.0],
        side,
    };
    let m0 = DividingConfig::default().m0;
    let mq = cube_doubling(&cf, &q).unwrap().m_q;
    let rep = check_dividing_lemma(&FieldSource::new(cf), &q, 3, m0).unwrap();
    let mins: Vec<f64> = rep.layers.iter().map(|l| l.min_m).collect();
    let unit = Cube {
        lo: [0.0; 3],
        side: 1.0,
    };
    let ce = check_dividing_lemma(
        &SyntheticOracle::Counterexample { m_q: 8.0, layer: 2 },
        &unit,
        3,
        m0,
    )
    .unwrap();
    outcome(
        rep.passed && !ce.passed,
        format!(
            "M(Q) = {mq:.3}, layer minima {mins:.3?} vs threshold {:.3}; field check passed: {}; counterexample reported FAIL: {}",
            rep.layers[0].threshold, rep.passed, !ce.passed
        ),
    )
}

fn run_sweep(out: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_nodalab"))
        .args(["sweep", "--seed", "7", "--out"])
        .arg(out)
        .env("NODALAB_THREADS", threads)
        .output()
        .unwrap();
    assert!(
        status.status.code() == Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    std::fs::read(out.join("sweep").join("sweep.csv")).unwrap()
}

fn c13() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let a = run_sweep(&dir.path().join("a"), "1");
    let b = run_sweep(&dir.path().join("b"), "3");
    outcome(
        a == b && !a.is_empty(),
        format!(
            "two sweeps with seed 7 (1 and 3 threads): {} bytes each, identical: {}",
            a.len(),
            a == b
        ),
    )
}

fn main() {
    let suite = std::cell::OnceCell::new();
    type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "frequency anchor", Box::new(c1)),
        (2, "integration-by-parts identity", Box::new(c2)),
        (
            3,
            "frequency monotonicity",
            Box::new(|| c3(suite.get_or_init(run_suite))),
        ),
        (
            4,
            "doubling inequalities",
            Box::new(|| c4(suite.get_or_init(run_suite))),
        ),
        (5, "global doubling bound", Box::new(c5)),
        (6, "vanishing order", Box::new(c6)),
        (7, "eigen-solver validation", Box::new(c7)),
        (8, "nodal anchor", Box::new(c8)),
        (9, "interior nodal bound", Box::new(c9)),
        (10, "nodal scaling sweep", Box::new(c10)),
        (11, "dividing combinatorics", Box::new(c11)),
        (12, "dividing lemma on a field", Box::new(c12)),
        (13, "determinism", Box::new(c13)),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in &criteria {
        let t = Instant::now();
        let o = f();
        println!(
            "{} [{id:2}] {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
        if !o.pass {
            failed.push(*id);
        }
    }
    println!("failing criteria: {failed:?}; expected: {KNOWN_FAILURES:?}");
    if failed != KNOWN_FAILURES {
        eprintln!("acceptance outcome differs from the recorded expectation");
        std::process::exit(1);
    }
}
