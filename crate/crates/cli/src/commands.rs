//! The study commands. Each writes CSV data, plot data and a JSON report into
//! its own stage directory under the output directory.

use std::fs;

use nodalab::dividing::{
    check_dividing_lemma, run_class_recursion, run_dividing, ClassModel, FieldSource, MSource,
    SyntheticOracle,
};
use nodalab::doubling::{
    check_almost_monotonicity, check_bridge_n_m, doubling_index, global_doubling_bound,
    vanishing_order, ChartField, Cube,
};
use nodalab::estimates::{
    check_de_giorgi, measure_smallness, smallness_propagation, Face, FaceCube,
};
use nodalab::field::{solve_eigenpairs, ClosedForm, EigenSettings, PotentialFamily, SolutionField};
use nodalab::frequency::{
    check_changing_center, check_monotonicity, doubling_from_evals, frequency_profiles,
};
use nodalab::geometry::{Domain, DomainKind, StraightenedChart};
use nodalab::lifted::{lift, LiftedField, SLAB_HALFWIDTH};
use nodalab::mesh::TriMesh;
use nodalab::nodal::{
    boundary_cube_nodal, collar_decomposition_study, extract_nodal, interior_bound_study,
    sweep_row, sweep_summary, trace_zero_set, SweepRow,
};
use nodalab::quad::QuadConfig;
use nodalab::{LabError, Result as LabResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{DivideMode, RunConfig};
use crate::report::{write_csv, CheckRecord, Manifest, ReportWriter, StudyReport, Verdict};

#[derive(Debug)]
pub enum CommandError {
    Io(std::io::Error),
    Lab(LabError),
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e)
    }
}

impl From<LabError> for CommandError {
    fn from(e: LabError) -> Self {
        CommandError::Lab(e)
    }
}

impl From<csv::Error> for CommandError {
    fn from(e: csv::Error) -> Self {
        CommandError::Io(e.into())
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Io(e) => write!(f, "i/o: {e}"),
            CommandError::Lab(e) => write!(f, "{e}"),
        }
    }
}

pub type CmdResult = std::result::Result<StudyReport, CommandError>;

/// Boundary resolution for domains built from the config.
const DOMAIN_RESOLUTION: usize = 512;

fn stage(cfg: &RunConfig, name: &str) -> std::io::Result<ReportWriter> {
    let dir = cfg.output_dir.join(name);
    let w = ReportWriter::create(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(w)
}

fn manifest(cfg: &RunConfig, command: &str, mesh_sizes: Vec<f64>) -> Manifest {
    Manifest {
        command: command.to_string(),
        seed: cfg.seed,
        mesh_sizes,
        quadrature: QuadConfig::default(),
        mesh_quadrature: QuadConfig::for_mesh(),
        threads: rayon::current_num_threads(),
    }
}

fn record(
    lemma: &str,
    subject: &str,
    inputs: serde_json::Value,
    fitted: Option<f64>,
    bar: Option<f64>,
    verdict: Verdict,
    detail: String,
) -> CheckRecord {
    CheckRecord {
        lemma: lemma.to_string(),
        subject: subject.to_string(),
        inputs,
        fitted_constant: fitted,
        error_bar: bar,
        verdict,
        detail,
    }
}

fn pass_fail(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn form_label(f: &ClosedForm) -> String {
    match *f {
        ClosedForm::SquareMode { k, m } => format!("square_mode_{k}_{m}"),
        ClosedForm::DiskMode { radial, angular } => format!("disk_mode_{radial}_{angular}"),
        ClosedForm::HarmonicPoly { degree } => format!("harmonic_poly_{degree}"),
        ClosedForm::Constant { value } => format!("constant_{value}"),
    }
}

/// Closed-form fields followed by the computed eigenmodes.
pub fn build_fields(cfg: &RunConfig) -> LabResult<Vec<(String, SolutionField)>> {
    let mut out = Vec::new();
    for f in &cfg.closed_forms {
        out.push((form_label(f), SolutionField::closed_form(f.clone())?));
    }
    if let Some(&count) = cfg.modes.iter().max() {
        let domain = Domain::build(cfg.domain.clone(), DOMAIN_RESOLUTION)?;
        let solved = solve_eigenpairs(
            &domain,
            &cfg.potential,
            count,
            cfg.mesh_h,
            &EigenSettings::default(),
        )?;
        for &k in &cfg.modes {
            out.push((format!("eigen_{k}"), solved[k - 1].clone()));
        }
    }
    Ok(out)
}

/// Lattice of centers with the given spacing, restricted to the domain.
pub fn centers(domain: &Domain, spacing: f64) -> Vec<[f64; 2]> {
    let (lo, hi) = domain.bounding_box();
    let nx = ((hi[0] - lo[0]) / spacing).floor() as usize;
    let ny = ((hi[1] - lo[1]) / spacing).floor() as usize;
    let mut out = Vec::new();
    for j in 0..ny.max(1) {
        for i in 0..nx.max(1) {
            let x = [
                lo[0] + (i as f64 + 0.5) * spacing,
                lo[1] + (j as f64 + 0.5) * spacing,
            ];
            if domain.contains(x) {
                out.push(x);
            }
        }
    }
    out
}

fn midpoint(domain: &Domain) -> [f64; 2] {
    let (lo, hi) = domain.bounding_box();
    [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])]
}

/// Boundary chart at the lowest boundary point, with `y₁ = 0` at the anchor.
fn bottom_chart(domain: &Domain, radius: f64) -> LabResult<StraightenedChart> {
    match domain.kind {
        DomainKind::Rectangle { width, .. } => Ok(StraightenedChart::flat(
            [0.5 * width, 0.0],
            [1.0, 0.0],
            radius,
        )),
        _ => {
            let p = domain
                .kind
                .curve(-std::f64::consts::FRAC_PI_2)
                .ok_or_else(|| LabError::NotApplicable("domain has no boundary curve".into()))?;
            domain.straighten(p.c, radius)
        }
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> CmdResult {
    let w = stage(cfg, "solve")?;
    let fields = build_fields(cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        label: &'a str,
        source: String,
        eigenvalue: f64,
        lambda: f64,
        residual: f64,
        mesh_h: Option<f64>,
    }
    let rows: Vec<Row> = fields
        .iter()
        .map(|(l, f)| Row {
            label: l,
            source: format!("{:?}", f.source).to_lowercase(),
            eigenvalue: f.eigenvalue,
            lambda: f.potential.lambda(),
            residual: f.residual,
            mesh_h: f.mesh_h,
        })
        .collect();
    write_csv(&w.dir().join("fields.csv"), &rows)?;
    for (l, f) in &fields {
        let mut wr = csv::Writer::from_path(w.dir().join(format!("field_{l}.csv")))?;
        wr.write_record(["x", "y", "u", "ux", "uy"])?;
        for r in f.to_csv_rows(cfg.mesh_h) {
            wr.serialize(r)?;
        }
        wr.flush()?;
    }
    let summary = json!({ "fields": rows });
    Ok(w.finish(manifest(cfg, "solve", vec![cfg.mesh_h]), summary)?)
}

pub fn cmd_frequency(cfg: &RunConfig) -> CmdResult {
    let mut w = stage(cfg, "frequency")?;
    let radii = &cfg.radii.frequency;
    #[derive(Serialize)]
    struct Row {
        label: String,
        cx: f64,
        cy: f64,
        r: f64,
        admissible: bool,
        h: f64,
        i_def: f64,
        i_ibp: f64,
        n: f64,
        err: f64,
    }
    let mut out_rows = Vec::new();
    let mut summary = Vec::new();
    for (label, field) in build_fields(cfg)? {
        let lf = lift(field, SLAB_HALFWIDTH)?;
        let dom = lf.base.domain.clone();
        let cs = centers(&dom, cfg.radii.center_spacing);
        let profiles = frequency_profiles(&lf, &cs, radii)
            .into_iter()
            .collect::<LabResult<Vec<_>>>()?;
        let c0 = dom.collar_params().c0;

        let (mut gated, mut not_star) = (0usize, 0usize);
        let (mut mono_checks, mut mono_viol, mut worst_gap) = (0usize, 0usize, f64::INFINITY);
        let (mut dbl_checks, mut dbl_fail, mut dbl_slack) = (0usize, 0usize, f64::INFINITY);
        let mut cc_fit: f64 = 0.0;
        let mut cc_checks = 0usize;
        for p in &profiles {
            for row in p.rows() {
                out_rows.push(Row {
                    label: label.clone(),
                    cx: p.center[0],
                    cy: p.center[1],
                    r: row.r,
                    admissible: row.admissible,
                    h: row.h,
                    i_def: row.i_def,
                    i_ibp: row.i_ibp,
                    n: row.n,
                    err: row.err,
                });
                if dom.boundary_distance(p.center) >= c0 * row.r * row.r {
                    gated += 1;
                    if !dom.is_star_shaped(p.center, row.r).star_shaped {
                        not_star += 1;
                    }
                }
            }
            if let Ok(rep) = check_monotonicity(p) {
                mono_checks += rep.checks;
                mono_viol += rep.violations.len();
                worst_gap = worst_gap.min(rep.worst_gap);
            }
            let adm: Vec<_> = p.evals.iter().filter(|e| e.admissible).collect();
            for pair in adm.windows(2) {
                let d = doubling_from_evals(pair[0], pair[1]);
                dbl_checks += 1;
                if !d.passed() {
                    dbl_fail += 1;
                }
                dbl_slack = dbl_slack.min(d.upper_slack.min(d.lower_slack) + d.error_bar);
            }
            if let Some(e) = adm.last() {
                let r = e.radius;
                let x1 = [p.center[0] + r / 8.0, p.center[1]];
                match check_changing_center(&lf, p.center, x1, r, r / 2.0) {
                    Ok(rep) => {
                        cc_checks += 1;
                        cc_fit = cc_fit.max(rep.fitted_c);
                    }
                    Err(LabError::Inadmissible(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let inputs = json!({ "centers": cs.len(), "radii": radii });
        w.push(record(
            "star_shaped_admissibility",
            &label,
            inputs.clone(),
            Some(c0),
            None,
            pass_fail(not_star == 0),
            format!("{gated} gated balls, {not_star} not star-shaped"),
        ))?;
        w.push(record(
            "frequency_monotonicity",
            &label,
            inputs.clone(),
            None,
            Some(worst_gap),
            pass_fail(mono_viol == 0),
            format!("{mono_checks} radius pairs, {mono_viol} violations beyond error bars"),
        ))?;
        w.push(record(
            "doubling_inequalities",
            &label,
            inputs.clone(),
            None,
            Some(dbl_slack),
            pass_fail(dbl_fail == 0),
            format!("{dbl_checks} radius pairs, {dbl_fail} failures"),
        ))?;
        w.push(record(
            "changing_center",
            &label,
            inputs,
            Some(cc_fit),
            None,
            Verdict::Fitted,
            format!("{cc_checks} admissible shifts a = r/8, rho = r/2"),
        ))?;
        summary.push(json!({
            "label": label,
            "monotonicity_checks": mono_checks,
            "doubling_checks": dbl_checks,
            "changing_center_c": cc_fit,
        }));
    }
    write_csv(&w.dir().join("profiles.csv"), &out_rows)?;
    Ok(w.finish(
        manifest(cfg, "frequency", vec![cfg.mesh_h]),
        json!({ "fields": summary }),
    )?)
}

pub fn cmd_doubling(cfg: &RunConfig) -> CmdResult {
    let mut w = stage(cfg, "doubling")?;
    let radii = &cfg.radii.doubling;
    #[derive(Serialize)]
    struct Row {
        label: String,
        cx: f64,
        cy: f64,
        r: f64,
        m: f64,
    }
    let mut map = Vec::new();
    let mut summary = Vec::new();
    for (label, field) in build_fields(cfg)? {
        let lf = lift(field, SLAB_HALFWIDTH)?;
        let dom = lf.base.domain.clone();
        let cs = centers(&dom, cfg.radii.center_spacing);
        let pairs: Vec<([f64; 2], f64)> = cs
            .iter()
            .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
            .collect();
        let ms: Vec<f64> = pairs
            .par_iter()
            .map(|&(c, r)| doubling_index(&lf, c, r).map(|e| e.m).unwrap_or(f64::NAN))
            .collect();
        for (&(c, r), &m) in pairs.iter().zip(&ms) {
            map.push(Row {
                label: label.clone(),
                cx: c[0],
                cy: c[1],
                r,
                m,
            });
        }
        let inputs = json!({ "centers": cs.len(), "radii": radii });

        let gb = global_doubling_bound(&lf, &cs, radii)?;
        w.push(record(
            "global_doubling_bound",
            &label,
            inputs.clone(),
            Some(gb.ratio),
            None,
            Verdict::Fitted,
            format!(
                "max M = {} at {:?}, r = {}",
                gb.max_m, gb.argmax_center, gb.argmax_radius
            ),
        ))?;

        let r_mid = radii[radii.len() / 2];
        let bridge: Vec<_> = cs
            .par_iter()
            .filter_map(|&c| match check_bridge_n_m(&lf, c, r_mid, 0.5) {
                Err(LabError::Inadmissible(_)) | Err(LabError::TrivialField(_)) => None,
                other => Some(other),
            })
            .collect::<LabResult<Vec<_>>>()?;
        let c_bridge = bridge.iter().map(|b| b.c1.max(b.c2)).fold(0.0, f64::max);
        w.push(record(
            "frequency_doubling_bridge",
            &label,
            json!({ "r": r_mid, "eta": 0.5 }),
            Some(c_bridge),
            None,
            Verdict::Fitted,
            format!("{} balls with star-shaped double", bridge.len()),
        ))?;

        if radii.len() >= 2 {
            let r0 = radii[radii.len() - 1];
            let grid = &radii[..radii.len() - 1];
            let am: Vec<_> = cs
                .par_iter()
                .filter_map(|&c| match check_almost_monotonicity(&lf, c, grid, r0) {
                    Err(LabError::TrivialField(_)) => None,
                    other => Some(other),
                })
                .collect::<LabResult<Vec<_>>>()?;
            let c_am = am.iter().map(|a| a.fitted_c).fold(1.0, f64::max);
            w.push(record(
                "doubling_almost_monotonicity",
                &label,
                json!({ "r0": r0, "grid": grid }),
                Some(c_am),
                None,
                Verdict::Fitted,
                format!("{} centers", am.len()),
            ))?;
        }

        let fr = &cfg.radii.frequency;
        let r_top = fr[fr.len() - 1];
        let inner: Vec<[f64; 2]> = cs
            .iter()
            .copied()
            .filter(|&c| dom.boundary_distance(c) >= r_top)
            .collect();
        let dg: Vec<_> = inner
            .par_iter()
            .filter_map(|&c| match check_de_giorgi(&lf, c, fr, 0.5) {
                Err(LabError::TrivialField(_)) => None,
                other => Some(other),
            })
            .collect::<LabResult<Vec<_>>>()?;
        let c_dg = dg.iter().map(|d| d.fitted_c).fold(0.0, f64::max);
        w.push(record(
            "sup_l2_bound",
            &label,
            json!({ "theta": 0.5, "radii": fr }),
            Some(c_dg),
            None,
            Verdict::Fitted,
            format!("{} interior centers", dg.len()),
        ))?;

        let mid = midpoint(&dom);
        let detail = match vanishing_order(&lf, mid, &cfg.radii.vanishing) {
            Ok(v) => {
                w.push(record(
                    "vanishing_order",
                    &label,
                    json!({ "point": mid, "radii": cfg.radii.vanishing }),
                    Some(v.slope / (lf.sqrt_lambda() + 1.0)),
                    Some(v.residual),
                    Verdict::Fitted,
                    format!("order {} (reliable: {})", v.slope, v.reliable),
                ))?;
                v.slope
            }
            Err(LabError::TrivialField(_))
            | Err(LabError::EmptyRegion)
            | Err(LabError::InvalidParameter { .. }) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        summary.push(json!({
            "label": label,
            "sqrt_lambda": lf.sqrt_lambda(),
            "global_ratio": gb.ratio,
            "vanishing_order": detail,
        }));
    }
    write_csv(&w.dir().join("m_map.csv"), &map)?;
    Ok(w.finish(
        manifest(cfg, "doubling", vec![cfg.mesh_h]),
        json!({ "fields": summary }),
    )?)
}

/// Side of the cubes used by the per-cube nodal checks.
const NODAL_CUBE_SIDE: f64 = 0.1;

pub fn cmd_nodal(cfg: &RunConfig) -> CmdResult {
    let mut w = stage(cfg, "nodal")?;
    let h = cfg.mesh_h;
    let fields = build_fields(cfg)?;
    #[derive(Serialize)]
    struct Length<'a> {
        label: &'a str,
        total_length: f64,
        segments: usize,
        degenerate_cells: usize,
        boundary_traces: usize,
        h: f64,
    }
    #[derive(Serialize)]
    struct Segment<'a> {
        label: &'a str,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    }
    #[derive(Serialize)]
    struct Band<'a> {
        label: &'a str,
        band: usize,
        lo: f64,
        hi: f64,
        length: f64,
        ratio: f64,
    }
    let sets = fields
        .par_iter()
        .map(|(_, f)| extract_nodal(f, h))
        .collect::<LabResult<Vec<_>>>()?;
    let mut lengths = Vec::new();
    let mut segments = Vec::new();
    for ((label, _), set) in fields.iter().zip(&sets) {
        lengths.push(Length {
            label,
            total_length: set.total_length,
            segments: set.segments.len(),
            degenerate_cells: set.degenerate_cells,
            boundary_traces: set.boundary_traces,
            h,
        });
        for p in set.plot_rows() {
            segments.push(Segment {
                label,
                x0: p[0],
                y0: p[1],
                x1: p[2],
                y1: p[3],
            });
        }
    }
    write_csv(&w.dir().join("lengths.csv"), &lengths)?;
    write_csv(&w.dir().join("segments.csv"), &segments)?;

    for &r in &cfg.radii.interior {
        let st = interior_bound_study(&fields, r, h)?;
        let positive: Vec<f64> = st
            .rows
            .iter()
            .map(|x| x.ratio)
            .filter(|&x| x > 0.0)
            .collect();
        w.push(record(
            "interior_nodal_bound",
            "all_fields",
            json!({ "r": r, "h": h, "fields": st.rows.len() }),
            Some(st.fitted_c),
            None,
            Verdict::Fitted,
            format!(
                "per-field ratio spread {} over {} fields with nodal lines",
                spread(&positive),
                positive.len()
            ),
        ))?;
    }

    let mut bands = Vec::new();
    for (label, f) in &fields {
        let lf = lift(f.clone(), SLAB_HALFWIDTH)?;
        let dom = &f.domain;

        let mid = midpoint(dom);
        let half = 0.5 * NODAL_CUBE_SIDE;
        if dom.contains(mid) && dom.boundary_distance(mid) >= 2.0 * NODAL_CUBE_SIDE {
            let lo = [mid[0] - half, mid[1] - half];
            let hi = [mid[0] + half, mid[1] + half];
            let mesh = TriMesh::rectangle(lo, hi, NODAL_CUBE_SIDE / 64.0);
            let vals: Vec<f64> = mesh.nodes.iter().map(|&p| f.value(p)).collect();
            let len = match trace_zero_set(&mesh, &vals, false) {
                Ok(s) => s.total_length,
                Err(LabError::TrivialField(_)) => 0.0,
                Err(e) => return Err(e.into()),
            };
            if let Ok(m) = doubling_index(&lf, mid, NODAL_CUBE_SIDE * std::f64::consts::SQRT_2) {
                w.push(record(
                    "interior_cube_nodal",
                    label,
                    json!({ "center": mid, "side": NODAL_CUBE_SIDE }),
                    Some(len / ((m.m + 1.0) * NODAL_CUBE_SIDE)),
                    None,
                    Verdict::Fitted,
                    format!("length {len}, M = {}", m.m),
                ))?;
            }
        }

        let chart = bottom_chart(dom, 0.5)?;
        let cf = ChartField::new(&lf, chart);
        let cube = Cube {
            lo: [-half, 0.0, 0.0],
            side: NODAL_CUBE_SIDE,
        };
        match boundary_cube_nodal(&cf, &cube, cfg.dividing.params.gate_exponent, 64) {
            Ok(b) => w.push(record(
                "boundary_cube_nodal",
                label,
                json!({ "side": NODAL_CUBE_SIDE, "gate_exponent": cfg.dividing.params.gate_exponent }),
                Some(b.ratio),
                Some(b.odd_defect),
                Verdict::Fitted,
                format!(
                    "length {}, M(Q) = {}, side within smallness gate: {}",
                    b.length,
                    b.m_q,
                    NODAL_CUBE_SIDE <= b.gate_limit
                ),
            ))?,
            Err(LabError::TrivialField(_)) | Err(LabError::NotApplicable(_)) => {}
            Err(e) => return Err(e.into()),
        }

        let st = collar_decomposition_study(f, cfg.sweep.r0_knob, h)?;
        for b in st.bands {
            bands.push(Band {
                label,
                band: b.band,
                lo: b.lo,
                hi: b.hi,
                length: b.length,
                ratio: b.ratio,
            });
        }
    }
    write_csv(&w.dir().join("collar_bands.csv"), &bands)?;

    let face = FaceCube {
        lo: [0.0, 0.0],
        side: 1.0,
        face: Face::Bottom,
    };
    let samples = (1..=4)
        .map(|k| {
            let a = k as f64 * std::f64::consts::PI;
            let s = a.sinh();
            measure_smallness(
                &move |x: [f64; 2]| {
                    let u = (a * x[0]).sin() * (a * x[1]).sinh() / s;
                    let g = [
                        a * (a * x[0]).cos() * (a * x[1]).sinh() / s,
                        a * (a * x[0]).sin() * (a * x[1]).cosh() / s,
                    ];
                    (u, g)
                },
                &face,
            )
        })
        .collect::<LabResult<Vec<_>>>()?;
    let sp = smallness_propagation(&samples)?;
    w.push(record(
        "smallness_propagation",
        "harmonic_sin_sinh_family",
        json!({ "k": [1, 2, 3, 4], "face": "bottom" }),
        sp.alpha,
        Some(sp.residual),
        Verdict::Fitted,
        format!("eps from {} to {}", samples[3].eps, samples[0].eps),
    ))?;

    let summary = json!({
        "lengths": lengths,
        "smallness_alpha": sp.alpha,
    });
    Ok(w.finish(manifest(cfg, "nodal", vec![h]), summary)?)
}

/// Largest explicit-tree depth that keeps the node count manageable.
fn tree_depth(a: u32, wanted: u32) -> u32 {
    let per = (a as f64).powi(3);
    let mut g = 0;
    while g < wanted && per.powi(g as i32 + 1) <= 2.0e5 {
        g += 1;
    }
    g.max(1)
}

pub fn cmd_divide(cfg: &RunConfig) -> CmdResult {
    let mut w = stage(cfg, "divide")?;
    let d = &cfg.dividing;
    let p = &d.params;
    let (num, den) = p.kappa_rational();
    #[derive(Serialize)]
    struct GenRow {
        m_q: f64,
        generation: u32,
        cubes_processed: u128,
        halved: u128,
        carried: u128,
        terminal: u128,
        nonterminal_charge: f64,
        terminal_charge: f64,
        contribution: f64,
    }
    #[derive(Serialize)]
    struct SeriesRow {
        m_q: f64,
        k0: u32,
        depth: u32,
        partial: bool,
        recursion_total: f64,
        closed_form_total: f64,
        kappa_form: f64,
        final_bound: f64,
        fitted_c: f64,
        kappa_form_c: f64,
        chain_holds: bool,
    }
    let mut gens = Vec::new();
    let mut series = Vec::new();
    let root = Cube {
        lo: [0.0, 0.0, 0.0],
        side: p.side,
    };

    let lemma = match d.mode {
        DivideMode::Synthetic => {
            for &m in &d.m_values {
                let (acc, _) = run_class_recursion(p, d.model, m, d.max_generations)?;
                for g in &acc.per_generation {
                    gens.push(GenRow {
                        m_q: m,
                        generation: g.generation,
                        cubes_processed: g.cubes_processed,
                        halved: g.halved,
                        carried: g.carried,
                        terminal: g.terminal,
                        nonterminal_charge: g.nonterminal_charge,
                        terminal_charge: g.terminal_charge,
                        contribution: g.contribution,
                    });
                }
                let s = &acc.series;
                series.push(SeriesRow {
                    m_q: m,
                    k0: acc.k0,
                    depth: acc.depth,
                    partial: acc.partial,
                    recursion_total: acc.series_total,
                    closed_form_total: acc.closed_form_total,
                    kappa_form: s.kappa_form,
                    final_bound: s.final_bound,
                    fitted_c: s.fitted_c,
                    kappa_form_c: s.kappa_form_c,
                    chain_holds: s.chain_holds,
                });
                w.push(record(
                    "dividing_accounting",
                    &format!("{:?}_m{m}", d.model).to_lowercase(),
                    json!({ "a": p.a, "n": p.n, "m0": p.m0, "m_q": m, "max_generations": d.max_generations }),
                    Some(s.fitted_c),
                    None,
                    pass_fail(acc.within_bound() && s.chain_holds),
                    format!(
                        "recursion {} vs closed form {}; kappa-form ratio {}",
                        acc.series_total, acc.closed_form_total, s.kappa_form_c
                    ),
                ))?;
            }
            let m_q = d.m_values[0];
            let oracle = match (d.counterexample_layer, d.model) {
                (Some(layer), _) => SyntheticOracle::Counterexample { m_q, layer },
                (None, ClassModel::Halving) => SyntheticOracle::Halving { m_q },
                (None, ClassModel::WorstCase) => SyntheticOracle::WorstCase { m_q },
            };
            if p.n == 2 {
                let depth = tree_depth(p.a, d.tree_generations);
                let (tree, _) = run_dividing(&oracle, &root, p, depth)?;
                fs::write(w.dir().join("tree.txt"), tree.lines().join("\n") + "\n")?;
            }
            lemma_record(&mut w, &oracle, &root, p.a, p.m0, "synthetic")?
        }
        DivideMode::Field => {
            let field = SolutionField::closed_form(d.field.clone())?;
            let lf = lift(field, SLAB_HALFWIDTH)?;
            let chart = match lf.base.domain.kind {
                DomainKind::Rectangle { .. } => {
                    StraightenedChart::flat([0.0, 0.0], [1.0, 0.0], 1.0)
                }
                _ => bottom_chart(&lf.base.domain, 0.5)?,
            };
            let src = FieldSource::new(ChartField::new(&lf, chart));
            let q = Cube {
                lo: [d.cube_x - 0.5 * d.cube_side, 0.0, 0.0],
                side: d.cube_side,
            };
            let out = lemma_record(&mut w, &src, &q, p.a, p.m0, &form_label(&d.field))?;
            let fp = nodalab::dividing::DividingConfig {
                side: d.cube_side,
                ..p.clone()
            };
            match run_dividing(&src, &q, &fp, 1) {
                Ok((tree, _)) => {
                    fs::write(w.dir().join("tree.txt"), tree.lines().join("\n") + "\n")?
                }
                Err(LabError::NotApplicable(_)) => {}
                Err(e) => return Err(e.into()),
            }
            out
        }
    };
    write_csv(&w.dir().join("generations.csv"), &gens)?;
    write_csv(&w.dir().join("series.csv"), &series)?;
    let summary = json!({
        "kappa": format!("{num}/{den}"),
        "kappa_value": p.kappa(),
        "a0_gate": p.a0_gate(),
        "dividing_lemma": lemma,
    });
    Ok(w.finish(manifest(cfg, "divide", vec![]), summary)?)
}

fn lemma_record(
    w: &mut ReportWriter,
    src: &dyn MSource,
    q: &Cube,
    a: u32,
    m0: f64,
    subject: &str,
) -> std::result::Result<serde_json::Value, CommandError> {
    match check_dividing_lemma(src, q, a, m0) {
        Ok(rep) => {
            #[derive(Serialize)]
            struct LayerRow {
                layer: u32,
                min_m: f64,
                threshold: f64,
                passed: bool,
            }
            let rows: Vec<LayerRow> = rep
                .layers
                .iter()
                .map(|l| LayerRow {
                    layer: l.layer,
                    min_m: l.min_m,
                    threshold: l.threshold,
                    passed: l.passed,
                })
                .collect();
            write_csv(&w.dir().join("layers.csv"), &rows)?;
            let failed: Vec<u32> = rep
                .layers
                .iter()
                .filter(|l| !l.passed)
                .map(|l| l.layer)
                .collect();
            w.push(record(
                "dividing_lemma",
                subject,
                json!({ "cube": q, "a": a, "m0": m0 }),
                None,
                Some(rep.error_bar),
                pass_fail(rep.passed),
                format!("M(Q) = {}; failing layers {:?}", rep.m_q, failed),
            ))?;
            Ok(serde_json::to_value(&rep).map_err(std::io::Error::from)?)
        }
        Err(LabError::NotApplicable(msg)) => Ok(json!({ "not_applicable": msg })),
        Err(e) => Err(e.into()),
    }
}

/// Monte-Carlo estimate of `H = ∫ ū²` on the lifted ball, with its standard error.
pub fn monte_carlo_h(
    lf: &LiftedField,
    x0: [f64; 2],
    r: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        let p = loop {
            let p: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
                break p;
            }
        };
        let x = [x0[0] + r * p[0], x0[1] + r * p[1]];
        let v = if lf.base.domain.contains(x) {
            lf.value(x, r * p[2]).powi(2)
        } else {
            0.0
        };
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let vol = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    (vol * mean, vol * (var / n).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCsvRow {
    pub amplitude: f64,
    pub mode: usize,
    pub eigenvalue: f64,
    pub sqrt_lambda: f64,
    pub grad_norm: f64,
    pub total_length: f64,
    pub collar_length: f64,
    pub interior_length: f64,
    pub bands: usize,
    pub shape_ratio: f64,
    pub small_gradient_ratio: f64,
    pub mc_x: f64,
    pub mc_y: f64,
    pub h_quadrature: f64,
    pub h_monte_carlo: f64,
    pub mc_std_error: f64,
}

pub fn cmd_sweep(cfg: &RunConfig) -> CmdResult {
    let mut w = stage(cfg, "sweep")?;
    let s = &cfg.sweep;
    let domain = Domain::build(cfg.domain.clone(), DOMAIN_RESOLUTION)?;
    let count = *s.modes.iter().max().unwrap();
    let members: Vec<Vec<SweepCsvRow>> = s
        .amplitudes
        .par_iter()
        .enumerate()
        .map(|(ai, &a)| -> LabResult<Vec<SweepCsvRow>> {
            let pot = if a == 0.0 {
                PotentialFamily::Zero
            } else {
                PotentialFamily::SinSin {
                    amplitude: a,
                    freq: s.freq,
                }
            };
            let fields =
                solve_eigenpairs(&domain, &pot, count, s.mesh_h, &EigenSettings::default())?;
            s.modes
                .par_iter()
                .map(|&k| {
                    let f = &fields[k - 1];
                    let row = sweep_row(a, k, f, s.r0_knob, s.mesh_h)?;
                    let lf = lift(f.clone(), SLAB_HALFWIDTH)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(member_seed(cfg.seed, ai, k));
                    let c = interior_point(&domain, s.mc_radius, &mut rng)?;
                    let hq = lf.integral_h(&lf.ball(c, s.mc_radius)?)?;
                    let (hm, se) = monte_carlo_h(&lf, c, s.mc_radius, s.mc_samples, &mut rng);
                    Ok(SweepCsvRow {
                        amplitude: row.amplitude,
                        mode: row.mode,
                        eigenvalue: row.eigenvalue,
                        sqrt_lambda: row.sqrt_lambda,
                        grad_norm: row.grad_norm,
                        total_length: row.total_length,
                        collar_length: row.collar_length,
                        interior_length: row.interior_length,
                        bands: row.bands,
                        shape_ratio: row.shape_ratio,
                        small_gradient_ratio: row.small_gradient_ratio,
                        mc_x: c[0],
                        mc_y: c[1],
                        h_quadrature: hq,
                        h_monte_carlo: hm,
                        mc_std_error: se,
                    })
                })
                .collect()
        })
        .collect::<LabResult<Vec<_>>>()?;
    let rows: Vec<SweepCsvRow> = members.into_iter().flatten().collect();
    write_csv(&w.dir().join("sweep.csv"), &rows)?;
    let report = sweep_summary(
        rows.iter()
            .map(|r| SweepRow {
                amplitude: r.amplitude,
                mode: r.mode,
                eigenvalue: r.eigenvalue,
                sqrt_lambda: r.sqrt_lambda,
                grad_norm: r.grad_norm,
                total_length: r.total_length,
                collar_length: r.collar_length,
                interior_length: r.interior_length,
                bands: r.bands,
                shape_ratio: r.shape_ratio,
                small_gradient_ratio: r.small_gradient_ratio,
            })
            .collect(),
    );
    let zero: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.amplitude == 0.0)
        .map(|r| r.small_gradient_ratio)
        .collect();
    let zero_spread = spread(&zero);
    let mc_z = rows
        .iter()
        .map(|r| (r.h_quadrature - r.h_monte_carlo).abs() / r.mc_std_error.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    w.push(record(
        "nodal_scaling_sweep",
        "sin_sin_family",
        json!({ "amplitudes": s.amplitudes, "freq": s.freq, "modes": s.modes, "mesh_h": s.mesh_h, "r0_knob": s.r0_knob }),
        Some(report.fitted_c),
        None,
        Verdict::Fitted,
        format!(
            "shape-ratio spread {}; small-gradient spread at a = 0: {}",
            report.spread, zero_spread
        ),
    ))?;
    let summary = json!({
        "fitted_c": report.fitted_c,
        "spread": report.spread,
        "small_gradient_spread": zero_spread,
        "monte_carlo_max_z": mc_z,
    });
    Ok(w.finish(manifest(cfg, "sweep", vec![s.mesh_h]), summary)?)
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(0.0, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn member_seed(seed: u64, amplitude_index: usize, mode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((amplitude_index as u64) << 32)
        .wrapping_add(mode as u64)
}

fn interior_point(domain: &Domain, margin: f64, rng: &mut ChaCha8Rng) -> LabResult<[f64; 2]> {
    let (lo, hi) = domain.bounding_box();
    for _ in 0..10_000 {
        let x = [
            rng.random_range(lo[0]..hi[0]),
            rng.random_range(lo[1]..hi[1]),
        ];
        if domain.contains(x) && domain.boundary_distance(x) >= margin {
            return Ok(x);
        }
    }
    Err(LabError::EmptyRegion)
}
