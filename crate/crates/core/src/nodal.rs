//! Zero sets of solutions: extraction by marching triangles, length per
//! region, and the interior, collar and boundary-cube scaling studies.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doubling::{cube_doubling, ChartField, Cube};
use crate::error::{invalid, LabError, Result};
use crate::field::{
    solve_eigenpairs, ClosedForm, EigenSettings, FieldRepr, PotentialFamily, SolutionField,
};
use crate::geometry::Domain;
use crate::mesh::TriMesh;

/// Mesh edge `(a, b)` with `a < b` and the crossing parameter from `a`.
type Crossing = ((usize, usize), f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalSet {
    pub segments: Vec<[[f64; 2]; 2]>,
    pub total_length: f64,
    pub region_lengths: BTreeMap<String, f64>,
    /// Cells with `u ≡ 0` at all vertices; excluded from the length.
    pub degenerate_cells: usize,
    /// Segments dropped because both endpoints lie on the boundary.
    pub boundary_traces: usize,
    pub h: f64,
}

impl NodalSet {
    /// Joins segments sharing an endpoint into polylines.
    pub fn chains(&self) -> Vec<Vec<[f64; 2]>> {
        let key = |p: [f64; 2]| ((p[0] * 1e10).round() as i64, (p[1] * 1e10).round() as i64);
        let mut by_point: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            for p in s {
                by_point.entry(key(*p)).or_default().push(i);
            }
        }
        let mut used = vec![false; self.segments.len()];
        let mut chains = Vec::new();
        for start in 0..self.segments.len() {
            if used[start] {
                continue;
            }
            used[start] = true;
            let mut pts = vec![self.segments[start][0], self.segments[start][1]];
            for side in [1usize, 0] {
                loop {
                    let end = if side == 1 {
                        pts[pts.len() - 1]
                    } else {
                        pts[0]
                    };
                    let next = by_point
                        .get(&key(end))
                        .and_then(|v| v.iter().copied().find(|&j| !used[j]));
                    let Some(j) = next else { break };
                    used[j] = true;
                    let s = self.segments[j];
                    let far = if key(s[0]) == key(end) { s[1] } else { s[0] };
                    if side == 1 {
                        pts.push(far);
                    } else {
                        pts.insert(0, far);
                    }
                }
            }
            chains.push(pts);
        }
        chains
    }

    /// Plot data rows `(x₁, y₁, x₂, y₂)`.
    pub fn plot_rows(&self) -> Vec<[f64; 4]> {
        self.segments
            .iter()
            .map(|s| [s[0][0], s[0][1], s[1][0], s[1][1]])
            .collect()
    }

    /// Keeps the segments satisfying `keep` and updates the length.
    pub fn retain(&mut self, keep: impl Fn(&[[f64; 2]; 2]) -> bool) {
        self.segments.retain(|s| keep(s));
        self.total_length = self.segments.iter().map(seg_len).sum();
        self.assign_regions(|_| "all".to_string());
    }

    fn assign_regions(&mut self, label: impl Fn([f64; 2]) -> String) {
        let mut map = BTreeMap::new();
        for s in &self.segments {
            let mid = [0.5 * (s[0][0] + s[1][0]), 0.5 * (s[0][1] + s[1][1])];
            *map.entry(label(mid)).or_insert(0.0) += seg_len(s);
        }
        self.region_lengths = map;
    }
}

fn seg_len(s: &[[f64; 2]; 2]) -> f64 {
    (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1])
}

/// Segment in one triangle, whether the cell is degenerate, whether it is a boundary trace.
type CellTrace = (Option<[[f64; 2]; 2]>, bool, bool);

/// Zero set of the piecewise-linear interpolant of `values` on `mesh`.
/// Zero values count as positive. When `drop_boundary_traces` is set,
/// segments with both endpoints on the mesh boundary are discarded.
pub fn trace_zero_set(
    mesh: &TriMesh,
    values: &[f64],
    drop_boundary_traces: bool,
) -> Result<NodalSet> {
    if values.len() != mesh.nodes.len() {
        return Err(invalid("values", "length must match the mesh nodes"));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(LabError::TrivialField("u vanishes at every node".into()));
    }
    let bnd_edges = mesh.boundary_edges();
    let on_bnd = |c: &Crossing| -> bool {
        let ((a, b), t) = *c;
        bnd_edges.contains(&(a, b))
            || (t == 0.0 && mesh.on_boundary[a])
            || (t == 1.0 && mesh.on_boundary[b])
    };
    let per_cell: Vec<CellTrace> = mesh
        .tris
        .par_iter()
        .map(|t| {
            let v = [values[t[0]], values[t[1]], values[t[2]]];
            if v.iter().all(|&x| x == 0.0) {
                return (None, true, false);
            }
            let pos = v.map(|x| x >= 0.0);
            if pos[0] == pos[1] && pos[1] == pos[2] {
                return (None, false, false);
            }
            let mut cross = Vec::with_capacity(2);
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                if pos[i] != pos[j] {
                    let (a, b, va, vb) = if t[i] < t[j] {
                        (t[i], t[j], v[i], v[j])
                    } else {
                        (t[j], t[i], v[j], v[i])
                    };
                    let s = va / (va - vb);
                    let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                    cross.push((
                        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])],
                        ((a, b), s),
                    ));
                }
            }
            let seg = [cross[0].0, cross[1].0];
            let keys = [cross[0].1, cross[1].1];
            let trace = drop_boundary_traces && on_bnd(&keys[0]) && on_bnd(&keys[1]);
            if trace || seg_len(&seg) == 0.0 {
                return (None, false, trace);
            }
            (Some(seg), false, false)
        })
        .collect();
    let mut segments = Vec::new();
    let mut degenerate_cells = 0;
    let mut boundary_traces = 0;
    for (s, deg, trace) in per_cell {
        degenerate_cells += deg as usize;
        boundary_traces += trace as usize;
        if let Some(seg) = s {
            segments.push(seg);
        }
    }
    let total_length = segments.iter().map(seg_len).sum();
    let mut set = NodalSet {
        segments,
        total_length,
        region_lengths: BTreeMap::new(),
        degenerate_cells,
        boundary_traces,
        h: mesh.h,
    };
    set.assign_regions(|_| "all".to_string());
    Ok(set)
}

fn satisfies_dirichlet(field: &SolutionField) -> bool {
    match &field.repr {
        FieldRepr::Exact { form, .. } => matches!(
            form,
            ClosedForm::SquareMode { .. } | ClosedForm::DiskMode { .. }
        ),
        FieldRepr::Mesh(_) => true,
    }
}

/// Nodal set of `field` on a mesh of its domain with edge length `h`.
/// Dirichlet fields get exact zeros on boundary nodes and boundary traces dropped.
pub fn extract_nodal(field: &SolutionField, h: f64) -> Result<NodalSet> {
    if !(h > 0.0) {
        return Err(invalid("h", "must be positive"));
    }
    let (mesh, mut values) = field.sample_on_mesh(h);
    let dirichlet = satisfies_dirichlet(field);
    if dirichlet {
        for (v, &b) in values.iter_mut().zip(&mesh.on_boundary) {
            if b {
                *v = 0.0;
            }
        }
    }
    trace_zero_set(&mesh, &values, dirichlet)
}

/// Interior region `Ω_{r_int}` and dyadic collar bands
/// `(2^j − 1)R < dist ≤ (2^{j+1} − 1)R` up to `r_int`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDecomposition {
    pub r_collar: f64,
    pub r_interior: f64,
    pub bands: Vec<[f64; 2]>,
}

impl RegionDecomposition {
    pub fn new(r_collar: f64, r_interior: f64) -> Result<RegionDecomposition> {
        if !(r_collar > 0.0 && r_interior > r_collar) {
            return Err(invalid("R", "need 0 < R < interior radius"));
        }
        let mut bands = Vec::new();
        let mut j = 0;
        loop {
            let lo = (2f64.powi(j) - 1.0) * r_collar;
            if lo >= r_interior {
                break;
            }
            let hi = ((2f64.powi(j + 1) - 1.0) * r_collar).min(r_interior);
            bands.push([lo, hi]);
            j += 1;
        }
        Ok(RegionDecomposition {
            r_collar,
            r_interior,
            bands,
        })
    }

    pub fn label(&self, dist: f64) -> String {
        if dist > self.r_interior {
            return "interior".into();
        }
        let j = self
            .bands
            .iter()
            .position(|b| dist <= b[1])
            .unwrap_or(self.bands.len() - 1);
        format!("band_{j:02}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorRow {
    pub label: String,
    pub sqrt_lambda: f64,
    pub interior_length: f64,
    /// `length · r / (1 + √λ)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorStudy {
    pub r: f64,
    pub rows: Vec<InteriorRow>,
    pub fitted_c: f64,
}

/// Nodal length in `Ω_r` against `(1/r)(1 + √λ)` over a family of fields.
pub fn interior_bound_study(
    family: &[(String, SolutionField)],
    r: f64,
    h: f64,
) -> Result<InteriorStudy> {
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    let rows = family
        .par_iter()
        .map(|(label, f)| {
            let mut set = extract_nodal(f, h)?;
            let dom = &f.domain;
            set.assign_regions(|x| {
                if dom.boundary_distance(x) > r {
                    "interior".into()
                } else {
                    "collar".into()
                }
            });
            let len = set.region_lengths.get("interior").copied().unwrap_or(0.0);
            let s = f.potential.lambda().sqrt();
            Ok(InteriorRow {
                label: label.clone(),
                sqrt_lambda: s,
                interior_length: len,
                ratio: len * r / (1.0 + s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_c = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(InteriorStudy { r, rows, fitted_c })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandLength {
    pub band: usize,
    pub lo: f64,
    pub hi: f64,
    pub length: f64,
    /// `length / (√λ + 1)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarStudy {
    pub r_collar: f64,
    pub r0: f64,
    pub grad_norm: f64,
    pub sqrt_lambda: f64,
    pub bands: Vec<BandLength>,
    pub interior_length: f64,
    pub collar_length: f64,
    pub total_length: f64,
    /// `collar_length / ((1 + ln(‖∇V‖ + 1))(√λ + 1))`.
    pub collar_ratio: f64,
    /// `total_length / ((1 + ln(‖∇V‖ + 1))(√λ + 1))`.
    pub total_ratio: f64,
    pub max_band_ratio: f64,
}

/// Collar scale `R = R₀‖∇V‖^{−1/2}` clamped to `(0, r₀/8]`.
pub fn collar_scale(r0_knob: f64, grad_norm: f64, r0: f64) -> f64 {
    let cap = r0 / 8.0;
    if grad_norm > 0.0 {
        (r0_knob / grad_norm.sqrt()).min(cap)
    } else {
        cap
    }
}

/// Nodal length per dyadic collar band and in `Ω_{r₀/2}`.
pub fn collar_decomposition_study(
    field: &SolutionField,
    r0_knob: f64,
    h: f64,
) -> Result<CollarStudy> {
    if !(r0_knob > 0.0) {
        return Err(invalid("R0", "must be positive"));
    }
    let r0 = field.domain.collar_params().r0;
    let grad_norm = field.potential.grad_sup_norm;
    let r_collar = collar_scale(r0_knob, grad_norm, r0);
    let dec = RegionDecomposition::new(r_collar, r0 / 2.0)?;
    let mut set = extract_nodal(field, h)?;
    let dom = &field.domain;
    set.assign_regions(|x| dec.label(dom.boundary_distance(x)));
    let s = field.potential.lambda().sqrt();
    let bands: Vec<BandLength> = dec
        .bands
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let length = set
                .region_lengths
                .get(&format!("band_{j:02}"))
                .copied()
                .unwrap_or(0.0);
            BandLength {
                band: j,
                lo: b[0],
                hi: b[1],
                length,
                ratio: length / (s + 1.0),
            }
        })
        .collect();
    let interior_length = set.region_lengths.get("interior").copied().unwrap_or(0.0);
    let collar_length: f64 = bands.iter().map(|b| b.length).sum();
    let shape = (1.0 + (grad_norm + 1.0).ln()) * (s + 1.0);
    Ok(CollarStudy {
        r_collar,
        r0,
        grad_norm,
        sqrt_lambda: s,
        max_band_ratio: bands.iter().map(|b| b.ratio).fold(0.0, f64::max),
        bands,
        interior_length,
        collar_length,
        total_length: set.total_length,
        collar_ratio: collar_length / shape,
        total_ratio: set.total_length / shape,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCubeNodal {
    pub cube: Cube,
    pub m_q: f64,
    /// `‖∇V‖^{−1/2} M^{−C·M}`; infinite when `∇V ≡ 0`.
    pub gate_limit: f64,
    /// Nodal length in the cross-section of `Q`.
    pub length: f64,
    /// Nodal length in the cross-section of `Q ∪ Q′` (odd reflection).
    pub length_reflected: f64,
    /// `length · side / (M(Q) · sideⁿ)`, the nodal area over `M rⁿ`.
    pub ratio: f64,
    /// `max |ũ(y′, −yₙ) + ũ(y′, yₙ)|` on the sample grid.
    pub odd_defect: f64,
}

/// Nodal measure of the chart-extended lift in a boundary cube.
pub fn boundary_cube_nodal(
    cf: &ChartField<'_>,
    cube: &Cube,
    gate_exponent: f64,
    cells: usize,
) -> Result<BoundaryCubeNodal> {
    if cube.lo[1].abs() > 1e-12 * cube.side {
        return Err(invalid(
            "cube",
            "bottom face must lie on the flattened boundary",
        ));
    }
    if cells < 2 {
        return Err(invalid("cells", "need at least 2 cells per side"));
    }
    let md = cube_doubling(cf, cube)?;
    let m_q = md.m_q;
    let grad = cf.lf.base.potential.grad_sup_norm;
    let gate_limit = if grad > 0.0 {
        grad.powf(-0.5) * m_q.max(1.0).powf(-gate_exponent * m_q.max(1.0))
    } else {
        f64::INFINITY
    };
    if cube.side > gate_limit {
        return Err(LabError::GateFailed {
            side: cube.side,
            limit: gate_limit,
        });
    }
    let lo = [cube.lo[0], -cube.side];
    let hi = [cube.lo[0] + cube.side, cube.side];
    let mesh = TriMesh::rectangle(lo, hi, cube.side / cells as f64);
    let values: Vec<f64> = mesh.nodes.par_iter().map(|p| cf.value(*p)).collect();
    let mut odd_defect: f64 = 0.0;
    let index: HashMap<(i64, i64), usize> = mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64),
                i,
            )
        })
        .collect();
    for (i, p) in mesh.nodes.iter().enumerate() {
        if p[1] > 0.0 {
            if let Some(&j) =
                index.get(&((p[0] * 1e9).round() as i64, (-p[1] * 1e9).round() as i64))
            {
                odd_defect = odd_defect.max((values[i] + values[j]).abs());
            }
        }
    }
    let mut set = trace_zero_set(&mesh, &values, false)?;
    let flat = 1e-12 * cube.side;
    set.retain(|s| s[0][1].abs() > flat || s[1][1].abs() > flat);
    set.assign_regions(|x| {
        if x[1] >= 0.0 {
            "upper".into()
        } else {
            "lower".into()
        }
    });
    let length = set.region_lengths.get("upper").copied().unwrap_or(0.0);
    let n = 2;
    Ok(BoundaryCubeNodal {
        cube: *cube,
        m_q,
        gate_limit,
        length,
        length_reflected: set.total_length,
        ratio: length * cube.side / (m_q * cube.side.powi(n)),
        odd_defect,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub mode: usize,
    pub eigenvalue: f64,
    pub sqrt_lambda: f64,
    pub grad_norm: f64,
    pub total_length: f64,
    pub collar_length: f64,
    pub interior_length: f64,
    pub bands: usize,
    /// `total / ((1 + ln(‖∇V‖ + 1))(√λ + 1))`.
    pub shape_ratio: f64,
    /// `total / (√λ + 1)`.
    pub small_gradient_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fitted_c: f64,
    /// max/min of the shape ratio over all rows.
    pub spread: f64,
}

/// Total nodal length against `(1 + ln(‖∇V‖+1))(√λ+1)` over the potential
/// family `a·sin(f x)sin(f y)` and the given eigen-indices (1-based).
pub fn theorem_sweep(
    domain: &Domain,
    amplitudes: &[f64],
    freq: f64,
    modes: &[usize],
    h: f64,
    r0_knob: f64,
) -> Result<SweepReport> {
    let count = modes
        .iter()
        .copied()
        .max()
        .ok_or_else(|| invalid("modes", "must be nonempty"))?;
    if modes.contains(&0) {
        return Err(invalid("modes", "indices start at 1"));
    }
    let mut rows = Vec::new();
    for &a in amplitudes {
        let w = if a == 0.0 {
            PotentialFamily::Zero
        } else {
            PotentialFamily::SinSin { amplitude: a, freq }
        };
        let fields = solve_eigenpairs(domain, &w, count, h, &EigenSettings::default())?;
        let part = modes
            .par_iter()
            .map(|&k| sweep_row(a, k, &fields[k - 1], r0_knob, h))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(part);
    }
    Ok(sweep_summary(rows))
}

/// One sweep row for a solved member `field` of amplitude `amplitude`.
pub fn sweep_row(
    amplitude: f64,
    mode: usize,
    field: &SolutionField,
    r0_knob: f64,
    h: f64,
) -> Result<SweepRow> {
    let st = collar_decomposition_study(field, r0_knob, h)?;
    Ok(SweepRow {
        amplitude,
        mode,
        eigenvalue: field.eigenvalue,
        sqrt_lambda: st.sqrt_lambda,
        grad_norm: st.grad_norm,
        total_length: st.total_length,
        collar_length: st.collar_length,
        interior_length: st.interior_length,
        bands: st.bands.len(),
        shape_ratio: st.total_ratio,
        small_gradient_ratio: st.total_length / (st.sqrt_lambda + 1.0),
    })
}

/// Fitted constant and spread of the shape ratio over `rows`.
pub fn sweep_summary(rows: Vec<SweepRow>) -> SweepReport {
    let max = rows.iter().map(|r| r.shape_ratio).fold(0.0, f64::max);
    let min = rows
        .iter()
        .map(|r| r.shape_ratio)
        .fold(f64::INFINITY, f64::min);
    SweepReport {
        rows,
        fitted_c: max,
        spread: max / min,
    }
}
