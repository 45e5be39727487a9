//! Recursive `A^{n+1}` subdivision of boundary cubes, the per-layer halving
//! check, nodal-measure accounting across generations and its closed-form
//! series bound.
//!
//! Cubes live in straightened coordinates `(y₁, y₂, t)` with `y₂` the
//! distance to the flattened boundary. Layer 1 is the layer farthest from it.
//! Charges carry the unit constant in every `C` slot; generation charges are
//! aggregated per layer and the worst layer is multiplied by `A`, matching the
//! per-layer bounds of the series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doubling::{cube_doubling, ChartField, Cube};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{Domain, DomainKind};

/// Space dimension of the base domain in field mode.
const FIELD_N: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Satisfied,
    Waived,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DividingConfig {
    /// Subdivision factor per axis; odd, at least 3.
    pub a: u32,
    /// Space dimension `n`; cubes have `n + 1` axes.
    pub n: u32,
    pub m0: f64,
    /// Side of the root cube.
    pub side: f64,
    /// Exponent `C` in the gate `A ≥ M₀^{C·M₀}`.
    pub gate_exponent: f64,
    /// Reject configurations that fail the gate instead of recording a waiver.
    pub enforce_gate: bool,
}

impl Default for DividingConfig {
    fn default() -> Self {
        DividingConfig {
            a: 3,
            n: 2,
            m0: 1.5,
            side: 1.0,
            gate_exponent: 1.0,
            enforce_gate: false,
        }
    }
}

impl DividingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a < 3 || self.a.is_multiple_of(2) {
            return Err(invalid("a", "must be an odd integer of at least 3"));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if !(self.m0 > 1.0) {
            return Err(invalid("m0", "must exceed 1"));
        }
        if !(self.side > 0.0) {
            return Err(invalid("side", "must be positive"));
        }
        if self.enforce_gate && self.a0_gate() == GateStatus::Violated {
            return Err(LabError::GateFailed {
                side: self.a as f64,
                limit: self.a0_limit(),
            });
        }
        Ok(())
    }

    /// `Aⁿ`.
    pub fn layer_size(&self) -> u128 {
        (self.a as u128).pow(self.n)
    }

    /// `κ = 1 − ½A^{−n}`.
    pub fn kappa(&self) -> f64 {
        1.0 - 0.5 / self.layer_size() as f64
    }

    /// `κ` as the exact fraction `(2Aⁿ − 1) / 2Aⁿ`.
    pub fn kappa_rational(&self) -> (u128, u128) {
        let d = 2 * self.layer_size();
        (d - 1, d)
    }

    /// `k₀ = ⌊log₂(M(Q)/M₀)⌋ + 1`.
    pub fn k0(&self, m_q: f64) -> u32 {
        ((m_q / self.m0).log2().floor() + 1.0).max(0.0) as u32
    }

    pub fn a0_limit(&self) -> f64 {
        self.m0.powf(self.gate_exponent * self.m0)
    }

    pub fn a0_gate(&self) -> GateStatus {
        if self.a as f64 >= self.a0_limit() {
            GateStatus::Satisfied
        } else if self.enforce_gate {
            GateStatus::Violated
        } else {
            GateStatus::Waived
        }
    }

    /// Layers at the bottom of each generation that are subdivided further.
    pub fn bottom_layers(&self) -> u64 {
        10 * (self.n as u64 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Root,
    /// `M ≤ M_parent / 2`.
    Halved,
    Carried,
    /// `M ≤ M₀`, not touching the flattened boundary.
    TerminalSmall,
    /// `M ≤ M₀` with a face on the flattened boundary.
    TerminalBoundary,
}

impl Classification {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Classification::TerminalSmall | Classification::TerminalBoundary
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeNode {
    pub generation: u32,
    /// Integer coordinates in units of the generation's side `R/A^k`.
    pub index: [u64; 3],
    /// Layer within the parent, 1 (top) to `A` (bottom); 0 for the root.
    pub layer: u32,
    /// Position within the parent's layer, `0..Aⁿ`.
    pub position: u32,
    pub parent: Option<usize>,
    pub m_value: f64,
    pub m_error: f64,
    pub classification: Classification,
    pub subdivided: bool,
}

impl CubeNode {
    pub fn cube(&self, root: &Cube, a: u32) -> Cube {
        let side = root.side / (a as f64).powi(self.generation as i32);
        Cube {
            lo: [
                root.lo[0] + self.index[0] as f64 * side,
                root.lo[1] + self.index[1] as f64 * side,
                root.lo[2] + self.index[2] as f64 * side,
            ],
            side,
        }
    }

    /// Children in the order (normal offset, tangential offset, t offset).
    fn child_specs(&self, a: u32) -> Vec<([u64; 3], u32, u32)> {
        let a64 = a as u64;
        let mut out = Vec::with_capacity((a * a * a) as usize);
        for b in (0..a).rev() {
            for c in 0..a {
                for i in 0..a {
                    let idx = [
                        self.index[0] * a64 + i as u64,
                        self.index[1] * a64 + b as u64,
                        self.index[2] * a64 + c as u64,
                    ];
                    out.push((idx, a - b, i + a * c));
                }
            }
        }
        out
    }
}

/// Context handed to a doubling-index source for one cube.
#[derive(Clone, Copy, Debug)]
pub struct NodeCtx {
    pub generation: u32,
    pub index: [u64; 3],
    pub layer: u32,
    pub position: u32,
    pub parent_m: f64,
    pub m_q: f64,
    pub cube: Cube,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MValue {
    pub m: f64,
    pub error: f64,
}

/// A source of doubling indices for cubes of the subdivision.
pub trait MSource: Sync {
    fn root(&self, cube: &Cube) -> Result<MValue>;
    fn child(&self, ctx: &NodeCtx) -> Result<MValue>;
}

/// Named synthetic doubling-index models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum SyntheticOracle {
    /// Every cube has `M(Q)·2^{−generation}`.
    Halving { m_q: f64 },
    /// In each layer of each parent one child halves, the rest keep the parent's value.
    WorstCase { m_q: f64 },
    /// All children in `layer` keep `M(Q)`; every other child halves.
    Counterexample { m_q: f64, layer: u32 },
}

impl SyntheticOracle {
    pub fn m_q(&self) -> f64 {
        match *self {
            SyntheticOracle::Halving { m_q }
            | SyntheticOracle::WorstCase { m_q }
            | SyntheticOracle::Counterexample { m_q, .. } => m_q,
        }
    }
}

impl MSource for SyntheticOracle {
    fn root(&self, _cube: &Cube) -> Result<MValue> {
        Ok(MValue {
            m: self.m_q(),
            error: 0.0,
        })
    }

    fn child(&self, ctx: &NodeCtx) -> Result<MValue> {
        let m = match *self {
            SyntheticOracle::Halving { m_q } => m_q * 0.5f64.powi(ctx.generation as i32),
            SyntheticOracle::WorstCase { .. } => {
                if ctx.position == 0 {
                    ctx.parent_m / 2.0
                } else {
                    ctx.parent_m
                }
            }
            SyntheticOracle::Counterexample { m_q, layer } => {
                if ctx.layer == layer {
                    m_q
                } else {
                    ctx.parent_m / 2.0
                }
            }
        };
        Ok(MValue { m, error: 0.0 })
    }
}

/// Doubling indices computed from a solution read through a boundary chart.
/// `M` does not depend on the t-position of a cube, so values are cached per
/// `(generation, y₁, y₂)` index.
pub struct FieldSource<'a> {
    pub field: ChartField<'a>,
    cache: std::sync::Mutex<std::collections::HashMap<(u32, u64, u64), MValue>>,
}

impl<'a> FieldSource<'a> {
    pub fn new(field: ChartField<'a>) -> FieldSource<'a> {
        FieldSource {
            field,
            cache: Default::default(),
        }
    }

    fn eval(&self, cube: &Cube) -> Result<MValue> {
        let d = cube_doubling(&self.field, cube)?;
        Ok(MValue {
            m: d.m_q,
            error: d.refinement_gain,
        })
    }
}

impl MSource for FieldSource<'_> {
    fn root(&self, cube: &Cube) -> Result<MValue> {
        self.eval(cube)
    }

    fn child(&self, ctx: &NodeCtx) -> Result<MValue> {
        let key = (ctx.generation, ctx.index[0], ctx.index[1]);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = self.eval(&ctx.cube)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: u32,
    pub subcube_m: Vec<f64>,
    pub min_m: f64,
    /// `M(Q)/2` plus the error bar.
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DividingLemmaReport {
    pub m_q: f64,
    pub error_bar: f64,
    pub layers: Vec<LayerReport>,
    pub passed: bool,
}

/// Checks that every layer of the first subdivision of `q` contains a subcube
/// with `M ≤ M(Q)/2` (within error bars).
pub fn check_dividing_lemma(
    source: &dyn MSource,
    q: &Cube,
    a: u32,
    m0: f64,
) -> Result<DividingLemmaReport> {
    if a < 3 || a.is_multiple_of(2) {
        return Err(invalid("a", "must be an odd integer of at least 3"));
    }
    let root_val = source.root(q)?;
    if root_val.m < m0 {
        return Err(LabError::NotApplicable(format!(
            "M(Q) = {} below M0 = {m0}",
            root_val.m
        )));
    }
    let root = CubeNode {
        generation: 0,
        index: [0, 0, 0],
        layer: 0,
        position: 0,
        parent: None,
        m_value: root_val.m,
        m_error: root_val.error,
        classification: Classification::Root,
        subdivided: true,
    };
    let specs = root.child_specs(a);
    let vals: Vec<(u32, MValue)> = specs
        .par_iter()
        .map(|&(index, layer, position)| {
            let probe = CubeNode {
                generation: 1,
                index,
                ..root.clone()
            };
            let ctx = NodeCtx {
                generation: 1,
                index,
                layer,
                position,
                parent_m: root_val.m,
                m_q: root_val.m,
                cube: probe.cube(q, a),
            };
            source.child(&ctx).map(|v| (layer, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::new();
    for layer in 1..=a {
        let in_layer: Vec<MValue> = vals
            .iter()
            .filter(|(l, _)| *l == layer)
            .map(|(_, v)| *v)
            .collect();
        let (min_m, min_err) = in_layer.iter().fold((f64::INFINITY, 0.0), |acc, v| {
            if v.m < acc.0 {
                (v.m, v.error)
            } else {
                acc
            }
        });
        let threshold = root_val.m / 2.0 + root_val.error / 2.0 + min_err;
        layers.push(LayerReport {
            layer,
            subcube_m: in_layer.iter().map(|v| v.m).collect(),
            min_m,
            threshold,
            passed: min_m <= threshold,
        });
    }
    Ok(DividingLemmaReport {
        m_q: root_val.m,
        error_bar: root_val.error,
        passed: layers.iter().all(|l| l.passed),
        layers,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub cubes_processed: u128,
    pub halved: u128,
    pub carried: u128,
    pub terminal: u128,
    /// Worst layer's charge from cubes with `M > M₀`.
    pub nonterminal_charge: f64,
    /// Worst layer's charge from cubes with `M ≤ M₀`.
    pub terminal_charge: f64,
    /// `A × (nonterminal + terminal)`.
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    pub a: u32,
    pub n: u32,
    pub kappa: f64,
    pub k0: u32,
    /// `A Rⁿ M κ/(1 − κ)`, the summed non-terminal series.
    pub nonterminal_sum: f64,
    /// `Σ_{k≥k₀} A² C(k,k₀)(Aⁿ−1)^{k−k₀} M₀ (R/A^k)ⁿ = A^{n+2} M₀ Rⁿ`.
    pub terminal_sum: f64,
    /// Terminal sum with `M₀` replaced by `M/2^{k₀−1}`.
    pub terminal_sum_in_m: f64,
    /// `A Rⁿ M κ/(1−κ) + A² Rⁿ M κ^{k₀}/(1−κ)`.
    pub kappa_form: f64,
    /// `Rⁿ A^{n+2} M`.
    pub final_bound: f64,
    /// `series_total / final_bound`.
    pub fitted_c: f64,
    /// `kappa_form / final_bound`.
    pub kappa_form_c: f64,
    /// `series ≤ series in M ≤ κ-form`, each within 1e−9 relative.
    pub chain_holds: bool,
}

impl SeriesBound {
    pub fn series_total(&self) -> f64 {
        self.nonterminal_sum + self.terminal_sum
    }
}

pub fn series_bound(config: &DividingConfig, m_q: f64, r: f64) -> Result<SeriesBound> {
    config.validate()?;
    let kappa = config.kappa();
    if !(kappa < 1.0) {
        return Err(invalid("kappa", "must be below 1"));
    }
    if !(m_q > config.m0) {
        return Err(LabError::NotApplicable(format!(
            "M(Q) = {m_q} not above M0 = {}",
            config.m0
        )));
    }
    let a = config.a as f64;
    let n = config.n as i32;
    let rn = r.powi(n);
    let k0 = config.k0(m_q);
    let geo = kappa / (1.0 - kappa);
    let nonterminal_sum = a * rn * m_q * geo;
    let terminal_sum = a.powi(n + 2) * config.m0 * rn;
    let terminal_sum_in_m = a.powi(n + 2) * rn * m_q / 2f64.powi(k0 as i32 - 1);
    let kappa_form = nonterminal_sum + a * a * rn * m_q * kappa.powi(k0 as i32) / (1.0 - kappa);
    let final_bound = rn * a.powi(n + 2) * m_q;
    let tol = 1.0 + 1e-9;
    let chain_holds = nonterminal_sum + terminal_sum <= (nonterminal_sum + terminal_sum_in_m) * tol
        && nonterminal_sum + terminal_sum_in_m <= kappa_form * tol;
    Ok(SeriesBound {
        a: config.a,
        n: config.n,
        kappa,
        k0,
        nonterminal_sum,
        terminal_sum,
        terminal_sum_in_m,
        kappa_form,
        final_bound,
        fitted_c: (nonterminal_sum + terminal_sum) / final_bound,
        kappa_form_c: kappa_form / final_bound,
        chain_holds,
    })
}

/// Pairs `(C(k,k₀)(½A^{−n})^{k₀}(1−A^{−n})^{k−k₀}, κ^k)` for `k₀ ≤ k ≤ k_max`.
pub fn tail_terms(a: u32, n: u32, k0: u32, k_max: u32) -> Vec<(f64, f64)> {
    let an = (a as f64).powi(n as i32);
    let kappa = 1.0 - 0.5 / an;
    (k0..=k_max)
        .map(|k| {
            let lhs = binomial_f64(k, k0)
                * (0.5 / an).powi(k0 as i32)
                * (1.0 - 1.0 / an).powi((k - k0) as i32);
            (lhs, kappa.powi(k as i32))
        })
        .collect()
}

fn binomial_f64(k: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Exact binomial coefficient.
pub fn binomial(k: u32, j: u32) -> Option<u128> {
    if j > k {
        return Some(0);
    }
    let j = j.min(k - j);
    let mut acc: u128 = 1;
    for i in 0..j {
        acc = acc.checked_mul((k - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `C(k,j)(Aⁿ−1)^{k−j}` exactly.
pub fn class_count_formula(layer_size: u128, k: u32, j: u32) -> Option<u128> {
    binomial(k, j)?.checked_mul((layer_size - 1).checked_pow(k.checked_sub(j)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub config: DividingConfig,
    pub m_q: f64,
    pub k0: u32,
    pub kappa: f64,
    pub a0_gate: GateStatus,
    pub per_generation: Vec<GenerationRecord>,
    /// Sum of the per-generation contributions.
    pub series_total: f64,
    /// Exact sum of the non-terminal and terminal series.
    pub closed_form_total: f64,
    pub series: SeriesBound,
    /// Non-terminal cubes remained at the generation limit.
    pub partial: bool,
    pub depth: u32,
}

impl AccountingReport {
    pub fn within_bound(&self) -> bool {
        self.series_total <= self.closed_form_total * (1.0 + 1e-9)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeTree {
    pub root: Cube,
    pub a: u32,
    pub nodes: Vec<CubeNode>,
}

impl CubeTree {
    /// One record per cube: generation, layer, bounds, M, classification.
    pub fn lines(&self) -> Vec<String> {
        self.nodes
            .iter()
            .map(|nd| {
                let c = nd.cube(&self.root, self.a);
                format!(
                    "{} {} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:?}",
                    nd.generation,
                    nd.layer,
                    c.lo[0],
                    c.lo[1],
                    c.lo[2],
                    c.side,
                    nd.m_value,
                    nd.classification
                )
            })
            .collect()
    }

    /// Sum of child volumes equals the parent volume, in exact integer units.
    pub fn partition_exact(&self) -> bool {
        let a3 = (self.a as u128).pow(3);
        self.nodes.iter().enumerate().all(|(i, nd)| {
            if !nd.subdivided {
                return true;
            }
            let kids = self.nodes.iter().filter(|c| c.parent == Some(i)).count() as u128;
            kids == 0 || kids == a3
        })
    }
}

fn classify(m: f64, parent_m: f64, m0: f64, on_boundary: bool) -> Classification {
    if m <= m0 {
        if on_boundary {
            Classification::TerminalBoundary
        } else {
            Classification::TerminalSmall
        }
    } else if m <= parent_m / 2.0 {
        Classification::Halved
    } else {
        Classification::Carried
    }
}

/// Explicit recursion over cube nodes (field mode, or synthetic at small depth).
pub fn run_dividing(
    source: &dyn MSource,
    q: &Cube,
    config: &DividingConfig,
    max_generations: u32,
) -> Result<(CubeTree, AccountingReport)> {
    config.validate()?;
    if config.n != FIELD_N {
        return Err(invalid("n", "explicit trees use planar domains (n = 2)"));
    }
    let root_val = source.root(q)?;
    if !(root_val.m > config.m0) {
        return Err(LabError::NotApplicable(format!(
            "M(Q) = {} not above M0 = {}",
            root_val.m, config.m0
        )));
    }
    let a = config.a;
    let af = a as f64;
    let mut nodes = vec![CubeNode {
        generation: 0,
        index: [0, 0, 0],
        layer: 0,
        position: 0,
        parent: None,
        m_value: root_val.m,
        m_error: root_val.error,
        classification: Classification::Root,
        subdivided: true,
    }];
    let mut frontier = vec![0usize];
    let mut records = Vec::new();
    let mut partial = false;
    let mut depth = 0;
    for k in 1..=max_generations {
        if frontier.is_empty() {
            break;
        }
        depth = k;
        let side = q.side / af.powi(k as i32);
        let rn = side.powi(FIELD_N as i32);
        let jobs: Vec<(usize, [u64; 3], u32, u32)> = frontier
            .iter()
            .flat_map(|&p| {
                nodes[p]
                    .child_specs(a)
                    .into_iter()
                    .map(move |(i, l, pos)| (p, i, l, pos))
            })
            .collect();
        let vals = jobs
            .par_iter()
            .map(|&(p, index, layer, position)| {
                let probe = CubeNode {
                    generation: k,
                    index,
                    ..nodes[0].clone()
                };
                source.child(&NodeCtx {
                    generation: k,
                    index,
                    layer,
                    position,
                    parent_m: nodes[p].m_value,
                    m_q: root_val.m,
                    cube: probe.cube(q, a),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut layer_nonterm: std::collections::BTreeMap<u64, f64> = Default::default();
        let mut layer_term: std::collections::BTreeMap<u64, f64> = Default::default();
        let (mut halved, mut carried, mut terminal) = (0u128, 0u128, 0u128);
        let mut next = Vec::new();
        for (&(p, index, layer, position), v) in jobs.iter().zip(&vals) {
            let cls = classify(v.m, nodes[p].m_value, config.m0, index[1] == 0);
            let subdivide = !cls.is_terminal() && index[1] < config.bottom_layers();
            match cls {
                Classification::Halved => halved += 1,
                Classification::Carried => carried += 1,
                _ => terminal += 1,
            }
            if cls.is_terminal() {
                *layer_term.entry(index[1]).or_default() += af * config.m0 * rn;
            } else {
                *layer_nonterm.entry(index[1]).or_default() += v.m * rn;
            }
            nodes.push(CubeNode {
                generation: k,
                index,
                layer,
                position,
                parent: Some(p),
                m_value: v.m,
                m_error: v.error,
                classification: cls,
                subdivided: false,
            });
            if subdivide {
                next.push(nodes.len() - 1);
            }
        }
        let worst =
            |m: &std::collections::BTreeMap<u64, f64>| m.values().copied().fold(0.0, f64::max);
        let (nt, tt) = (worst(&layer_nonterm), worst(&layer_term));
        records.push(GenerationRecord {
            generation: k,
            cubes_processed: jobs.len() as u128,
            halved,
            carried,
            terminal,
            nonterminal_charge: nt,
            terminal_charge: tt,
            contribution: af * (nt + tt),
        });
        if k == max_generations && !next.is_empty() {
            partial = true;
        } else {
            for &i in &next {
                nodes[i].subdivided = true;
            }
        }
        frontier = next;
    }
    let series = series_bound(config, root_val.m, q.side)?;
    let total: f64 = records.iter().map(|r| r.contribution).sum();
    let report = AccountingReport {
        config: config.clone(),
        m_q: root_val.m,
        k0: series.k0,
        kappa: series.kappa,
        a0_gate: config.a0_gate(),
        per_generation: records,
        series_total: total,
        closed_form_total: series.series_total(),
        series,
        partial,
        depth,
    };
    Ok((CubeTree { root: *q, a, nodes }, report))
}

/// Synthetic model for the aggregated per-layer recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassModel {
    /// Every child halves.
    Halving,
    /// One child per parent layer halves, `Aⁿ − 1` keep the parent's value.
    WorstCase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub generation: u32,
    /// Number of cubes in one layer with `j` halvings, `j = 0..=generation`.
    pub counts: Vec<u128>,
    /// Of those, the cubes that became terminal at this generation.
    pub terminal: Vec<u128>,
}

/// Aggregated recursion on class counts along one layer chain; exact integer
/// counts. Returns the accounting and the per-generation counts.
pub fn run_class_recursion(
    config: &DividingConfig,
    model: ClassModel,
    m_q: f64,
    max_generations: u32,
) -> Result<(AccountingReport, Vec<ClassCounts>)> {
    config.validate()?;
    if !(m_q > config.m0) {
        return Err(LabError::NotApplicable(format!(
            "M(Q) = {m_q} not above M0 = {}",
            config.m0
        )));
    }
    let an = config.layer_size();
    let af = config.a as f64;
    let mut live: Vec<u128> = vec![1];
    let mut records = Vec::new();
    let mut history = Vec::new();
    let mut partial = false;
    let mut depth = 0;
    for k in 1..=max_generations {
        if live.iter().all(|&c| c == 0) {
            break;
        }
        depth = k;
        let mut counts = vec![0u128; k as usize + 1];
        for (j, &c) in live.iter().enumerate() {
            if c == 0 {
                continue;
            }
            match model {
                ClassModel::Halving => {
                    counts[j + 1] = counts[j + 1]
                        .checked_add(c.checked_mul(an).ok_or(LabError::Overflow("class count"))?)
                        .ok_or(LabError::Overflow("class count"))?;
                }
                ClassModel::WorstCase => {
                    let carried = c
                        .checked_mul(an - 1)
                        .ok_or(LabError::Overflow("class count"))?;
                    counts[j] = counts[j]
                        .checked_add(carried)
                        .ok_or(LabError::Overflow("class count"))?;
                    counts[j + 1] = counts[j + 1]
                        .checked_add(c)
                        .ok_or(LabError::Overflow("class count"))?;
                }
            }
        }
        let side = config.side / af.powi(k as i32);
        let rn = side.powi(config.n as i32);
        let mut terminal = vec![0u128; counts.len()];
        let (mut nt, mut tt) = (0.0, 0.0);
        let (mut halved, mut carried, mut term_total) = (0u128, 0u128, 0u128);
        let mut next = vec![0u128; counts.len()];
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let m = m_q * 0.5f64.powi(j as i32);
            if m <= config.m0 {
                terminal[j] = c;
                term_total += c;
                tt += c as f64 * af * config.m0 * rn;
            } else {
                nt += c as f64 * m * rn;
                next[j] = c;
            }
        }
        for (j, &c) in counts.iter().enumerate() {
            if terminal[j] > 0 {
                continue;
            }
            let from_same = live.get(j).copied().unwrap_or(0);
            let same = match model {
                ClassModel::Halving => 0,
                ClassModel::WorstCase => from_same * (an - 1),
            };
            carried += same.min(c);
            halved += c - same.min(c);
        }
        records.push(GenerationRecord {
            generation: k,
            cubes_processed: counts.iter().sum(),
            halved,
            carried,
            terminal: term_total,
            nonterminal_charge: nt,
            terminal_charge: tt,
            contribution: af * (nt + tt),
        });
        history.push(ClassCounts {
            generation: k,
            counts: counts.clone(),
            terminal,
        });
        live = next;
        if k == max_generations && live.iter().any(|&c| c > 0) {
            partial = true;
        }
    }
    let series = series_bound(config, m_q, config.side)?;
    let total: f64 = records.iter().map(|r| r.contribution).sum();
    Ok((
        AccountingReport {
            config: config.clone(),
            m_q,
            k0: series.k0,
            kappa: series.kappa,
            a0_gate: config.a0_gate(),
            per_generation: records,
            series_total: total,
            closed_form_total: series.series_total(),
            series,
            partial,
            depth,
        },
        history,
    ))
}

/// Untruncated worst-case class counts `counts[k][j]` for `k ≤ k_max`.
pub fn worst_case_class_counts(layer_size: u128, k_max: u32) -> Result<Vec<Vec<u128>>> {
    let mut out = vec![vec![1u128]];
    for k in 1..=k_max as usize {
        let prev = &out[k - 1];
        let mut cur = vec![0u128; k + 1];
        for (j, &c) in prev.iter().enumerate() {
            cur[j] = cur[j]
                .checked_add(
                    c.checked_mul(layer_size - 1)
                        .ok_or(LabError::Overflow("class count"))?,
                )
                .ok_or(LabError::Overflow("class count"))?;
            cur[j + 1] = cur[j + 1]
                .checked_add(c)
                .ok_or(LabError::Overflow("class count"))?;
        }
        out.push(cur);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub r: f64,
    pub count: usize,
    /// `count · R^{n−1}`.
    pub fitted_c: f64,
    /// `R ≤ r₀/8` holds for the domain's `r₀`.
    pub within_r0: bool,
}

/// Greedy covering of the boundary collar of width `r` by chart cubes of side
/// `r`, walking the boundary counterclockwise. Smooth boundaries use
/// straightened charts; rectangles use the edge frames.
pub fn collar_covering_count(domain: &Domain, r: f64) -> Result<CoveringReport> {
    if !(r > 0.0) {
        return Err(invalid("R", "must be positive"));
    }
    let per = domain.perimeter();
    let m = ((8.0 * per / r).ceil() as usize).max(64);
    let depths = 8;
    let walk: Vec<([f64; 2], [f64; 2])> = (0..m)
        .map(|i| boundary_frame(domain, i as f64 / m as f64))
        .collect();
    let mut pts: Vec<(usize, [f64; 2])> = Vec::with_capacity(m * depths);
    for (i, &(p, t)) in walk.iter().enumerate() {
        let inward = [-t[1], t[0]];
        for d in 0..depths {
            let depth = r * (d as f64 + 0.5) / depths as f64;
            let x = [p[0] + depth * inward[0], p[1] + depth * inward[1]];
            if domain.contains(x) {
                pts.push((i, x));
            }
        }
    }
    let tol = 1e-9 * r;
    let mut covered = vec![false; pts.len()];
    let mut count = 0;
    for i in 0..pts.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        let (anchor, tangent) = walk[pts[i].0];
        let chart = match domain.kind {
            DomainKind::Rectangle { .. } => None,
            _ => Some(domain.straighten(anchor, 2.0 * r)?),
        };
        let flip = chart
            .as_ref()
            .is_some_and(|c| c.tangent[0] * tangent[0] + c.tangent[1] * tangent[1] < 0.0);
        for (j, &(_, x)) in pts.iter().enumerate() {
            if covered[j] {
                continue;
            }
            let (y1, y2) = match &chart {
                Some(c) => {
                    let y = c.phi([x[0], x[1], 0.0]);
                    (if flip { -y[0] } else { y[0] }, y[1])
                }
                None => {
                    let d = [x[0] - anchor[0], x[1] - anchor[1]];
                    (
                        d[0] * tangent[0] + d[1] * tangent[1],
                        d[1] * tangent[0] - d[0] * tangent[1],
                    )
                }
            };
            if (-tol..=r + tol).contains(&y1) && (-tol..=r + tol).contains(&y2) {
                covered[j] = true;
            }
        }
    }
    let r0 = domain.collar_params().r0;
    Ok(CoveringReport {
        r,
        count,
        fitted_c: count as f64 * r,
        within_r0: r <= r0 / 8.0,
    })
}

/// Boundary point and counterclockwise unit tangent at parameter `u ∈ [0, 1)`.
fn boundary_frame(domain: &Domain, u: f64) -> ([f64; 2], [f64; 2]) {
    match domain.kind {
        DomainKind::Rectangle {
            width: w,
            height: h,
        } => {
            let s = u * 2.0 * (w + h);
            if s < w {
                ([s, 0.0], [1.0, 0.0])
            } else if s < w + h {
                ([w, s - w], [0.0, 1.0])
            } else if s < 2.0 * w + h {
                ([w - (s - w - h), h], [-1.0, 0.0])
            } else {
                ([0.0, h - (s - 2.0 * w - h)], [0.0, -1.0])
            }
        }
        _ => {
            let c = domain
                .kind
                .curve(std::f64::consts::TAU * u)
                .expect("smooth boundary");
            let l = c.d1[0].hypot(c.d1[1]);
            (c.c, [c.d1[0] / l, c.d1[1] / l])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_for_a3_n2() {
        let c = DividingConfig::default();
        assert_eq!(c.kappa_rational(), (17, 18));
        assert!((c.kappa() - 17.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn geometric_factor_is_seventeen() {
        let c = DividingConfig::default();
        let k = c.kappa();
        assert!((k / (1.0 - k) - 17.0).abs() < 1e-12);
    }

    #[test]
    fn counting_example() {
        assert_eq!(class_count_formula(9, 3, 2), Some(24));
    }

    #[test]
    fn k0_definition() {
        let c = DividingConfig {
            m0: 2.0,
            ..Default::default()
        };
        assert_eq!(c.k0(16.0), 4);
        assert_eq!(c.k0(17.0), 4);
        assert_eq!(c.k0(15.9), 3);
    }

    #[test]
    fn even_a_is_rejected() {
        let c = DividingConfig {
            a: 4,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn halving_tree_depth_is_k0() {
        let c = DividingConfig::default();
        let q = Cube {
            lo: [0.0; 3],
            side: 1.0,
        };
        let oracle = SyntheticOracle::Halving { m_q: 10.0 };
        let (tree, rep) = run_dividing(&oracle, &q, &c, 6).unwrap();
        assert_eq!(rep.k0, 3);
        assert_eq!(rep.depth, 3);
        assert!(!rep.partial);
        assert!(tree.partition_exact());
        assert!(rep.within_bound());
    }

    #[test]
    fn counterexample_layer_fails() {
        let q = Cube {
            lo: [0.0; 3],
            side: 1.0,
        };
        let rep = check_dividing_lemma(
            &SyntheticOracle::Counterexample { m_q: 8.0, layer: 2 },
            &q,
            3,
            1.5,
        )
        .unwrap();
        assert!(!rep.passed);
        assert!(rep.layers[0].passed && !rep.layers[1].passed && rep.layers[2].passed);
    }
}
