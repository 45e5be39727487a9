//! Run configuration: TOML text, dotted-path overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use nodalab::dividing::{ClassModel, DividingConfig};
use nodalab::field::{ClosedForm, PotentialFamily};
use nodalab::geometry::DomainKind;
use nodalab::lifted::SLAB_HALFWIDTH;
use serde::{Deserialize, Serialize};

/// Configuration error tied to a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.path, self.reason)
    }
}

fn err(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the Monte-Carlo oracles.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mesh_h: f64,
    /// Computed eigen-indices (1-based) of `−Δ + W` on `domain`.
    pub modes: Vec<usize>,
    pub domain: DomainKind,
    pub potential: PotentialFamily,
    pub closed_forms: Vec<ClosedForm>,
    pub radii: RadiusGrids,
    pub dividing: DivideConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusGrids {
    /// Spacing of the center lattice over the bounding box.
    pub center_spacing: f64,
    pub frequency: Vec<f64>,
    pub doubling: Vec<f64>,
    /// Distances `r` defining `Ω_r` in the interior nodal study.
    pub interior: Vec<f64>,
    /// Radii for vanishing-order fits; must span a decade.
    pub vanishing: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivideMode {
    Synthetic,
    Field,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivideConfig {
    pub mode: DivideMode,
    pub model: ClassModel,
    /// Root doubling indices for synthetic runs.
    pub m_values: Vec<f64>,
    pub max_generations: u32,
    /// Depth of the explicit cube tree written to `tree.txt`.
    pub tree_generations: u32,
    /// Side of the boundary cube in field mode.
    pub cube_side: f64,
    /// Tangential center of the boundary cube in field mode.
    pub cube_x: f64,
    /// Layer forced to keep `M(Q)` in a counterexample run.
    pub counterexample_layer: Option<u32>,
    pub field: ClosedForm,
    pub params: DividingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
    pub freq: f64,
    pub modes: Vec<usize>,
    pub mesh_h: f64,
    /// Collar scale knob `R₀`.
    pub r0_knob: f64,
    pub mc_samples: usize,
    pub mc_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("nodalab-out"),
            mesh_h: 1.0 / 32.0,
            modes: vec![1, 2, 3],
            domain: DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            potential: PotentialFamily::Zero,
            closed_forms: vec![
                ClosedForm::SquareMode { k: 1, m: 1 },
                ClosedForm::DiskMode {
                    radial: 1,
                    angular: 0,
                },
            ],
            radii: RadiusGrids::default(),
            dividing: DivideConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Default for RadiusGrids {
    fn default() -> Self {
        RadiusGrids {
            center_spacing: 0.25,
            frequency: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            doubling: vec![0.02, 0.04, 0.08],
            interior: vec![0.05, 0.1],
            vanishing: vec![0.01, 0.02, 0.04, 0.07, 0.1],
        }
    }
}

impl Default for DivideConfig {
    fn default() -> Self {
        DivideConfig {
            mode: DivideMode::Synthetic,
            model: ClassModel::Halving,
            m_values: vec![4.0, 16.0, 64.0, 256.0],
            max_generations: 20,
            tree_generations: 3,
            cube_side: 0.019,
            cube_x: 0.5,
            counterexample_layer: None,
            field: ClosedForm::SquareMode { k: 2, m: 2 },
            params: DividingConfig::default(),
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            amplitudes: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            freq: 3.0,
            modes: vec![2, 3, 4, 5, 6],
            mesh_h: 1.0 / 64.0,
            r0_knob: 1.0,
            mc_samples: 4000,
            mc_radius: 0.15,
        }
    }
}

/// Replaces the value at a dotted path, creating intermediate tables.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err(path, "empty path segment"));
    }
    let mut table = root;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| err(parts[..=i].join("."), "is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(text.to_string())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

impl RunConfig {
    /// Loads a config from TOML text and applies `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| err("<file>", e.to_string()))?;
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| err(ov.clone(), "override must have the form key=value"))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig =
            serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
                let path = e.path().to_string();
                err(
                    if path == "." {
                        "<root>".to_string()
                    } else {
                        path
                    },
                    e.inner().to_string(),
                )
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| err("<file>", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        RunConfig::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.mesh_h > 0.0 && self.mesh_h <= 0.5) {
            return Err(err("mesh_h", "must lie in (0, 0.5]"));
        }
        if self.modes.contains(&0) {
            return Err(err("modes", "indices start at 1"));
        }
        nodalab::geometry::Domain::build(self.domain.clone(), 64)
            .map_err(|e| err("domain", e.to_string()))?;
        for (i, f) in self.closed_forms.iter().enumerate() {
            f.validate()
                .map_err(|e| err(format!("closed_forms[{i}]"), e.to_string()))?;
        }
        if let PotentialFamily::SinSin { amplitude, freq } = self.potential {
            if !(amplitude.is_finite() && freq.is_finite()) {
                return Err(err("potential", "amplitude and freq must be finite"));
            }
        }
        let r = &self.radii;
        if !(r.center_spacing > 0.0) {
            return Err(err("radii.center_spacing", "must be positive"));
        }
        for (name, grid) in [
            ("frequency", &r.frequency),
            ("doubling", &r.doubling),
            ("interior", &r.interior),
            ("vanishing", &r.vanishing),
        ] {
            check_grid(&format!("radii.{name}"), grid)?;
        }
        let d = &self.dividing;
        d.params
            .validate()
            .map_err(|e| err("dividing.params", e.to_string()))?;
        d.field
            .validate()
            .map_err(|e| err("dividing.field", e.to_string()))?;
        if let Some(i) = d.m_values.iter().position(|&m| !(m > d.params.m0)) {
            return Err(err(
                format!("dividing.m_values[{i}]"),
                "must exceed dividing.params.m0",
            ));
        }
        if d.max_generations == 0 {
            return Err(err("dividing.max_generations", "must be positive"));
        }
        if !(d.cube_side > 0.0 && d.cube_side < 0.5) {
            return Err(err("dividing.cube_side", "must lie in (0, 0.5)"));
        }
        if let Some(l) = d.counterexample_layer {
            if l == 0 || l > d.params.a {
                return Err(err("dividing.counterexample_layer", "must lie in 1..=A"));
            }
        }
        let s = &self.sweep;
        if s.modes.is_empty() || s.modes.contains(&0) {
            return Err(err("sweep.modes", "must be nonempty with indices from 1"));
        }
        if s.amplitudes.is_empty() || s.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(err("sweep.amplitudes", "must be nonempty and finite"));
        }
        if !(s.mesh_h > 0.0 && s.mesh_h <= 0.5) {
            return Err(err("sweep.mesh_h", "must lie in (0, 0.5]"));
        }
        if !(s.r0_knob > 0.0) {
            return Err(err("sweep.r0_knob", "must be positive"));
        }
        if s.mc_samples == 0 {
            return Err(err("sweep.mc_samples", "must be positive"));
        }
        if !(s.mc_radius > 0.0 && s.mc_radius < 1.0) {
            return Err(err("sweep.mc_radius", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn check_grid(path: &str, grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(err(path, "must be nonempty"));
    }
    if let Some(i) = grid
        .iter()
        .position(|&r| !(r > 0.0 && r < SLAB_HALFWIDTH / 2.0))
    {
        return Err(err(format!("{path}[{i}]"), "radii must lie in (0, 1)"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(err(path, "must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = RunConfig {
            mesh_h: 0.1 + 0.2,
            ..RunConfig::default()
        };
        cfg.sweep.amplitudes = vec![0.0, 1.0 / 3.0, std::f64::consts::PI];
        cfg.dividing.counterexample_layer = Some(2);
        let back = RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.mesh_h.to_bits(), cfg.mesh_h.to_bits());
        assert_eq!(back.sweep.amplitudes[1].to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::from_toml("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg =
            RunConfig::from_toml("", &["dividing.params.a=5".into(), "seed=9".into()]).unwrap();
        assert_eq!(cfg.dividing.params.a, 5);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn type_errors_name_the_field() {
        let e = RunConfig::from_toml("[sweep]\nfreq = \"high\"\n", &[]).unwrap_err();
        assert_eq!(e.path, "sweep.freq");
    }

    #[test]
    fn validation_errors_name_the_field() {
        let e = RunConfig::from_toml("[radii]\nfrequency = [0.2, 0.1]\n", &[]).unwrap_err();
        assert_eq!(e.path, "radii.frequency");
        let e = RunConfig::from_toml("[dividing.params]\na = 4\n", &[]).unwrap_err();
        assert_eq!(e.path, "dividing.params");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = RunConfig::from_toml("mesh = 0.1\n", &[]).unwrap_err();
        assert!(e.reason.contains("unknown field"));
    }
}
