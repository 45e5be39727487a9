//! Check records, the fixed registry of checkers, and report files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub struct RegistryEntry {
    pub id: &'static str,
    pub command: &'static str,
    pub statement: &'static str,
}

/// Every checker the tool runs, each listed once.
pub const REGISTRY: &[RegistryEntry] = &[
    RegistryEntry {
        id: "frequency_monotonicity",
        command: "frequency",
        statement: "N(z0, r) is nondecreasing in r on admissible balls",
    },
    RegistryEntry {
        id: "star_shaped_admissibility",
        command: "frequency",
        statement: "dist(z0, boundary) >= C0 r^2 implies the clipped ball is star-shaped",
    },
    RegistryEntry {
        id: "doubling_inequalities",
        command: "frequency",
        statement: "H grows between the exponents N(r1) + n + 1 and N(r2) + n + 1",
    },
    RegistryEntry {
        id: "changing_center",
        command: "frequency",
        statement: "N(z1, rho) <= (1 + Ca/r) N(z0, r) + Ca/r",
    },
    RegistryEntry {
        id: "frequency_doubling_bridge",
        command: "doubling",
        statement: "M is bounded above and below by N at comparable radii",
    },
    RegistryEntry {
        id: "sup_l2_bound",
        command: "doubling",
        statement:
            "sup over B_theta_r is bounded by ((1 - theta) r)^(-(n+1)/2) times the L2 norm on B_r",
    },
    RegistryEntry {
        id: "doubling_almost_monotonicity",
        command: "doubling",
        statement: "M(r) <= C M(r0) + C for r < r0",
    },
    RegistryEntry {
        id: "global_doubling_bound",
        command: "doubling",
        statement: "M(z, r) <= C (1 + sqrt(lambda)) for r <= r0",
    },
    RegistryEntry {
        id: "vanishing_order",
        command: "doubling",
        statement: "vanishing order at a point is at most C (sqrt(lambda) + 1)",
    },
    RegistryEntry {
        id: "interior_nodal_bound",
        command: "nodal",
        statement: "nodal length in the r-interior is at most (C/r)(1 + sqrt(lambda))",
    },
    RegistryEntry {
        id: "interior_cube_nodal",
        command: "nodal",
        statement: "nodal measure in an interior cube is at most C (M + 1) r^n",
    },
    RegistryEntry {
        id: "boundary_cube_nodal",
        command: "nodal",
        statement: "nodal measure in a small boundary cube is at most C M r^n",
    },
    RegistryEntry {
        id: "smallness_propagation",
        command: "nodal",
        statement: "sup over the half cube is at most C eps^alpha for face data eps",
    },
    RegistryEntry {
        id: "dividing_lemma",
        command: "divide",
        statement: "each layer of a subdivision holds a subcube with M <= M(Q)/2",
    },
    RegistryEntry {
        id: "dividing_accounting",
        command: "divide",
        statement: "recursive charges stay below the closed-form series",
    },
    RegistryEntry {
        id: "nodal_scaling_sweep",
        command: "sweep",
        statement: "total nodal length over (1 + log(|grad V| + 1))(sqrt(lambda) + 1) is bounded",
    },
];

pub fn registry_entry(id: &str) -> Option<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.id == id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A fitted constant with no pass/fail threshold.
    Fitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub lemma: String,
    pub subject: String,
    pub inputs: serde_json::Value,
    pub fitted_constant: Option<f64>,
    pub error_bar: Option<f64>,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub mesh_sizes: Vec<f64>,
    pub quadrature: nodalab::quad::QuadConfig,
    pub mesh_quadrature: nodalab::quad::QuadConfig,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub manifest: Manifest,
    pub records: Vec<CheckRecord>,
    pub summary: serde_json::Value,
}

impl StudyReport {
    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.records
            .iter()
            .filter(|r| r.verdict == Verdict::Fail)
            .collect()
    }
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Single writer for one command's stage directory. Records are appended to
/// `records.jsonl` as they arrive.
pub struct ReportWriter {
    dir: PathBuf,
    log: File,
    records: Vec<CheckRecord>,
}

impl ReportWriter {
    pub fn create(dir: &Path) -> std::io::Result<ReportWriter> {
        fs::create_dir_all(dir)?;
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(dir.join(RECORDS_FILE))?;
        Ok(ReportWriter {
            dir: dir.to_path_buf(),
            log,
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn push(&mut self, rec: CheckRecord) -> std::io::Result<()> {
        assert!(
            registry_entry(&rec.lemma).is_some(),
            "unregistered checker id {}",
            rec.lemma
        );
        writeln!(self.log, "{}", serde_json::to_string(&rec)?)?;
        self.records.push(rec);
        Ok(())
    }

    pub fn finish(
        self,
        manifest: Manifest,
        summary: serde_json::Value,
    ) -> std::io::Result<StudyReport> {
        let report = StudyReport {
            manifest,
            records: self.records,
            summary,
        };
        fs::write(
            self.dir.join(REPORT_FILE),
            serde_json::to_string_pretty(&report)?,
        )?;
        Ok(report)
    }
}

/// Writes rows with a header; every float is printed in shortest round-trip form.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Stage directories written by the study commands.
pub const STAGES: &[&str] = &["solve", "frequency", "doubling", "nodal", "divide", "sweep"];

#[derive(Debug)]
pub enum ConsolidateError {
    /// No upstream stage artifacts were found.
    Missing(String),
    Io(std::io::Error),
    Corrupt(String),
}

impl From<std::io::Error> for ConsolidateError {
    fn from(e: std::io::Error) -> Self {
        ConsolidateError::Io(e)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegistryStatus {
    pub id: String,
    pub command: String,
    pub statement: String,
    pub records: usize,
    pub failures: usize,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Consolidated {
    pub stages: BTreeMap<String, Manifest>,
    pub registry: Vec<RegistryStatus>,
    pub records: Vec<CheckRecord>,
    pub failures: usize,
}

fn read_records(path: &Path) -> Result<Vec<CheckRecord>, ConsolidateError> {
    let f = File::open(path)?;
    BufReader::new(f)
        .lines()
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l)
                .map_err(|e| ConsolidateError::Corrupt(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Merges all stage reports under `dir` into `report/`.
pub fn consolidate(dir: &Path) -> Result<Consolidated, ConsolidateError> {
    let mut stages = BTreeMap::new();
    let mut records = Vec::new();
    for &stage in STAGES {
        let sdir = dir.join(stage);
        if !sdir.is_dir() {
            continue;
        }
        let rep = sdir.join(REPORT_FILE);
        if !rep.is_file() {
            return Err(ConsolidateError::Missing(format!(
                "{} exists but {} is missing; rerun `nodalab {stage}`",
                sdir.display(),
                rep.display()
            )));
        }
        let text = fs::read_to_string(&rep)?;
        let report: StudyReport = serde_json::from_str(&text)
            .map_err(|e| ConsolidateError::Corrupt(format!("{}: {e}", rep.display())))?;
        let logged = read_records(&sdir.join(RECORDS_FILE))?;
        if logged != report.records {
            return Err(ConsolidateError::Corrupt(format!(
                "{} disagrees with {}",
                sdir.join(RECORDS_FILE).display(),
                rep.display()
            )));
        }
        stages.insert(stage.to_string(), report.manifest);
        records.extend(report.records);
    }
    if stages.is_empty() {
        return Err(ConsolidateError::Missing(format!(
            "no stage reports under {}; run one of: {}",
            dir.display(),
            STAGES.join(", ")
        )));
    }
    let registry: Vec<RegistryStatus> = REGISTRY
        .iter()
        .map(|e| {
            let mine: Vec<&CheckRecord> = records.iter().filter(|r| r.lemma == e.id).collect();
            let failures = mine.iter().filter(|r| r.verdict == Verdict::Fail).count();
            let status = if mine.is_empty() {
                "not_run"
            } else if failures > 0 {
                "fail"
            } else if mine.iter().any(|r| r.verdict == Verdict::Pass) {
                "pass"
            } else {
                "fitted"
            };
            RegistryStatus {
                id: e.id.to_string(),
                command: e.command.to_string(),
                statement: e.statement.to_string(),
                records: mine.len(),
                failures,
                status: status.to_string(),
            }
        })
        .collect();
    let failures = records
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .count();
    let out = Consolidated {
        stages,
        registry,
        records,
        failures,
    };
    let rdir = dir.join("report");
    fs::create_dir_all(&rdir)?;
    fs::write(
        rdir.join("report.json"),
        serde_json::to_string_pretty(&out).map_err(std::io::Error::from)?,
    )?;
    #[derive(Serialize)]
    struct Row<'a> {
        lemma: &'a str,
        subject: &'a str,
        verdict: Verdict,
        fitted_constant: Option<f64>,
        error_bar: Option<f64>,
        detail: &'a str,
    }
    let rows: Vec<Row> = out
        .records
        .iter()
        .map(|r| Row {
            lemma: &r.lemma,
            subject: &r.subject,
            verdict: r.verdict,
            fitted_constant: r.fitted_constant,
            error_bar: r.error_bar,
            detail: &r.detail,
        })
        .collect();
    write_csv(&rdir.join("records.csv"), &rows)?;
    write_csv(&rdir.join("registry.csv"), &out.registry)?;
    Ok(out)
}
