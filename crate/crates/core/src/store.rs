//! Run configuration, per-unit JSON records and the summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{DependencyBundle, DependencySummary};
use crate::engine::{PipelineOptions, RunReport, SliceRecord};
use crate::frontend::TargetUnit;
use crate::llm::{LlmConfig, TranscriptEntry};
use crate::validation::TestSuite;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: unsupported schema_version {found}")]
    Schema { path: PathBuf, found: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    NoElimination,
    NoIteration,
    NoDependencies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub iteration_limit: u32,
    pub min_lines: u32,
    pub min_complexity: u32,
    pub ablation: Ablation,
    pub workers: usize,
    /// Temperature, token limit and mode live here.
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iteration_limit: 5,
            min_lines: 50,
            min_complexity: 10,
            ablation: Ablation::None,
            workers: 1,
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.iteration_limit == 0 {
            return Err(StoreError::Config("iteration_limit must be at least 1".into()));
        }
        if self.llm.token_limit == 0 {
            return Err(StoreError::Config("token_limit must be positive".into()));
        }
        if self.workers == 0 {
            return Err(StoreError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            iteration_limit: match self.ablation {
                Ablation::NoIteration => 1,
                _ => self.iteration_limit,
            },
            eliminate: self.ablation != Ablation::NoElimination,
        }
    }

    pub fn use_dependencies(&self) -> bool {
        self.ablation != Ablation::NoDependencies
    }
}

/// Everything known about one unit: written as a skeleton by analysis and
/// completed by generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub schema_version: u32,
    pub project: String,
    pub project_root: PathBuf,
    pub unit: TargetUnit,
    #[serde(default)]
    pub basic_slice: Option<String>,
    #[serde(default)]
    pub dependencies: Option<DependencyBundle>,
    #[serde(default)]
    pub summaries: Vec<DependencySummary>,
    #[serde(default)]
    pub config: Option<RunConfig>,
    #[serde(default)]
    pub slices: Vec<SliceRecord>,
    /// Every exchange of the run, enough to replay it offline.
    #[serde(default)]
    pub transcript: Vec<TranscriptEntry>,
    #[serde(default)]
    pub suite: Option<TestSuite>,
    #[serde(default)]
    pub report: Option<RunReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TargetRecord {
    pub fn skeleton(project_root: &Path, unit: TargetUnit) -> Self {
        TargetRecord {
            schema_version: SCHEMA_VERSION,
            project: project_name(project_root),
            project_root: project_root.to_path_buf(),
            unit,
            basic_slice: None,
            dependencies: None,
            summaries: Vec::new(),
            config: None,
            slices: Vec::new(),
            transcript: Vec::new(),
            suite: None,
            report: None,
            warnings: Vec::new(),
        }
    }

    /// Sanitized `<module path>__<qualified name>.json`.
    pub fn file_name(&self) -> String {
        let module = self.unit.module_path.with_extension("");
        let raw = format!("{}__{}", module.display(), self.unit.qualified_name);
        let clean: String = raw
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect();
        format!("{clean}.json")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, StoreError> {
        let r: TargetRecord = serde_json::from_str(text).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(StoreError::Schema {
                path: path.to_path_buf(),
                found: r.schema_version,
            });
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    /// Writes into `dir` under [`TargetRecord::file_name`].
    pub fn save(&self, dir: &Path) -> Result<PathBuf, StoreError> {
        let path = dir.join(self.file_name());
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, self.to_json()))
            .map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(path)
    }

    /// Absolute path of the file holding the unit.
    pub fn original_file(&self) -> PathBuf {
        self.project_root.join(&self.unit.module_path)
    }
}

pub fn project_name(root: &Path) -> String {
    root.canonicalize()
        .unwrap_or_else(|_| root.to_path_buf())
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "project".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub project: String,
    pub units: usize,
    /// Mean per-unit line coverage, in [0, 1].
    pub line_coverage: f64,
    /// Mean over units whose suite is non-empty; None if there are none.
    pub pass_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    /// Unweighted mean of the project rows.
    pub average: Option<ReportRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups records by project. Records without a report are skipped.
pub fn build_report(records: &[TargetRecord]) -> ReportTable {
    let mut by_project: BTreeMap<&str, Vec<&RunReport>> = BTreeMap::new();
    for r in records {
        if let Some(rep) = &r.report {
            by_project.entry(&r.project).or_default().push(rep);
        }
    }
    let rows: Vec<ReportRow> = by_project
        .into_iter()
        .map(|(project, reps)| ReportRow {
            project: project.to_string(),
            units: reps.len(),
            line_coverage: mean(reps.iter().map(|r| r.line_coverage)).unwrap_or(0.0),
            pass_rate: mean(reps.iter().filter_map(|r| r.pass_rate)),
        })
        .collect();
    let average = (!rows.is_empty()).then(|| ReportRow {
        project: "Average".into(),
        units: rows.iter().map(|r| r.units).sum(),
        line_coverage: mean(rows.iter().map(|r| r.line_coverage)).unwrap_or(0.0),
        pass_rate: mean(rows.iter().filter_map(|r| r.pass_rate)),
    });
    ReportTable { rows, average }
}

fn percent(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.2}%", v * 100.0))
}

impl ReportTable {
    pub fn to_text(&self) -> String {
        let mut rows: Vec<[String; 4]> = vec![[
            "Project".into(),
            "Units".into(),
            "Line Coverage".into(),
            "Pass Rate".into(),
        ]];
        for r in self.rows.iter().chain(&self.average) {
            rows.push([
                r.project.clone(),
                r.units.to_string(),
                percent(Some(r.line_coverage)),
                percent(r.pass_rate),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, r) in rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            if n == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("-|-"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tables serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn record(project: &str, covered: usize, total: usize, pass: Option<f64>) -> TargetRecord {
        let unit = TargetUnit::from_source("f", "pkg/m.py", 1, "def f():\n    return 1\n").unwrap();
        let mut r = TargetRecord::skeleton(Path::new(project), unit);
        r.project = project.into();
        r.report = Some(RunReport {
            unit: "f".into(),
            sessions: Vec::new(),
            eliminations: 0,
            sends: 0,
            validations: 1,
            executable_lines: total,
            covered_lines: (1..=covered as u32).collect(),
            uncovered_lines: BTreeSet::new(),
            line_coverage: covered as f64 / total as f64,
            pass_rate: pass,
            flag: None,
            failure: None,
        });
        r
    }

    #[test]
    fn quarter_coverage_row() {
        let t = build_report(&[record("p", 10, 40, Some(1.0))]);
        let text = t.to_text();
        assert!(text.lines().nth(2).unwrap().contains("25.00%"));
        assert!(text.contains("100.00%"));
    }

    #[test]
    fn no_records_gives_header_only() {
        let t = build_report(&[]);
        assert_eq!(t.to_text().lines().count(), 2);
        assert!(t.average.is_none());
    }

    #[test]
    fn averages_by_project_then_overall() {
        let t = build_report(&[
            record("a", 1, 2, Some(1.0)),
            record("a", 1, 4, None),
            record("b", 1, 1, Some(0.5)),
        ]);
        assert_eq!(t.rows.len(), 2);
        assert!((t.rows[0].line_coverage - 0.375).abs() < 1e-12);
        assert_eq!(t.rows[0].pass_rate, Some(1.0));
        let avg = t.average.unwrap();
        assert!((avg.line_coverage - 0.6875).abs() < 1e-12);
        assert_eq!(avg.pass_rate, Some(0.75));
        assert_eq!(avg.units, 3);
    }

    #[test]
    fn record_round_trip_is_byte_stable() {
        let r = record("p", 3, 7, Some(2.0 / 3.0));
        let a = r.to_json();
        let b = TargetRecord::from_json(&a, Path::new("r.json")).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let json = record("p", 1, 1, None).to_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            TargetRecord::from_json(&json, Path::new("r.json")),
            Err(StoreError::Schema { found: 9, .. })
        ));
    }

    #[test]
    fn file_names_are_sanitized() {
        let unit = TargetUnit::from_source("A.m", "pkg/sub mod.py", 1, "def m(self):\n    pass\n").unwrap();
        let r = TargetRecord::skeleton(Path::new("p"), unit);
        assert_eq!(r.file_name(), "pkg_sub_mod__A.m.json");
    }

    #[test]
    fn ablations_map_to_pipeline_options() {
        let mut c = RunConfig::default();
        assert_eq!(c.pipeline_options(), PipelineOptions { iteration_limit: 5, eliminate: true });
        c.ablation = Ablation::NoIteration;
        assert_eq!(c.pipeline_options().iteration_limit, 1);
        c.ablation = Ablation::NoElimination;
        assert!(!c.pipeline_options().eliminate);
        c.ablation = Ablation::NoDependencies;
        assert!(!c.use_dependencies());
        c.iteration_limit = 0;
        assert!(c.validate().is_err());
    }
}
