//! Runs the accumulated suite against the original file through an
//! external shim process and reduces its report to unit-scoped coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{self, NodeKind};
use crate::frontend::{ComplexityOptions, TargetUnit};
use crate::pyast;

pub const SHIM_ENV: &str = "COVELIM_SHIM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Skip,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub source: String,
    /// None until a validation run has reported on this test.
    pub status: Option<TestStatus>,
    pub diagnostics: Vec<String>,
}

/// Accumulated tests of one unit, in generation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub tests: Vec<TestCase>,
}

impl TestSuite {
    /// Appends `source` under the next `test_NNN` id and returns the id.
    pub fn push(&mut self, source: String) -> String {
        let id = format!("test_{:03}", self.tests.len() + 1);
        self.tests.push(TestCase {
            id: id.clone(),
            source,
            status: None,
            diagnostics: Vec::new(),
        });
        id
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// Copies statuses and diagnostics from `outcome`. Tests the shim did
    /// not mention become `NotRun`.
    pub fn apply(&mut self, outcome: &ValidationOutcome) {
        for t in &mut self.tests {
            t.status = Some(outcome.per_test.get(&t.id).copied().unwrap_or(TestStatus::NotRun));
            t.diagnostics = outcome
                .errors
                .iter()
                .filter(|e| e.id == t.id)
                .map(|e| e.message.clone())
                .collect();
        }
    }

    /// All tests as one Python module, each under a banner comment.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.tests {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("# {}\n{}", t.id, t.source));
            if !t.source.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimTest {
    pub id: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimRequest {
    pub target_file: PathBuf,
    pub unit_span: [u32; 2],
    pub tests: Vec<ShimTest>,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestError {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimResponse {
    pub covered_lines: Vec<u32>,
    pub per_test: BTreeMap<String, TestStatus>,
    pub errors: Vec<TestError>,
    /// Statement lines of the file per the coverage tool; optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executable_lines: Option<Vec<u32>>,
}

/// `covered ∪ uncovered` is the unit's executable lines; the two are
/// disjoint and inside the unit span.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub covered: BTreeSet<u32>,
    pub uncovered: BTreeSet<u32>,
    pub per_test: BTreeMap<String, TestStatus>,
    pub errors: Vec<TestError>,
}

impl ValidationOutcome {
    /// Runtime error texts, prefixed with their test id.
    pub fn error_texts(&self) -> Vec<String> {
        self.errors
            .iter()
            .map(|e| format!("{}: {}", e.id, e.message))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("validation shim unavailable: {0}")]
    ShimUnavailable(String),
    #[error("validation shim output is malformed: {0}")]
    Malformed(String),
    #[error("unit {0} does not parse")]
    Unit(String),
}

pub trait Validator {
    /// One execution of the whole suite against `original_file`.
    fn validate(
        &mut self,
        tests: &TestSuite,
        original_file: &Path,
        unit: &TargetUnit,
    ) -> Result<ValidationOutcome, ValidationError>;
}

/// Fraction of tests that passed, `None` for an empty suite. Tests never
/// run count against the rate.
pub fn pass_rate(outcome: &ValidationOutcome) -> Option<f64> {
    if outcome.per_test.is_empty() {
        return None;
    }
    let passed = outcome
        .per_test
        .values()
        .filter(|s| **s == TestStatus::Pass)
        .count();
    Some(passed as f64 / outcome.per_test.len() as f64)
}

/// Statement lines of `unit` from its CFG: the `def` line plus the first
/// line of every statement node, docstring excluded.
pub fn static_executable_lines(unit: &TargetUnit) -> Result<BTreeSet<u32>, ValidationError> {
    let unit_err = |_| ValidationError::Unit(unit.qualified_name.clone());
    let parsed = unit.parse().map_err(unit_err)?;
    let graph = cfg::build_from_parsed(&parsed, ComplexityOptions::default())
        .map_err(|_| ValidationError::Unit(unit.qualified_name.clone()))?;
    let mut lines: BTreeSet<u32> = graph
        .nodes
        .iter()
        .filter(|n| {
            matches!(
                n.kind,
                NodeKind::SimpleStmt | NodeKind::BranchCond | NodeKind::LoopHeader | NodeKind::HandlerEntry
            )
        })
        .filter_map(|n| n.lines.first().copied())
        .collect();
    lines.insert(parsed.file_line(pyast::start(parsed.def_stmt())));
    if let Some(first) = parsed.function().body.first() {
        if pyast::is_docstring(first) {
            lines.remove(&parsed.file_line(pyast::start(first)));
        }
    }
    Ok(lines)
}

/// Reduces a raw shim response to a unit-scoped outcome. `executable_lines`
/// from the shim wins over `fallback` when present.
pub fn outcome_from_response(
    response: ShimResponse,
    unit: &TargetUnit,
    fallback: &BTreeSet<u32>,
    tests: &TestSuite,
) -> ValidationOutcome {
    let in_span = |l: &u32| unit.span.contains(*l);
    let universe: BTreeSet<u32> = match &response.executable_lines {
        Some(v) => v.iter().copied().filter(in_span).collect(),
        None => fallback.clone(),
    };
    let covered: BTreeSet<u32> = response
        .covered_lines
        .iter()
        .copied()
        .filter(|l| universe.contains(l))
        .collect();
    let uncovered = universe.difference(&covered).copied().collect();
    let mut per_test = BTreeMap::new();
    for t in &tests.tests {
        let s = response.per_test.get(&t.id).copied().unwrap_or(TestStatus::NotRun);
        per_test.insert(t.id.clone(), s);
    }
    ValidationOutcome {
        covered,
        uncovered,
        per_test,
        errors: response.errors,
    }
}

/// Spawns the shim command once per call: request on stdin, response on
/// stdout.
#[derive(Debug, Clone)]
pub struct ShimValidator {
    program: String,
    args: Vec<String>,
    workdir: Option<PathBuf>,
}

impl ShimValidator {
    /// `command` is split on whitespace: program then arguments.
    pub fn new(command: &str) -> Result<Self, ValidationError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| ValidationError::ShimUnavailable("empty shim command".into()))?;
        Ok(ShimValidator {
            program,
            args: parts.collect(),
            workdir: None,
        })
    }

    /// Command from the environment, if set.
    pub fn from_env() -> Option<Result<Self, ValidationError>> {
        std::env::var(SHIM_ENV).ok().map(|c| Self::new(&c))
    }

    pub fn in_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }

    pub fn request(tests: &TestSuite, original_file: &Path, unit: &TargetUnit) -> ShimRequest {
        ShimRequest {
            target_file: original_file.to_path_buf(),
            unit_span: [unit.span.start, unit.span.end],
            tests: tests
                .tests
                .iter()
                .map(|t| ShimTest {
                    id: t.id.clone(),
                    source: t.source.clone(),
                })
                .collect(),
            mode: "coverage".into(),
        }
    }

    fn exchange(&self, request: &ShimRequest) -> Result<ShimResponse, ValidationError> {
        let body = serde_json::to_vec(request).map_err(|e| ValidationError::Malformed(e.to_string()))?;
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(d) = &self.workdir {
            cmd.current_dir(d);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| ValidationError::ShimUnavailable(format!("{}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin
                .write_all(&body)
                .map_err(|e| ValidationError::ShimUnavailable(e.to_string()))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| ValidationError::ShimUnavailable(e.to_string()))?;
        if !out.status.success() {
            return Err(ValidationError::ShimUnavailable(format!(
                "shim exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| ValidationError::Malformed(e.to_string()))
    }
}

impl Validator for ShimValidator {
    fn validate(
        &mut self,
        tests: &TestSuite,
        original_file: &Path,
        unit: &TargetUnit,
    ) -> Result<ValidationOutcome, ValidationError> {
        let fallback = static_executable_lines(unit)?;
        if tests.is_empty() {
            return Ok(ValidationOutcome {
                uncovered: fallback,
                ..Default::default()
            });
        }
        let response = self.exchange(&Self::request(tests, original_file, unit))?;
        Ok(outcome_from_response(response, unit, &fallback, tests))
    }
}
