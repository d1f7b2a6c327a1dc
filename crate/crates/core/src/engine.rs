//! Generation sessions and the outer eliminate/generate loop.
//!
//! A session is one dialogue: it ends with flag 1 when nothing is left
//! uncovered, flag 0 on the first round that shrinks the uncovered set, and
//! flag -1 once the round limit is spent. The pipeline re-eliminates from the
//! original unit after every flag 0.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::context::{DependencySummary, SliceAndDependencies};
use crate::eliminate::{eliminate, write_slice_file};
use crate::frontend::TargetUnit;
use crate::llm::{Gateway, LlmError};
use crate::prompt::{extract_test_code, PromptSet};
use crate::validation::{pass_rate, TestSuite, ValidationOutcome, Validator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum GenerationFlag {
    FullyCovered,
    NewCoverage,
    Exhausted,
}

impl From<GenerationFlag> for i8 {
    fn from(f: GenerationFlag) -> i8 {
        match f {
            GenerationFlag::FullyCovered => 1,
            GenerationFlag::NewCoverage => 0,
            GenerationFlag::Exhausted => -1,
        }
    }
}

impl TryFrom<i8> for GenerationFlag {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(GenerationFlag::FullyCovered),
            0 => Ok(GenerationFlag::NewCoverage),
            -1 => Ok(GenerationFlag::Exhausted),
            _ => Err(format!("invalid generation flag {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Overflow,
    Gateway,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    fn from_llm(e: &LlmError) -> Self {
        let kind = match e {
            LlmError::Overflow { .. } => FailureKind::Overflow,
            _ => FailureKind::Gateway,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }

    fn infrastructure(message: impl ToString) -> Self {
        Failure {
            kind: FailureKind::Infrastructure,
            message: message.to_string(),
        }
    }
}

/// Result of one session. `uncov` never exceeds the input set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    pub flag: GenerationFlag,
    pub uncov: BTreeSet<u32>,
    pub sends: usize,
    pub validations: usize,
    pub dialogue_id: String,
    /// Outcome of the last validation in this session, if any ran.
    pub last_validation: Option<ValidationOutcome>,
    pub failure: Option<Failure>,
}

/// Collaborators shared by every session of one unit.
pub struct Engine<'a> {
    pub gateway: &'a mut Gateway,
    pub validator: &'a mut dyn Validator,
    pub prompts: &'a PromptSet,
    /// The unmodified file holding the unit; tests always run against it.
    pub original_file: PathBuf,
}

impl Engine<'_> {
    /// One dialogue over `ctx`. Generated tests are appended to `tests`,
    /// including failing ones; validation always covers the whole suite.
    pub fn generate_for_slice(
        &mut self,
        ctx: &SliceAndDependencies,
        limit: u32,
        tests: &mut TestSuite,
        uncov: &BTreeSet<u32>,
    ) -> SessionOutcome {
        let unit = &ctx.origin_unit;
        let mut dialogue = self.gateway.new_dialogue();
        let mut out = SessionOutcome {
            flag: GenerationFlag::Exhausted,
            uncov: uncov.clone(),
            sends: 0,
            validations: 0,
            dialogue_id: dialogue.id.clone(),
            last_validation: None,
            failure: None,
        };
        let mut prompt = match self.prompts.initial_prompt(ctx, uncov) {
            Ok(p) => p,
            Err(e) => {
                out.failure = Some(Failure::infrastructure(e));
                return out;
            }
        };

        for round in 1..=limit.max(1) {
            let reply = match self.gateway.send(&mut dialogue, &prompt) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("{}: round {round}: {e}", dialogue.id);
                    out.failure = Some(Failure::from_llm(&e));
                    return out;
                }
            };
            out.sends += 1;

            let errors = match extract_test_code(&reply) {
                Ok(code) => {
                    let id = tests.push(code);
                    let outcome = match self.validator.validate(tests, &self.original_file, unit) {
                        Ok(o) => o,
                        Err(e) => {
                            out.failure = Some(Failure::infrastructure(e));
                            return out;
                        }
                    };
                    out.validations += 1;
                    tests.apply(&outcome);
                    let new_uncov = outcome.uncovered.clone();
                    let errors: Vec<String> = outcome
                        .errors
                        .iter()
                        .filter(|e| e.id == id)
                        .map(|e| e.message.clone())
                        .collect();
                    out.last_validation = Some(outcome);
                    if new_uncov.is_empty() {
                        out.flag = GenerationFlag::FullyCovered;
                        out.uncov = new_uncov;
                        return out;
                    }
                    if new_uncov.len() < out.uncov.len() {
                        out.flag = GenerationFlag::NewCoverage;
                        out.uncov = new_uncov;
                        return out;
                    }
                    if new_uncov.len() <= out.uncov.len() {
                        out.uncov = new_uncov;
                    }
                    errors
                }
                Err(failure) => vec![format!("the reply could not be used: {failure}")],
            };

            if round < limit {
                prompt = match self.prompts.refinement_prompt(&out.uncov, &errors, unit) {
                    Ok(p) => p,
                    Err(e) => {
                        out.failure = Some(Failure::infrastructure(e));
                        return out;
                    }
                };
            }
        }
        out
    }

    /// Runs sessions until full coverage or exhaustion. Every session sees a
    /// slice eliminated from the original unit under the current uncovered
    /// set (or the full unit when `options.eliminate` is off).
    pub fn run_pipeline(
        &mut self,
        unit: &TargetUnit,
        basic_slice: &str,
        summaries: &[DependencySummary],
        options: &PipelineOptions,
    ) -> PipelineResult {
        let mut result = PipelineResult {
            suite: TestSuite::default(),
            slices: Vec::new(),
            report: RunReport::new(unit),
        };
        let initial = match self.validator.validate(&result.suite, &self.original_file, unit) {
            Ok(o) => o,
            Err(e) => {
                result.report.failure = Some(Failure::infrastructure(e));
                return result;
            }
        };
        result.report.validations += 1;
        let universe: BTreeSet<u32> = initial.covered.union(&initial.uncovered).copied().collect();
        result.report.executable_lines = universe.len();
        let mut uncov = initial.uncovered.clone();
        let mut last = initial;

        while !uncov.is_empty() {
            let (slice_source, slice_lines) = if options.eliminate {
                match eliminate(unit, &uncov) {
                    Ok(s) => {
                        result.report.eliminations += 1;
                        let lines = s.line_count();
                        result.slices.push(SliceRecord {
                            uncov: uncov.clone(),
                            file: write_slice_file(&s),
                        });
                        (s.source, lines)
                    }
                    Err(e) => {
                        result.report.failure = Some(Failure::infrastructure(e));
                        break;
                    }
                }
            } else {
                (unit.source.clone(), unit.line_count)
            };
            let ctx = SliceAndDependencies::with_unit_text(basic_slice, unit, &slice_source, summaries.to_vec());
            let before = uncov.len();
            let session = self.generate_for_slice(&ctx, options.iteration_limit, &mut result.suite, &uncov);
            result.report.sends += session.sends;
            result.report.validations += session.validations;
            result.report.sessions.push(SessionRecord {
                dialogue_id: session.dialogue_id.clone(),
                slice_lines,
                uncov_before: before,
                uncov_after: session.uncov.len(),
                flag: session.flag,
                sends: session.sends,
                validations: session.validations,
            });
            if let Some(v) = session.last_validation {
                last = v;
            }
            uncov = session.uncov;
            if let Some(f) = session.failure {
                result.report.failure = Some(f);
                break;
            }
            if session.flag != GenerationFlag::NewCoverage {
                break;
            }
        }

        let covered: BTreeSet<u32> = universe.difference(&uncov).copied().collect();
        result.report.flag = result.report.sessions.last().map(|s| s.flag);
        result.report.line_coverage = if universe.is_empty() {
            1.0
        } else {
            covered.len() as f64 / universe.len() as f64
        };
        result.report.covered_lines = covered;
        result.report.uncovered_lines = uncov;
        result.report.pass_rate = pass_rate(&last);
        result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub iteration_limit: u32,
    /// Off for the no-elimination ablation: every session sees the full unit.
    pub eliminate: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            iteration_limit: 5,
            eliminate: true,
        }
    }
}

/// Slice shown in one session, as slice-file text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub uncov: BTreeSet<u32>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub dialogue_id: String,
    pub slice_lines: u32,
    pub uncov_before: usize,
    pub uncov_after: usize,
    pub flag: GenerationFlag,
    pub sends: usize,
    pub validations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub unit: String,
    /// Chronological.
    pub sessions: Vec<SessionRecord>,
    pub eliminations: usize,
    pub sends: usize,
    pub validations: usize,
    pub executable_lines: usize,
    pub covered_lines: BTreeSet<u32>,
    pub uncovered_lines: BTreeSet<u32>,
    pub line_coverage: f64,
    pub pass_rate: Option<f64>,
    pub flag: Option<GenerationFlag>,
    pub failure: Option<Failure>,
}

impl RunReport {
    fn new(unit: &TargetUnit) -> Self {
        RunReport {
            unit: unit.qualified_name.clone(),
            sessions: Vec::new(),
            eliminations: 0,
            sends: 0,
            validations: 0,
            executable_lines: 0,
            covered_lines: BTreeSet::new(),
            uncovered_lines: BTreeSet::new(),
            line_coverage: 0.0,
            pass_rate: None,
            flag: None,
            failure: None,
        }
    }

    /// Full coverage reached without a failure.
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.uncovered_lines.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub suite: TestSuite,
    pub slices: Vec<SliceRecord>,
    pub report: RunReport,
}
