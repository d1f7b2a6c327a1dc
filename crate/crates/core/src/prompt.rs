//! Prompt templates and test-code extraction from model replies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::context::{DependencySummary, SliceAndDependencies};
use crate::frontend::{SyntaxDiagnostic, TargetUnit};
use crate::pyast;
use crate::text;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template}: no binding for placeholder {{{{{name}}}}}")]
    MissingBinding { template: String, name: String },
    #[error("template {template}: required placeholder {{{{{name}}}}} does not occur in the body")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template}: unterminated placeholder")]
    Unterminated { template: String },
    #[error("refinement prompt needs at least one uncovered line")]
    EmptyUncovered,
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

/// Why no test code could be taken from a reply. Consumes a round.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractionFailure {
    #[error("reply has no <answer>...</answer> block")]
    NoAnswer,
    #[error("answer block is empty")]
    Empty,
    #[error("answer does not parse: {0}")]
    Unparseable(SyntaxDiagnostic),
}

/// A text body with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new<I, S>(name: &str, body: &str, required: I) -> Result<Self, PromptError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let present = placeholders(body).map_err(|_| PromptError::Unterminated {
            template: name.to_string(),
        })?;
        let required: BTreeSet<String> = required.into_iter().map(Into::into).collect();
        if let Some(missing) = required.iter().find(|r| !present.contains(*r)) {
            return Err(PromptError::MissingPlaceholder {
                template: name.to_string(),
                name: missing.clone(),
            });
        }
        Ok(PromptTemplate {
            name: name.to_string(),
            body: body.to_string(),
            required_placeholders: required,
        })
    }

    /// Single-pass substitution; bound values are never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| PromptError::Unterminated {
                template: self.name.clone(),
            })?;
            let name = after[..close].trim();
            let value = bindings.get(name).ok_or_else(|| PromptError::MissingBinding {
                template: self.name.clone(),
                name: name.to_string(),
            })?;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn placeholders(body: &str) -> Result<BTreeSet<String>, ()> {
    let mut found = BTreeSet::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or(())?;
        found.insert(after[..close].trim().to_string());
        rest = &after[close + 2..];
    }
    Ok(found)
}

/// The three templates a run uses.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub initial: PromptTemplate,
    pub refine: PromptTemplate,
    pub summarize: PromptTemplate,
    pub exemplar_definition: String,
    pub exemplar_summary: String,
}

pub const INITIAL_PLACEHOLDERS: [&str; 4] =
    ["code_under_test", "dependencies", "uncovered_lines", "module_name"];

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            initial: PromptTemplate::new(
                "initial",
                include_str!("../assets/initial.tmpl"),
                INITIAL_PLACEHOLDERS,
            )
            .expect("bundled template"),
            refine: PromptTemplate::new(
                "refine",
                include_str!("../assets/refine.tmpl"),
                ["uncovered_lines", "runtime_errors"],
            )
            .expect("bundled template"),
            summarize: PromptTemplate::new(
                "summarize",
                include_str!("../assets/summarize.tmpl"),
                ["definition", "exemplar_definition", "exemplar_summary"],
            )
            .expect("bundled template"),
            exemplar_definition: include_str!("../assets/summarize_exemplar.py")
                .trim_end()
                .to_string(),
            exemplar_summary: include_str!("../assets/summarize_exemplar.txt")
                .trim()
                .to_string(),
        }
    }
}

impl PromptSet {
    /// Default set with the initial template read from `path`. The file
    /// must use `{{code_under_test}}` and `{{uncovered_lines}}`.
    pub fn with_initial_template(path: &Path) -> Result<Self, PromptError> {
        let body = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut set = PromptSet::default();
        set.initial = PromptTemplate::new(
            &path.display().to_string(),
            &body,
            ["code_under_test", "uncovered_lines"],
        )?;
        Ok(set)
    }

    /// First prompt of a generation session.
    pub fn initial_prompt(
        &self,
        ctx: &SliceAndDependencies,
        uncov: &BTreeSet<u32>,
    ) -> Result<String, PromptError> {
        let unit = &ctx.origin_unit;
        let bindings = BTreeMap::from([
            ("code_under_test", ctx.slice_source.trim_end().to_string()),
            ("dependencies", render_summaries(&ctx.summaries)),
            ("uncovered_lines", render_lines(uncov, unit)),
            ("module_name", module_name(&unit.module_path)),
        ]);
        self.initial.render(&bindings)
    }

    /// Follow-up after a round that covered nothing new.
    pub fn refinement_prompt(
        &self,
        new_uncov: &BTreeSet<u32>,
        runtime_errors: &[String],
        unit: &TargetUnit,
    ) -> Result<String, PromptError> {
        if new_uncov.is_empty() {
            return Err(PromptError::EmptyUncovered);
        }
        let errors = if runtime_errors.is_empty() {
            "(none)".to_string()
        } else {
            runtime_errors.join("\n\n")
        };
        let bindings = BTreeMap::from([
            ("uncovered_lines", render_lines(new_uncov, unit)),
            ("runtime_errors", errors),
        ]);
        self.refine.render(&bindings)
    }

    /// One-shot summarization request for a single definition.
    pub fn summarize_prompt(&self, definition: &str) -> Result<String, PromptError> {
        let bindings = BTreeMap::from([
            ("definition", definition.trim_end().to_string()),
            ("exemplar_definition", self.exemplar_definition.clone()),
            ("exemplar_summary", self.exemplar_summary.clone()),
        ]);
        self.summarize.render(&bindings)
    }
}

/// Dotted import name of a module path, e.g. `pkg/util.py` -> `pkg.util`.
pub fn module_name(path: &Path) -> String {
    let stem = path.with_extension("");
    let parts: Vec<String> = stem
        .components()
        .filter_map(|c| match c {
            std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect();
    match parts.as_slice() {
        [.., pkg, last] if last == "__init__" => pkg.clone(),
        _ => parts.join("."),
    }
}

fn render_lines(lines: &BTreeSet<u32>, unit: &TargetUnit) -> String {
    lines
        .iter()
        .map(|&l| match unit.line_text(l) {
            Some(t) => format!("line {l}: {}", t.trim()),
            None => format!("line {l}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_summaries(summaries: &[DependencySummary]) -> String {
    if summaries.is_empty() {
        return "(none)".to_string();
    }
    summaries
        .iter()
        .map(|s| format!("- `{}`\n  {}", s.signature, s.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Takes the test code from the first `<answer>` block of a reply, drops
/// code-fence lines, dedents, and checks that it parses.
pub fn extract_test_code(reply: &str) -> Result<String, ExtractionFailure> {
    let close = reply.find("</answer>").ok_or(ExtractionFailure::NoAnswer)?;
    let open = reply[..close]
        .rfind("<answer>")
        .ok_or(ExtractionFailure::NoAnswer)?;
    let inner = &reply[open + "<answer>".len()..close];
    let kept: Vec<&str> = inner
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let code = text::dedent(&kept.join("\n"));
    let code = code.trim_matches('\n');
    if code.trim().is_empty() {
        return Err(ExtractionFailure::Empty);
    }
    let code = format!("{}\n", code.trim_end());
    pyast::parse_suite(&code, "<answer>").map_err(ExtractionFailure::Unparseable)?;
    Ok(code)
}

/// Reply text between `<summary>` tags, or the whole reply trimmed.
pub fn extract_summary(reply: &str) -> String {
    let inner = reply
        .find("<summary>")
        .and_then(|s| {
            let body = &reply[s + "<summary>".len()..];
            body.find("</summary>").map(|e| &body[..e])
        })
        .unwrap_or(reply);
    inner.split_whitespace().collect::<Vec<_>>().join(" ")
}
