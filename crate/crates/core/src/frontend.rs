//! Python source parsing, target-unit enumeration and size/complexity metrics.

use std::path::{Path, PathBuf};

use rustpython_parser::ast::Stmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pyast::{self, FunctionView, LoopView, ParsedUnit, TryView};
use crate::text::{self, LineIndex};

/// A parse failure with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}:{line}:{column}: {message}")]
pub struct SyntaxDiagnostic {
    pub path: String,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        LineSpan { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefinitionKind {
    Function,
    AsyncFunction,
    Class,
}

/// A module- or class-level definition. Functions nested inside functions
/// are part of their enclosing definition and are not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Definition {
    pub name: String,
    pub qualified_name: String,
    pub kind: DefinitionKind,
    /// Lines from the first decorator to the last body line.
    pub span: LineSpan,
    /// Line holding the `def` / `class` keyword.
    pub header_line: u32,
    /// Enclosing class, for methods.
    pub parent: Option<String>,
}

/// A parsed Python file.
#[derive(Debug)]
pub struct SourceModule {
    pub path: PathBuf,
    pub text: String,
    pub definitions: Vec<Definition>,
    pub(crate) suite: Vec<Stmt>,
    pub(crate) lines: LineIndex,
}

impl SourceModule {
    pub fn line_count(&self) -> u32 {
        text::line_count(&self.text)
    }

    pub fn definition(&self, qualified_name: &str) -> Option<&Definition> {
        self.definitions
            .iter()
            .find(|d| d.qualified_name == qualified_name)
    }

    /// Text of the given lines, newline terminated.
    pub fn lines_text(&self, span: LineSpan) -> String {
        let start = self.lines.line_start(span.start);
        let end = self.lines.line_start(span.end + 1);
        let mut s = self.text[start..end].to_string();
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    }

    /// Builds the target unit for a function definition.
    pub fn target_unit(&self, def: &Definition) -> Result<TargetUnit, SyntaxDiagnostic> {
        let source = self.lines_text(def.span);
        let mut unit = TargetUnit {
            qualified_name: def.qualified_name.clone(),
            module_path: self.path.clone(),
            span: def.span,
            line_count: def.span.len(),
            complexity: 1,
            source,
        };
        unit.complexity = cyclomatic_complexity(&unit)?;
        Ok(unit)
    }
}

/// Parses a source file and locates every module- and class-level
/// definition, including methods of nested classes.
pub fn parse_source(text: &str, path: &Path) -> Result<SourceModule, SyntaxDiagnostic> {
    let path_str = path.display().to_string();
    let suite = pyast::parse_suite(text, &path_str)?;
    let lines = LineIndex::new(text);
    let mut definitions = Vec::new();
    collect_definitions(text, &lines, &suite, None, &mut definitions);
    Ok(SourceModule {
        path: path.to_path_buf(),
        text: text.to_string(),
        definitions,
        suite,
        lines,
    })
}

fn collect_definitions(
    text: &str,
    lines: &LineIndex,
    body: &[Stmt],
    parent: Option<&str>,
    out: &mut Vec<Definition>,
) {
    for stmt in body {
        let qualify = |name: &str| match parent {
            Some(p) => format!("{p}.{name}"),
            None => name.to_string(),
        };
        let span = || {
            LineSpan::new(
                lines.line_of(pyast::decorated_start(text, stmt)),
                lines.last_line_of(pyast::start(stmt), pyast::end(stmt)),
            )
        };
        match stmt {
            Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_) => {
                let f = FunctionView::of(stmt).unwrap();
                out.push(Definition {
                    name: f.name.to_string(),
                    qualified_name: qualify(f.name),
                    kind: if matches!(stmt, Stmt::FunctionDef(_)) {
                        DefinitionKind::Function
                    } else {
                        DefinitionKind::AsyncFunction
                    },
                    span: span(),
                    header_line: lines.line_of(pyast::start(stmt)),
                    parent: parent.map(str::to_string),
                });
            }
            Stmt::ClassDef(c) => {
                let qualified = qualify(c.name.as_str());
                out.push(Definition {
                    name: c.name.to_string(),
                    qualified_name: qualified.clone(),
                    kind: DefinitionKind::Class,
                    span: span(),
                    header_line: lines.line_of(pyast::start(stmt)),
                    parent: parent.map(str::to_string),
                });
                collect_definitions(text, lines, &c.body, Some(&qualified), out);
            }
            Stmt::If(s) => {
                collect_definitions(text, lines, &s.body, parent, out);
                collect_definitions(text, lines, &s.orelse, parent, out);
            }
            Stmt::With(s) => collect_definitions(text, lines, &s.body, parent, out),
            _ => {
                if let Some(t) = TryView::of(stmt) {
                    collect_definitions(text, lines, t.body, parent, out);
                    for h in t.handlers {
                        let (inner, _) = pyast::handler_parts(h);
                        collect_definitions(text, lines, &inner.body, parent, out);
                    }
                    collect_definitions(text, lines, t.orelse, parent, out);
                    collect_definitions(text, lines, t.finalbody, parent, out);
                }
            }
        }
    }
}

/// A method under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetUnit {
    /// Dotted name within its module, e.g. `Packer.bump`.
    pub qualified_name: String,
    pub module_path: PathBuf,
    pub span: LineSpan,
    /// Full source lines of the definition, decorators included.
    pub source: String,
    pub line_count: u32,
    pub complexity: u32,
}

impl TargetUnit {
    /// Builds a unit directly from a function's source text.
    pub fn from_source(
        qualified_name: &str,
        module_path: impl Into<PathBuf>,
        first_line: u32,
        source: &str,
    ) -> Result<Self, SyntaxDiagnostic> {
        let mut source = source.to_string();
        if !source.ends_with('\n') {
            source.push('\n');
        }
        let line_count = text::line_count(&source);
        let mut unit = TargetUnit {
            qualified_name: qualified_name.to_string(),
            module_path: module_path.into(),
            span: LineSpan::new(first_line, first_line + line_count - 1),
            source,
            line_count,
            complexity: 1,
        };
        unit.complexity = cyclomatic_complexity(&unit)?;
        Ok(unit)
    }

    pub(crate) fn parse(&self) -> Result<ParsedUnit, SyntaxDiagnostic> {
        ParsedUnit::parse(
            &self.source,
            self.span.start,
            &self.module_path.display().to_string(),
        )
    }

    /// Number of top-level statements in the function body.
    pub fn statement_count(&self) -> Result<usize, SyntaxDiagnostic> {
        Ok(self.parse()?.function().body.len())
    }

    /// Source text of one original file line of this unit.
    pub fn line_text(&self, line: u32) -> Option<&str> {
        if !self.span.contains(line) {
            return None;
        }
        self.source.lines().nth((line - self.span.start) as usize)
    }
}

/// Which decision points the complexity metric counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityOptions {
    /// Count each `and` / `or` connective as a decision point.
    pub count_boolean_operators: bool,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        ComplexityOptions {
            count_boolean_operators: true,
        }
    }
}

/// McCabe cyclomatic complexity: decision points + 1.
///
/// Decision points are `if`/`elif`, loop headers, exception handlers,
/// boolean connectives, conditional expressions and comprehension filters.
/// Nested function and class bodies are not counted.
pub fn cyclomatic_complexity(unit: &TargetUnit) -> Result<u32, SyntaxDiagnostic> {
    cyclomatic_complexity_with(unit, ComplexityOptions::default())
}

pub fn cyclomatic_complexity_with(
    unit: &TargetUnit,
    opts: ComplexityOptions,
) -> Result<u32, SyntaxDiagnostic> {
    let parsed = unit.parse()?;
    Ok(1 + block_decisions(parsed.function().body, opts))
}

fn block_decisions(stmts: &[Stmt], opts: ComplexityOptions) -> u32 {
    stmts.iter().map(|s| stmt_decisions(s, opts)).sum()
}

fn stmt_decisions(stmt: &Stmt, opts: ComplexityOptions) -> u32 {
    let exprs: u32 = pyast::own_exprs(stmt)
        .into_iter()
        .map(|e| pyast::expr_decisions(e, opts.count_boolean_operators))
        .sum();
    let structural = match stmt {
        Stmt::If(s) => 1 + block_decisions(&s.body, opts) + block_decisions(&s.orelse, opts),
        Stmt::With(s) => block_decisions(&s.body, opts),
        Stmt::AsyncWith(s) => block_decisions(&s.body, opts),
        Stmt::Match(m) => m
            .cases
            .iter()
            .map(|c| {
                1 + block_decisions(&c.body, opts)
                    + c.guard
                        .as_ref()
                        .map_or(0, |g| pyast::expr_decisions(g, opts.count_boolean_operators))
            })
            .sum(),
        _ => {
            if let Some(l) = LoopView::of(stmt) {
                1 + block_decisions(l.body, opts) + block_decisions(l.orelse, opts)
            } else if let Some(t) = TryView::of(stmt) {
                let handlers: u32 = t
                    .handlers
                    .iter()
                    .map(|h| 1 + block_decisions(&pyast::handler_parts(h).0.body, opts))
                    .sum();
                block_decisions(t.body, opts)
                    + handlers
                    + block_decisions(t.orelse, opts)
                    + block_decisions(t.finalbody, opts)
            } else {
                0
            }
        }
    };
    exprs + structural
}

/// Function definitions with more than `min_lines` lines and complexity
/// above `min_complexity`, in source order.
pub fn enumerate_target_units(
    module: &SourceModule,
    min_lines: u32,
    min_complexity: u32,
) -> Vec<TargetUnit> {
    module
        .definitions
        .iter()
        .filter(|d| d.kind != DefinitionKind::Class)
        .filter(|d| d.span.len() > min_lines)
        .filter_map(|d| match module.target_unit(d) {
            Ok(u) => Some(u),
            Err(e) => {
                log::warn!("skipping {}: {e}", d.qualified_name);
                None
            }
        })
        .filter(|u| u.complexity > min_complexity)
        .collect()
}
