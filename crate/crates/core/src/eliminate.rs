//! Covered-code elimination.
//!
//! Keeps every CFG node that lies on some path through an uncovered line
//! (backward reach ∪ forward reach of the line's node) and rebuilds a
//! parseable function from the kept statements. Always applied to the
//! original unit, never to an earlier slice.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rustpython_parser::ast::{Expr, Stmt};
use thiserror::Error;

use crate::cfg::{self, CfgError, FineGrainedCfg, NodeId};
use crate::frontend::{ComplexityOptions, TargetUnit};
use crate::pyast::{self, ParsedUnit, TryView};
use crate::text;

#[derive(Debug, Error)]
pub enum EliminateError {
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error("line {0} is not a statement line of the unit")]
    UnmappedLine(u32),
    #[error("reconstructed slice does not parse: {message}\n--- original ---\n{original}\n--- reconstructed ---\n{reconstructed}")]
    Reconstruction {
        message: String,
        original: String,
        reconstructed: String,
    },
    #[error("malformed slice file header: {0}")]
    SliceHeader(String),
}

/// Nodes (and their lines) kept by elimination.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreserveSet {
    pub node_ids: BTreeSet<NodeId>,
    pub lines: BTreeSet<u32>,
}

impl PreserveSet {
    /// Union of [`necessities`] over `uncov`. Every line must be mapped.
    pub fn for_lines(cfg: &FineGrainedCfg, uncov: &BTreeSet<u32>) -> Result<Self, EliminateError> {
        let mut node_ids = BTreeSet::new();
        for &line in uncov {
            node_ids.extend(necessities(cfg, line)?);
        }
        Ok(Self::from_nodes(cfg, node_ids))
    }

    pub fn from_nodes(cfg: &FineGrainedCfg, node_ids: BTreeSet<NodeId>) -> Self {
        let lines = node_ids
            .iter()
            .flat_map(|&n| cfg.nodes[n].lines.iter().copied())
            .collect();
        PreserveSet { node_ids, lines }
    }
}

/// A reduced unit. Line numbers on the right of `line_map` and in
/// `preserved` / `dropped` are original file lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminatedSlice {
    pub source: String,
    /// 1-based slice line to original line; synthesized lines are absent.
    pub line_map: BTreeMap<u32, u32>,
    pub preserved: BTreeSet<u32>,
    pub dropped: BTreeSet<u32>,
    /// Ignored uncovered lines, one message each.
    pub warnings: Vec<String>,
}

impl EliminatedSlice {
    pub fn line_count(&self) -> u32 {
        text::line_count(&self.source)
    }
}

/// Backward reach ∪ forward reach ∪ {n} for the node holding `line`.
pub fn necessities(cfg: &FineGrainedCfg, line: u32) -> Result<BTreeSet<NodeId>, EliminateError> {
    let n = cfg
        .node_of_line(line)
        .ok_or(EliminateError::UnmappedLine(line))?;
    let mut keep = reach(n, |m| cfg.successors(m));
    keep.extend(reach(n, |m| cfg.predecessors(m)));
    Ok(keep)
}

fn reach<'a>(start: NodeId, next: impl Fn(NodeId) -> &'a [NodeId]) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &m in next(n) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Eliminates every statement on no path through a line of `uncov`.
///
/// Lines of `uncov` that are blank, comments, unreachable, or outside the
/// unit are ignored with a warning. Signature lines are always kept.
pub fn eliminate(unit: &TargetUnit, uncov: &BTreeSet<u32>) -> Result<EliminatedSlice, EliminateError> {
    let parsed = unit.parse().map_err(CfgError::from)?;
    let cfg = cfg::build_from_parsed(&parsed, ComplexityOptions::default())?;
    let structural = signature_lines(&parsed);
    let executable: BTreeSet<u32> = cfg
        .line_index
        .keys()
        .copied()
        .chain(structural.iter().copied())
        .collect();

    let mut warnings = Vec::new();
    let mut targets = BTreeSet::new();
    for &line in uncov {
        if structural.contains(&line) {
            continue;
        }
        if cfg.unreachable_lines.contains(&line) {
            warnings.push(format!("line {line} is unreachable; ignored"));
        } else if cfg.node_of_line(line).is_none() {
            warnings.push(format!("line {line} is not executable; ignored"));
        } else {
            targets.insert(line);
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", unit.qualified_name);
    }

    let preserve = PreserveSet::for_lines(&cfg, &targets)?;
    if targets.is_empty() || preserve.node_ids.len() == cfg.nodes.len() {
        return Ok(EliminatedSlice {
            source: unit.source.clone(),
            line_map: (1..=unit.line_count).map(|i| (i, unit.span.start + i - 1)).collect(),
            preserved: executable,
            dropped: BTreeSet::new(),
            warnings,
        });
    }

    let rebuilt = rebuild(&parsed, &cfg, &preserve.node_ids);
    check_parses(unit, &rebuilt.source)?;
    let mut preserved: BTreeSet<u32> = preserve
        .lines
        .iter()
        .chain(&structural)
        .chain(&rebuilt.hoisted_lines)
        .copied()
        .collect();
    for l in &rebuilt.docstring_lines {
        preserved.remove(l);
    }
    let dropped = executable.difference(&preserved).copied().collect();
    Ok(EliminatedSlice {
        source: rebuilt.source,
        line_map: rebuilt.line_map,
        preserved,
        dropped,
        warnings,
    })
}

/// Reduced source and line map for an explicit preserve set.
pub fn reconstruct(
    preserve: &PreserveSet,
    unit: &TargetUnit,
) -> Result<(String, BTreeMap<u32, u32>), EliminateError> {
    let parsed = unit.parse().map_err(CfgError::from)?;
    let cfg = cfg::build_from_parsed(&parsed, ComplexityOptions::default())?;
    let rebuilt = rebuild(&parsed, &cfg, &preserve.node_ids);
    check_parses(unit, &rebuilt.source)?;
    Ok((rebuilt.source, rebuilt.line_map))
}

fn check_parses(unit: &TargetUnit, source: &str) -> Result<(), EliminateError> {
    ParsedUnit::parse(source, unit.span.start, &unit.module_path.display().to_string())
        .map(|_| ())
        .map_err(|d| EliminateError::Reconstruction {
            message: d.to_string(),
            original: unit.source.clone(),
            reconstructed: source.to_string(),
        })
}

/// Decorator and `def` header lines.
fn signature_lines(pu: &ParsedUnit) -> BTreeSet<u32> {
    let def = pu.def_stmt();
    let start = pyast::decorated_start(&pu.text, def);
    let colon = text::header_colon(&pu.text, pyast::start(def)).unwrap_or(start);
    (pu.file_line(start)..=pu.file_line(colon)).collect()
}

struct Rebuilt {
    source: String,
    line_map: BTreeMap<u32, u32>,
    hoisted_lines: BTreeSet<u32>,
    docstring_lines: BTreeSet<u32>,
}

struct OutLine {
    text: String,
    orig: Option<u32>,
}

fn rebuild(pu: &ParsedUnit, cfg: &FineGrainedCfg, keep: &BTreeSet<NodeId>) -> Rebuilt {
    let def = pu.def_stmt();
    let body = pu.function().body;
    let base = pu.base_indent.clone();
    let unit_indent = body
        .first()
        .map(|s| {
            let ws = line_indent(&pu.text, pyast::start(s));
            ws.strip_prefix(base.as_str()).unwrap_or("    ").to_string()
        })
        .filter(|u| !u.is_empty())
        .unwrap_or_else(|| "    ".to_string());
    let mut r = Render {
        pu,
        cfg,
        keep,
        base,
        unit_indent,
        hoisted: Vec::new(),
        hoisted_lines: BTreeSet::new(),
    };

    let mut docstring_lines = BTreeSet::new();
    let body = match body.first() {
        Some(first) if pyast::is_docstring(first) => {
            docstring_lines.extend(pu.file_lines(first.range()));
            &body[1..]
        }
        _ => body,
    };
    let mut lines = r.block(body, 1);
    let hoisted = std::mem::take(&mut r.hoisted);
    lines.splice(0..0, hoisted);
    if lines.is_empty() {
        lines.push(r.synth("pass", 1));
    }

    let sig_start = pyast::decorated_start(&pu.text, def);
    let colon = text::header_colon(&pu.text, pyast::start(def)).unwrap_or(sig_start);
    let mut out = r.verbatim(sig_start, colon + 1, 0);
    out.extend(lines);

    let mut source = String::new();
    let mut line_map = BTreeMap::new();
    for (i, l) in out.iter().enumerate() {
        source.push_str(&l.text);
        source.push('\n');
        if let Some(o) = l.orig {
            line_map.insert(i as u32 + 1, o);
        }
    }
    Rebuilt {
        source,
        line_map,
        hoisted_lines: r.hoisted_lines,
        docstring_lines,
    }
}

fn line_indent(text: &str, offset: usize) -> &str {
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    text::leading_whitespace(&text[line_start..])
}

use rustpython_parser::ast::Ranged;

struct Render<'a> {
    pu: &'a ParsedUnit,
    cfg: &'a FineGrainedCfg,
    keep: &'a BTreeSet<NodeId>,
    base: String,
    unit_indent: String,
    hoisted: Vec<OutLine>,
    hoisted_lines: BTreeSet<u32>,
}

/// One arm of a flattened if / elif chain.
struct Arm<'a> {
    stmt: &'a Stmt,
    test: &'a Expr,
    body: &'a [Stmt],
}

impl<'a> Render<'a> {
    fn indent(&self, depth: usize) -> String {
        format!("{}{}", self.base, self.unit_indent.repeat(depth))
    }

    fn synth(&self, code: &str, depth: usize) -> OutLine {
        OutLine {
            text: format!("{}{}", self.indent(depth), code),
            orig: None,
        }
    }

    fn kept(&self, stmt: &Stmt) -> bool {
        self.kept_at(pyast::start(stmt))
    }

    fn kept_at(&self, offset: usize) -> bool {
        self.cfg
            .anchors
            .get(&offset)
            .is_some_and(|n| self.keep.contains(n))
    }

    /// Original text `[start, end)` placed at `depth`. Continuation lines
    /// are re-prefixed only where they carry the original indentation.
    fn verbatim(&self, start: usize, end: usize, depth: usize) -> Vec<OutLine> {
        let old = line_indent(&self.pu.text, start).to_string();
        let new = self.indent(depth);
        let first = self.pu.file_line(start);
        self.pu.text[start..end]
            .split('\n')
            .enumerate()
            .map(|(i, line)| {
                let text = if i == 0 {
                    format!("{new}{line}")
                } else if old != new && line.starts_with(old.as_str()) {
                    format!("{new}{}", &line[old.len()..])
                } else {
                    line.to_string()
                };
                OutLine {
                    text: text.trim_end().to_string(),
                    orig: Some(first + i as u32),
                }
            })
            .collect()
    }

    fn header_end(&self, search_from: usize) -> usize {
        text::header_colon(&self.pu.text, search_from).map_or(search_from, |c| c + 1)
    }

    fn compound_header(&self, stmt: &Stmt, depth: usize) -> Vec<OutLine> {
        let start = pyast::start(stmt);
        let from = pyast::own_exprs(stmt)
            .iter()
            .map(|e| pyast::end(*e))
            .max()
            .unwrap_or(start);
        self.verbatim(start, self.header_end(from), depth)
    }

    fn body_or_pass(&mut self, stmts: &'a [Stmt], depth: usize) -> Vec<OutLine> {
        let lines = self.block(stmts, depth);
        if lines.is_empty() {
            vec![self.synth("pass", depth)]
        } else {
            lines
        }
    }

    fn block(&mut self, stmts: &'a [Stmt], depth: usize) -> Vec<OutLine> {
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(s, depth, &mut out);
        }
        out
    }

    fn stmt(&mut self, stmt: &'a Stmt, depth: usize, out: &mut Vec<OutLine>) {
        if !self.kept(stmt) {
            if matches!(stmt, Stmt::Global(_) | Stmt::Nonlocal(_)) {
                let lines = self.verbatim(pyast::start(stmt), pyast::end(stmt), 1);
                self.hoisted_lines.extend(lines.iter().filter_map(|l| l.orig));
                self.hoisted.extend(lines);
            }
            return;
        }
        match stmt {
            Stmt::If(_) => self.if_chain(stmt, depth, out),
            Stmt::For(_) | Stmt::AsyncFor(_) | Stmt::While(_) => {
                let lv = pyast::LoopView::of(stmt).unwrap();
                out.extend(self.compound_header(stmt, depth));
                let body = self.body_or_pass(lv.body, depth + 1);
                out.extend(body);
                let orelse = self.block(lv.orelse, depth + 1);
                if !orelse.is_empty() {
                    out.push(self.synth("else:", depth));
                    out.extend(orelse);
                }
            }
            Stmt::With(_) | Stmt::AsyncWith(_) => {
                out.extend(self.compound_header(stmt, depth));
                let body = self.body_or_pass(pyast::with_body(stmt).unwrap(), depth + 1);
                out.extend(body);
            }
            Stmt::Try(_) | Stmt::TryStar(_) => self.try_stmt(stmt, depth, out),
            _ => {
                let start = pyast::decorated_start(&self.pu.text, stmt);
                out.extend(self.verbatim(start, pyast::end(stmt), depth));
            }
        }
    }

    fn try_stmt(&mut self, stmt: &'a Stmt, depth: usize, out: &mut Vec<OutLine>) {
        let t = TryView::of(stmt).unwrap();
        let start = pyast::start(stmt);
        out.extend(self.verbatim(start, self.header_end(start), depth));
        let mut body = self.block(t.body, depth + 1);

        let mut handlers = Vec::new();
        for h in t.handlers {
            let (inner, hstart) = pyast::handler_parts(h);
            if !self.kept_at(hstart) {
                continue;
            }
            let from = inner.type_.as_ref().map_or(hstart, |e| pyast::end(e.as_ref()));
            handlers.extend(self.verbatim(hstart, self.header_end(from), depth));
            handlers.extend(self.body_or_pass(&inner.body, depth + 1));
        }
        let orelse = self.block(t.orelse, depth + 1);
        let mut else_lines = Vec::new();
        if handlers.is_empty() {
            body.extend(orelse);
        } else if !orelse.is_empty() {
            else_lines.push(self.synth("else:", depth));
            else_lines.extend(orelse);
        }
        if body.is_empty() {
            body.push(self.synth("pass", depth + 1));
        }

        let mut finally = Vec::new();
        let fnode = self.cfg.finally_anchors.get(&start);
        if fnode.is_some_and(|n| self.keep.contains(n)) {
            let kw = cfg::finally_keyword(&self.pu.text, pyast::start(&t.finalbody[0]));
            finally.push(OutLine {
                text: format!("{}finally:", self.indent(depth)),
                orig: Some(self.pu.file_line(kw)),
            });
            finally.extend(self.body_or_pass(t.finalbody, depth + 1));
        } else if handlers.is_empty() {
            finally.push(self.synth("finally:", depth));
            finally.push(self.synth("pass", depth + 1));
        }

        out.extend(body);
        out.extend(handlers);
        out.extend(else_lines);
        out.extend(finally);
    }

    /// Arms of an `if` and its `elif`s, plus the trailing `else` body.
    fn arms(&self, stmt: &'a Stmt) -> (Vec<Arm<'a>>, &'a [Stmt]) {
        let mut arms = Vec::new();
        let mut cur = stmt;
        loop {
            let Stmt::If(s) = cur else { unreachable!() };
            arms.push(Arm {
                stmt: cur,
                test: &s.test,
                body: &s.body,
            });
            match s.orelse.as_slice() {
                [next @ Stmt::If(_)] if self.pu.text[pyast::start(next)..].starts_with("elif") => {
                    cur = next;
                }
                rest => return (arms, rest),
            }
        }
    }

    /// Emits an if chain. Arms whose bodies are fully dropped are removed
    /// and their conditions conjoined, negated, into the next emitted
    /// header. An else body reduced to a single `if` joins the chain.
    fn if_chain(&mut self, stmt: &'a Stmt, depth: usize, out: &mut Vec<OutLine>) {
        let mut negated: Vec<&Expr> = Vec::new();
        let mut emitted = false;
        let mut cur = stmt;
        let first = self.first_header(stmt, depth);
        'chain: loop {
            let (arms, else_body) = self.arms(cur);
            for arm in arms {
                if !self.kept(arm.stmt) {
                    break 'chain;
                }
                let body = self.block(arm.body, depth + 1);
                if body.is_empty() {
                    negated.push(arm.test);
                    continue;
                }
                let kw = if emitted { "elif" } else { "if" };
                if negated.is_empty() {
                    out.extend(self.arm_header(arm.stmt, kw, depth));
                } else {
                    let mut parts: Vec<String> =
                        negated.iter().map(|e| format!("(not ({}))", self.expr_text(e))).collect();
                    parts.push(format!("({})", self.expr_text(arm.test)));
                    let mut h = self.synth(&format!("{kw} {}:", parts.join(" and ")), depth);
                    h.orig = Some(self.pu.file_line(pyast::start(arm.stmt)));
                    out.push(h);
                }
                out.extend(body);
                emitted = true;
            }

            let kept: Vec<&Stmt> = else_body.iter().filter(|s| self.kept(s)).collect();
            if let [only @ Stmt::If(_)] = kept.as_slice() {
                // hoisting of dropped declarations still applies
                let dropped: Vec<&Stmt> = else_body.iter().filter(|s| !self.kept(s)).collect();
                for s in dropped {
                    self.stmt(s, depth + 1, &mut Vec::new());
                }
                cur = only;
                continue;
            }
            let body = self.block(else_body, depth + 1);
            if !body.is_empty() {
                let header = match negated.len() {
                    0 => "else:".to_string(),
                    1 if !emitted => format!("if not ({}):", self.expr_text(negated[0])),
                    _ => {
                        let kw = if emitted { "elif" } else { "if" };
                        let parts: Vec<String> = negated
                            .iter()
                            .map(|e| format!("(not ({}))", self.expr_text(e)))
                            .collect();
                        format!("{kw} {}:", parts.join(" and "))
                    }
                };
                out.push(self.synth(&header, depth));
                out.extend(body);
                emitted = true;
            }
            break;
        }
        if !emitted {
            out.extend(first);
            out.push(self.synth("pass", depth + 1));
        }
    }

    fn first_header(&self, stmt: &Stmt, depth: usize) -> Vec<OutLine> {
        self.arm_header(stmt, "if", depth)
    }

    /// Original arm header with its keyword replaced by `kw`.
    fn arm_header(&self, stmt: &Stmt, kw: &str, depth: usize) -> Vec<OutLine> {
        let mut lines = self.compound_header(stmt, depth);
        let src_kw = if self.pu.text[pyast::start(stmt)..].starts_with("elif") {
            "elif"
        } else {
            "if"
        };
        if src_kw != kw {
            let ind = self.indent(depth);
            let rest = &lines[0].text[ind.len() + src_kw.len()..];
            lines[0].text = format!("{ind}{kw}{rest}");
        }
        lines
    }

    fn expr_text(&self, e: &Expr) -> &str {
        &self.pu.text[pyast::start(e)..pyast::end(e)]
    }
}

/// Prefix comment carrying a slice's line map.
const HEADER_PREFIX: &str = "# line_map:";

/// Slice file text: a `# line_map: new:orig ...` header line, then the
/// slice source. Header line numbers count from the line after it.
pub fn write_slice_file(slice: &EliminatedSlice) -> String {
    let pairs: Vec<String> = slice
        .line_map
        .iter()
        .map(|(n, o)| format!("{n}:{o}"))
        .collect();
    format!("{HEADER_PREFIX} {}\n{}", pairs.join(" "), slice.source)
}

/// Inverse of [`write_slice_file`].
pub fn read_slice_file(text: &str) -> Result<(BTreeMap<u32, u32>, String), EliminateError> {
    let (header, source) = text.split_once('\n').unwrap_or((text, ""));
    let pairs = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| EliminateError::SliceHeader(header.to_string()))?;
    let mut map = BTreeMap::new();
    for pair in pairs.split_whitespace() {
        let parsed = pair
            .split_once(':')
            .and_then(|(n, o)| Some((n.parse().ok()?, o.parse().ok()?)));
        let (n, o) = parsed.ok_or_else(|| EliminateError::SliceHeader(pair.to_string()))?;
        map.insert(n, o);
    }
    Ok((map, source.to_string()))
}
