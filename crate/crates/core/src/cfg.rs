//! Statement-level control-flow graphs of target units.
//!
//! One node per simple statement, one per compound-statement header.
//! Expression-level decisions (boolean connectives, conditional expressions,
//! comprehension filters) do not get nodes of their own; each adds a
//! parallel edge from its statement so that `E - N + 2` matches McCabe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rustpython_parser::ast::Stmt;
use thiserror::Error;

use crate::frontend::{ComplexityOptions, SyntaxDiagnostic, TargetUnit};
use crate::pyast::{self, ParsedUnit, TryView};
use crate::text;

pub type NodeId = usize;
pub type Path = Vec<NodeId>;

/// Paths enumerated before [`enumerate_paths`] gives up.
pub const DEFAULT_PATH_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Entry,
    Exit,
    SimpleStmt,
    BranchCond,
    LoopHeader,
    HandlerEntry,
    Noop,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Entry => "entry",
            NodeKind::Exit => "exit",
            NodeKind::SimpleStmt => "simple_stmt",
            NodeKind::BranchCond => "branch_cond",
            NodeKind::LoopHeader => "loop_header",
            NodeKind::HandlerEntry => "handler_entry",
            NodeKind::Noop => "noop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Seq,
    BranchTrue,
    BranchFalse,
    LoopBack,
    LoopExit,
    Exception,
    Jump,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Seq => "seq",
            EdgeKind::BranchTrue => "branch_true",
            EdgeKind::BranchFalse => "branch_false",
            EdgeKind::LoopBack => "loop_back",
            EdgeKind::LoopExit => "loop_exit",
            EdgeKind::Exception => "exception",
            EdgeKind::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Original file lines; empty only for entry and exit.
    pub lines: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CfgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Duplicate of another edge standing for an expression-level decision.
    pub parallel: bool,
}

#[derive(Debug, Error)]
pub enum CfgError {
    #[error(transparent)]
    Syntax(#[from] SyntaxDiagnostic),
    #[error("line {line}: unsupported construct: {construct}")]
    Unsupported { construct: String, line: u32 },
    #[error("more than {cap} paths")]
    PathOverflow { cap: usize },
}

/// Control-flow graph of one target unit.
#[derive(Debug, Clone)]
pub struct FineGrainedCfg {
    pub nodes: Vec<CfgNode>,
    pub edges: Vec<CfgEdge>,
    pub entry: NodeId,
    pub exit: NodeId,
    /// Line to the first node created on it.
    pub line_index: BTreeMap<u32, NodeId>,
    /// Lines of statements no path reaches (code after a jump).
    pub unreachable_lines: BTreeSet<u32>,
    succ: Vec<Vec<NodeId>>,
    pred: Vec<Vec<NodeId>>,
    /// Statement start offset (in the parsed unit text) to its node.
    pub(crate) anchors: HashMap<usize, NodeId>,
    /// `try` statement start offset to its `finally:` node.
    pub(crate) finally_anchors: HashMap<usize, NodeId>,
}

impl FineGrainedCfg {
    /// Distinct successors, ascending.
    pub fn successors(&self, n: NodeId) -> &[NodeId] {
        &self.succ[n]
    }

    /// Distinct predecessors, ascending.
    pub fn predecessors(&self, n: NodeId) -> &[NodeId] {
        &self.pred[n]
    }

    pub fn node_of_line(&self, line: u32) -> Option<NodeId> {
        self.line_index.get(&line).copied()
    }

    /// `E' - N + 2`, where `E'` counts every non-exception edge plus one
    /// edge per handler entry.
    pub fn cyclomatic_number(&self) -> u32 {
        let edges = self
            .edges
            .iter()
            .filter(|e| e.kind != EdgeKind::Exception)
            .count();
        let handlers = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::HandlerEntry)
            .count();
        (edges + handlers + 2 - self.nodes.len()) as u32
    }

    /// Graphviz rendering: node labels are line lists, edge labels kinds.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cfg {\n");
        for n in &self.nodes {
            let label = match n.kind {
                NodeKind::Entry | NodeKind::Exit => n.kind.as_str().to_string(),
                _ => n
                    .lines
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            };
            let shape = match n.kind {
                NodeKind::BranchCond | NodeKind::LoopHeader => "diamond",
                NodeKind::Entry | NodeKind::Exit => "oval",
                _ => "box",
            };
            let _ = writeln!(out, "  n{} [label=\"{}\", shape={}];", n.id, label, shape);
        }
        for e in &self.edges {
            let style = if e.parallel { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"{}];",
                e.src,
                e.dst,
                e.kind.as_str(),
                style
            );
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_cfg(unit: &TargetUnit) -> Result<FineGrainedCfg, CfgError> {
    build_cfg_with(unit, ComplexityOptions::default())
}

pub fn build_cfg_with(
    unit: &TargetUnit,
    opts: ComplexityOptions,
) -> Result<FineGrainedCfg, CfgError> {
    let parsed = unit.parse()?;
    build_from_parsed(&parsed, opts)
}

pub(crate) fn build_from_parsed(
    parsed: &ParsedUnit,
    opts: ComplexityOptions,
) -> Result<FineGrainedCfg, CfgError> {
    let mut b = Builder {
        pu: parsed,
        opts,
        nodes: Vec::new(),
        edges: Vec::new(),
        exit: 1,
        loops: Vec::new(),
        tries: Vec::new(),
        anchors: HashMap::new(),
        finally_anchors: HashMap::new(),
        unreachable: BTreeSet::new(),
        decisions: Vec::new(),
    };
    let entry = b.raw_node(NodeKind::Entry, BTreeSet::new());
    let exit = b.raw_node(NodeKind::Exit, BTreeSet::new());
    let out = b.block(parsed.function().body, vec![(entry, EdgeKind::Seq)])?;
    for (src, kind) in out {
        b.edge(src, exit, kind);
    }
    b.add_decision_edges();
    Ok(b.finish(entry, exit))
}

type Pending = (NodeId, EdgeKind);

struct LoopCtx {
    header: NodeId,
    breaks: Vec<Pending>,
}

struct Builder<'a> {
    pu: &'a ParsedUnit,
    opts: ComplexityOptions,
    nodes: Vec<CfgNode>,
    edges: Vec<CfgEdge>,
    exit: NodeId,
    loops: Vec<LoopCtx>,
    /// Open try regions; every node created inside one is recorded in it.
    tries: Vec<Vec<NodeId>>,
    anchors: HashMap<usize, NodeId>,
    finally_anchors: HashMap<usize, NodeId>,
    unreachable: BTreeSet<u32>,
    decisions: Vec<(NodeId, u32)>,
}

impl Builder<'_> {
    fn raw_node(&mut self, kind: NodeKind, lines: BTreeSet<u32>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(CfgNode { id, kind, lines });
        id
    }

    fn node(&mut self, kind: NodeKind, lines: RangeInclusive<u32>, pending: Vec<Pending>) -> NodeId {
        let id = self.raw_node(kind, lines.collect());
        for (src, k) in pending {
            self.edge(src, id, k);
        }
        for region in &mut self.tries {
            region.push(id);
        }
        id
    }

    fn edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        self.edges.push(CfgEdge {
            src,
            dst,
            kind,
            parallel: false,
        });
    }

    fn header_lines(&self, start: usize, search_from: usize) -> RangeInclusive<u32> {
        let colon = text::header_colon(&self.pu.text, search_from).unwrap_or(search_from);
        self.pu.file_line(start)..=self.pu.file_line(colon)
    }

    fn stmt_lines(&self, stmt: &Stmt) -> RangeInclusive<u32> {
        let start = pyast::decorated_start(&self.pu.text, stmt);
        self.pu.file_line(start)..=self.pu.file_last_line(start, pyast::end(stmt))
    }

    /// Header of a compound statement: from its keyword to the colon after
    /// its last header expression.
    fn compound_header(&self, stmt: &Stmt) -> RangeInclusive<u32> {
        let from = pyast::own_exprs(stmt)
            .iter()
            .map(|e| pyast::end(*e))
            .max()
            .unwrap_or(pyast::start(stmt));
        self.header_lines(pyast::start(stmt), from)
    }

    fn record_decisions(&mut self, n: NodeId, stmt: &Stmt) {
        let count: u32 = pyast::own_exprs(stmt)
            .into_iter()
            .map(|e| pyast::expr_decisions(e, self.opts.count_boolean_operators))
            .sum();
        if count > 0 {
            self.decisions.push((n, count));
        }
    }

    fn block(&mut self, stmts: &[Stmt], mut pending: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        for stmt in stmts {
            if pending.is_empty() {
                let lines = self.stmt_lines(stmt);
                self.unreachable.extend(lines);
                continue;
            }
            pending = self.stmt(stmt, pending)?;
        }
        Ok(pending)
    }

    fn stmt(&mut self, stmt: &Stmt, pending: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let start = pyast::start(stmt);
        match stmt {
            Stmt::If(s) => {
                let n = self.node(NodeKind::BranchCond, self.compound_header(stmt), pending);
                self.anchors.insert(start, n);
                self.record_decisions(n, stmt);
                let mut out = self.block(&s.body, vec![(n, EdgeKind::BranchTrue)])?;
                if s.orelse.is_empty() {
                    out.push((n, EdgeKind::BranchFalse));
                } else {
                    out.extend(self.block(&s.orelse, vec![(n, EdgeKind::BranchFalse)])?);
                }
                Ok(out)
            }
            Stmt::For(_) | Stmt::AsyncFor(_) | Stmt::While(_) => {
                let lv = pyast::LoopView::of(stmt).unwrap();
                let h = self.node(NodeKind::LoopHeader, self.compound_header(stmt), pending);
                self.anchors.insert(start, h);
                self.record_decisions(h, stmt);
                self.loops.push(LoopCtx {
                    header: h,
                    breaks: Vec::new(),
                });
                let body_out = self.block(lv.body, vec![(h, EdgeKind::BranchTrue)])?;
                for (src, _) in body_out {
                    self.edge(src, h, EdgeKind::LoopBack);
                }
                let ctx = self.loops.pop().unwrap();
                let mut out = if lv.orelse.is_empty() {
                    vec![(h, EdgeKind::LoopExit)]
                } else {
                    self.block(lv.orelse, vec![(h, EdgeKind::LoopExit)])?
                };
                out.extend(ctx.breaks);
                Ok(out)
            }
            Stmt::Break(_) | Stmt::Continue(_) => {
                let n = self.node(NodeKind::SimpleStmt, self.stmt_lines(stmt), pending);
                self.anchors.insert(start, n);
                let line = self.pu.file_line(start);
                let Some(ctx) = self.loops.last_mut() else {
                    return Err(CfgError::Unsupported {
                        construct: "break/continue outside a loop".into(),
                        line,
                    });
                };
                if matches!(stmt, Stmt::Break(_)) {
                    ctx.breaks.push((n, EdgeKind::Jump));
                } else {
                    let h = ctx.header;
                    self.edge(n, h, EdgeKind::Jump);
                }
                Ok(Vec::new())
            }
            Stmt::Return(_) | Stmt::Raise(_) => {
                let n = self.node(NodeKind::SimpleStmt, self.stmt_lines(stmt), pending);
                self.anchors.insert(start, n);
                self.record_decisions(n, stmt);
                self.edge(n, self.exit, EdgeKind::Jump);
                Ok(Vec::new())
            }
            Stmt::With(_) | Stmt::AsyncWith(_) => {
                let n = self.node(NodeKind::SimpleStmt, self.compound_header(stmt), pending);
                self.anchors.insert(start, n);
                self.record_decisions(n, stmt);
                self.edge(n, self.exit, EdgeKind::Exception);
                self.block(pyast::with_body(stmt).unwrap(), vec![(n, EdgeKind::Seq)])
            }
            Stmt::Try(_) | Stmt::TryStar(_) => self.try_stmt(stmt, pending),
            Stmt::Match(_) => Err(CfgError::Unsupported {
                construct: "match statement".into(),
                line: self.pu.file_line(start),
            }),
            _ => {
                let n = self.node(NodeKind::SimpleStmt, self.stmt_lines(stmt), pending);
                self.anchors.insert(start, n);
                self.record_decisions(n, stmt);
                Ok(vec![(n, EdgeKind::Seq)])
            }
        }
    }

    fn try_stmt(&mut self, stmt: &Stmt, pending: Vec<Pending>) -> Result<Vec<Pending>, CfgError> {
        let t = TryView::of(stmt).unwrap();
        let start = pyast::start(stmt);
        let line = self.pu.file_line(start);
        let try_node = self.node(NodeKind::Noop, line..=line, pending);
        self.anchors.insert(start, try_node);

        let has_finally = !t.finalbody.is_empty();
        if has_finally {
            self.tries.push(Vec::new());
        }
        self.tries.push(Vec::new());
        let body_out = self.block(t.body, vec![(try_node, EdgeKind::Seq)])?;
        let body_nodes = self.tries.pop().unwrap();

        let mut out = Vec::new();
        for h in t.handlers {
            let (inner, hstart) = pyast::handler_parts(h);
            let from = inner.type_.as_ref().map_or(hstart, |e| pyast::end(e.as_ref()));
            let lines = self.header_lines(hstart, from);
            let hn = self.node(NodeKind::HandlerEntry, lines, Vec::new());
            self.anchors.insert(hstart, hn);
            for &src in &body_nodes {
                self.edge(src, hn, EdgeKind::Exception);
            }
            out.extend(self.block(&inner.body, vec![(hn, EdgeKind::Seq)])?);
        }
        if t.orelse.is_empty() {
            out.extend(body_out);
        } else {
            out.extend(self.block(t.orelse, body_out)?);
        }
        if !has_finally {
            return Ok(out);
        }

        let guarded = self.tries.pop().unwrap();
        let kw = finally_keyword(&self.pu.text, pyast::start(&t.finalbody[0]));
        let fline = self.pu.file_line(kw);
        let fnode = self.node(NodeKind::Noop, fline..=fline, out);
        self.finally_anchors.insert(start, fnode);
        for src in guarded {
            self.edge(src, fnode, EdgeKind::Exception);
        }
        let fin_out = self.block(t.finalbody, vec![(fnode, EdgeKind::Seq)])?;
        // A finally entered by an exception re-raises after its body.
        for &(src, _) in &fin_out {
            self.edge(src, self.exit, EdgeKind::Exception);
        }
        Ok(fin_out)
    }

    fn add_decision_edges(&mut self) {
        for (n, count) in std::mem::take(&mut self.decisions) {
            let Some(first) = self
                .edges
                .iter()
                .find(|e| e.src == n && e.kind != EdgeKind::Exception)
                .copied()
            else {
                continue;
            };
            for _ in 0..count {
                self.edges.push(CfgEdge {
                    parallel: true,
                    ..first
                });
            }
        }
    }

    fn finish(self, entry: NodeId, exit: NodeId) -> FineGrainedCfg {
        let n = self.nodes.len();
        let mut succ: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
        let mut pred: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
        for e in &self.edges {
            succ[e.src].insert(e.dst);
            pred[e.dst].insert(e.src);
        }
        let mut line_index = BTreeMap::new();
        for node in &self.nodes {
            for &l in &node.lines {
                line_index.entry(l).or_insert(node.id);
            }
        }
        FineGrainedCfg {
            nodes: self.nodes,
            edges: self.edges,
            entry,
            exit,
            line_index,
            unreachable_lines: self.unreachable,
            succ: succ.into_iter().map(|s| s.into_iter().collect()).collect(),
            pred: pred.into_iter().map(|s| s.into_iter().collect()).collect(),
            anchors: self.anchors,
            finally_anchors: self.finally_anchors,
        }
    }
}

/// Offset of the `finally` keyword heading a body whose first statement
/// starts at `body_start`.
pub(crate) fn finally_keyword(text: &str, body_start: usize) -> usize {
    let mut end = body_start;
    while let Some(i) = text[..end].rfind("finally") {
        let after = text[i + 7..].trim_start_matches([' ', '\t']);
        if text::starts_line(text, i) && after.starts_with(':') {
            return i;
        }
        end = i;
    }
    body_start
}

/// All entry-to-exit paths in which every edge closing a cycle is taken at
/// most `max_loop_unroll` times, sorted lexicographically.
pub fn enumerate_paths(cfg: &FineGrainedCfg, max_loop_unroll: u32) -> Result<Vec<Path>, CfgError> {
    enumerate_paths_capped(cfg, max_loop_unroll, DEFAULT_PATH_CAP)
}

pub fn enumerate_paths_capped(
    cfg: &FineGrainedCfg,
    max_loop_unroll: u32,
    cap: usize,
) -> Result<Vec<Path>, CfgError> {
    let mut walk = PathWalk {
        cfg,
        unroll: max_loop_unroll,
        cap,
        on_path: vec![0; cfg.nodes.len()],
        back_taken: HashMap::new(),
        current: vec![cfg.entry],
        out: Vec::new(),
    };
    walk.on_path[cfg.entry] = 1;
    walk.visit(cfg.entry)?;
    let mut paths = walk.out;
    paths.sort();
    Ok(paths)
}

struct PathWalk<'a> {
    cfg: &'a FineGrainedCfg,
    unroll: u32,
    cap: usize,
    on_path: Vec<u32>,
    back_taken: HashMap<(NodeId, NodeId), u32>,
    current: Vec<NodeId>,
    out: Vec<Path>,
}

impl PathWalk<'_> {
    fn visit(&mut self, n: NodeId) -> Result<(), CfgError> {
        if n == self.cfg.exit {
            if self.out.len() >= self.cap {
                return Err(CfgError::PathOverflow { cap: self.cap });
            }
            self.out.push(self.current.clone());
            return Ok(());
        }
        for &m in self.cfg.successors(n) {
            let back = self.on_path[m] > 0;
            if back {
                let taken = self.back_taken.entry((n, m)).or_insert(0);
                if *taken >= self.unroll {
                    continue;
                }
                *taken += 1;
            }
            self.on_path[m] += 1;
            self.current.push(m);
            let r = self.visit(m);
            self.current.pop();
            self.on_path[m] -= 1;
            if back {
                *self.back_taken.get_mut(&(n, m)).unwrap() -= 1;
            }
            r?;
        }
        Ok(())
    }
}
