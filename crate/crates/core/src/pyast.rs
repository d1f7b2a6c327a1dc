//! Thin helpers over the `rustpython-parser` AST.

use rustpython_parser::ast::{self, Expr, Ranged, Stmt};
use rustpython_parser::text_size::TextRange;
use rustpython_parser::Mode;

use crate::frontend::SyntaxDiagnostic;
use crate::text::LineIndex;

pub(crate) fn parse_suite(text: &str, path: &str) -> Result<Vec<Stmt>, SyntaxDiagnostic> {
    match rustpython_parser::parse(text, Mode::Module, path) {
        Ok(ast::Mod::Module(m)) => Ok(m.body),
        Ok(_) => unreachable!("module mode yields a module"),
        Err(err) => {
            let idx = LineIndex::new(text);
            let offset = (err.offset.to_usize()).min(text.len());
            Err(SyntaxDiagnostic {
                path: path.to_string(),
                line: idx.line_of(offset),
                column: idx.column_of(offset),
                message: err.error.to_string(),
            })
        }
    }
}

pub(crate) fn start(node: &impl Ranged) -> usize {
    node.range().start().to_usize()
}

pub(crate) fn end(node: &impl Ranged) -> usize {
    node.range().end().to_usize()
}

/// Function and async function definitions viewed uniformly.
#[derive(Clone, Copy)]
pub(crate) struct FunctionView<'a> {
    pub name: &'a str,
    pub body: &'a [Stmt],
    pub decorators: &'a [Expr],
    pub args: &'a ast::Arguments,
    pub returns: Option<&'a Expr>,
}

impl<'a> FunctionView<'a> {
    pub fn of(stmt: &'a Stmt) -> Option<Self> {
        match stmt {
            Stmt::FunctionDef(f) => Some(FunctionView {
                name: f.name.as_str(),
                body: &f.body,
                decorators: &f.decorator_list,
                args: &f.args,
                returns: f.returns.as_deref(),
            }),
            Stmt::AsyncFunctionDef(f) => Some(FunctionView {
                name: f.name.as_str(),
                body: &f.body,
                decorators: &f.decorator_list,
                args: &f.args,
                returns: f.returns.as_deref(),
            }),
            _ => None,
        }
    }
}

/// Offset where a (possibly decorated) definition begins: the `@` of its
/// first decorator, or the statement itself.
pub(crate) fn decorated_start(text: &str, stmt: &Stmt) -> usize {
    let decorators: &[Expr] = match stmt {
        Stmt::FunctionDef(f) => &f.decorator_list,
        Stmt::AsyncFunctionDef(f) => &f.decorator_list,
        Stmt::ClassDef(c) => &c.decorator_list,
        _ => &[],
    };
    match decorators.first() {
        Some(d) => {
            let before = &text[..start(d)];
            before.rfind('@').unwrap_or_else(|| start(d))
        }
        None => start(stmt),
    }
}

/// True for a string-literal expression statement (a docstring candidate).
pub(crate) fn is_docstring(stmt: &Stmt) -> bool {
    matches!(stmt, Stmt::Expr(e) if matches!(
        e.value.as_ref(),
        Expr::Constant(c) if matches!(c.value, ast::Constant::Str(_))
    ))
}

/// Calls `f` on every direct sub-expression of `expr`.
pub(crate) fn child_exprs<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    match expr {
        Expr::BoolOp(e) => e.values.iter().for_each(f),
        Expr::NamedExpr(e) => {
            f(&e.target);
            f(&e.value);
        }
        Expr::BinOp(e) => {
            f(&e.left);
            f(&e.right);
        }
        Expr::UnaryOp(e) => f(&e.operand),
        Expr::Lambda(e) => {
            arg_defaults(&e.args, f);
            f(&e.body);
        }
        Expr::IfExp(e) => {
            f(&e.test);
            f(&e.body);
            f(&e.orelse);
        }
        Expr::Dict(e) => {
            e.keys.iter().flatten().for_each(&mut *f);
            e.values.iter().for_each(f);
        }
        Expr::Set(e) => e.elts.iter().for_each(f),
        Expr::ListComp(e) => {
            f(&e.elt);
            comprehension_exprs(&e.generators, f);
        }
        Expr::SetComp(e) => {
            f(&e.elt);
            comprehension_exprs(&e.generators, f);
        }
        Expr::DictComp(e) => {
            f(&e.key);
            f(&e.value);
            comprehension_exprs(&e.generators, f);
        }
        Expr::GeneratorExp(e) => {
            f(&e.elt);
            comprehension_exprs(&e.generators, f);
        }
        Expr::Await(e) => f(&e.value),
        Expr::Yield(e) => {
            if let Some(v) = &e.value {
                f(v)
            }
        }
        Expr::YieldFrom(e) => f(&e.value),
        Expr::Compare(e) => {
            f(&e.left);
            e.comparators.iter().for_each(f);
        }
        Expr::Call(e) => {
            f(&e.func);
            e.args.iter().for_each(&mut *f);
            e.keywords.iter().for_each(|k| f(&k.value));
        }
        Expr::FormattedValue(e) => {
            f(&e.value);
            if let Some(spec) = &e.format_spec {
                f(spec)
            }
        }
        Expr::JoinedStr(e) => e.values.iter().for_each(f),
        Expr::Constant(_) | Expr::Name(_) => {}
        Expr::Attribute(e) => f(&e.value),
        Expr::Subscript(e) => {
            f(&e.value);
            f(&e.slice);
        }
        Expr::Starred(e) => f(&e.value),
        Expr::List(e) => e.elts.iter().for_each(f),
        Expr::Tuple(e) => e.elts.iter().for_each(f),
        Expr::Slice(e) => {
            for part in [&e.lower, &e.upper, &e.step].into_iter().flatten() {
                f(part)
            }
        }
    }
}

fn comprehension_exprs<'a>(gens: &'a [ast::Comprehension], f: &mut dyn FnMut(&'a Expr)) {
    for g in gens {
        f(&g.target);
        f(&g.iter);
        g.ifs.iter().for_each(&mut *f);
    }
}

fn arg_defaults<'a>(args: &'a ast::Arguments, f: &mut dyn FnMut(&'a Expr)) {
    for a in args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs) {
        if let Some(d) = &a.default {
            f(d)
        }
    }
}

fn arg_annotations<'a>(args: &'a ast::Arguments, f: &mut dyn FnMut(&'a Expr)) {
    let plain = args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs).map(|a| &a.def);
    let star = args.vararg.iter().chain(&args.kwarg).map(|a| a.as_ref());
    for a in plain.chain(star) {
        if let Some(ann) = &a.annotation {
            f(ann)
        }
    }
}

/// Expression-level decision points (boolean connectives, conditional
/// expressions, comprehension filters). Lambda bodies are not entered.
pub(crate) fn expr_decisions(expr: &Expr, count_boolean_operators: bool) -> u32 {
    let own = match expr {
        Expr::BoolOp(e) if count_boolean_operators => e.values.len() as u32 - 1,
        Expr::IfExp(_) => 1,
        Expr::ListComp(e) => comprehension_ifs(&e.generators),
        Expr::SetComp(e) => comprehension_ifs(&e.generators),
        Expr::DictComp(e) => comprehension_ifs(&e.generators),
        Expr::GeneratorExp(e) => comprehension_ifs(&e.generators),
        Expr::Lambda(_) => return 0,
        _ => 0,
    };
    let mut nested = 0;
    child_exprs(expr, &mut |c| nested += expr_decisions(c, count_boolean_operators));
    own + nested
}

fn comprehension_ifs(gens: &[ast::Comprehension]) -> u32 {
    gens.iter().map(|g| g.ifs.len() as u32).sum()
}

/// Expressions a statement evaluates itself, excluding nested bodies and
/// anything inside nested function or class definitions.
pub(crate) fn own_exprs(stmt: &Stmt) -> Vec<&Expr> {
    match stmt {
        Stmt::Return(s) => s.value.iter().map(|v| v.as_ref()).collect(),
        Stmt::Delete(s) => s.targets.iter().collect(),
        Stmt::Assign(s) => s.targets.iter().chain(std::iter::once(s.value.as_ref())).collect(),
        Stmt::AugAssign(s) => vec![&s.target, &s.value],
        Stmt::AnnAssign(s) => {
            let mut v: Vec<&Expr> = vec![&s.target];
            if let Some(val) = &s.value {
                v.push(val);
            }
            v
        }
        Stmt::For(s) => vec![&s.target, &s.iter],
        Stmt::AsyncFor(s) => vec![&s.target, &s.iter],
        Stmt::While(s) => vec![&s.test],
        Stmt::If(s) => vec![&s.test],
        Stmt::With(s) => with_exprs(&s.items),
        Stmt::AsyncWith(s) => with_exprs(&s.items),
        Stmt::Match(s) => vec![&s.subject],
        Stmt::Raise(s) => s.exc.iter().chain(s.cause.iter()).map(|e| e.as_ref()).collect(),
        Stmt::Assert(s) => std::iter::once(s.test.as_ref())
            .chain(s.msg.iter().map(|m| m.as_ref()))
            .collect(),
        Stmt::Expr(s) => vec![&s.value],
        _ => Vec::new(),
    }
}

fn with_exprs(items: &[ast::WithItem]) -> Vec<&Expr> {
    let mut v = Vec::new();
    for item in items {
        v.push(&item.context_expr);
        if let Some(vars) = &item.optional_vars {
            v.push(vars.as_ref());
        }
    }
    v
}

/// Handler type expression for both `except` and `except*` handlers.
pub(crate) fn handler_parts(h: &ast::ExceptHandler) -> (&ast::ExceptHandlerExceptHandler, usize) {
    let ast::ExceptHandler::ExceptHandler(inner) = h;
    (inner, inner.range.start().to_usize())
}

/// Uniform view over `try` and `try*` statements.
pub(crate) struct TryView<'a> {
    pub body: &'a [Stmt],
    pub handlers: &'a [ast::ExceptHandler],
    pub orelse: &'a [Stmt],
    pub finalbody: &'a [Stmt],
}

impl<'a> TryView<'a> {
    pub fn of(stmt: &'a Stmt) -> Option<Self> {
        match stmt {
            Stmt::Try(t) => Some(TryView {
                body: &t.body,
                handlers: &t.handlers,
                orelse: &t.orelse,
                finalbody: &t.finalbody,
            }),
            Stmt::TryStar(t) => Some(TryView {
                body: &t.body,
                handlers: &t.handlers,
                orelse: &t.orelse,
                finalbody: &t.finalbody,
            }),
            _ => None,
        }
    }
}

/// Uniform view over `for` / `async for` / `while`.
pub(crate) struct LoopView<'a> {
    pub body: &'a [Stmt],
    pub orelse: &'a [Stmt],
}

impl<'a> LoopView<'a> {
    pub fn of(stmt: &'a Stmt) -> Option<Self> {
        match stmt {
            Stmt::For(s) => Some(LoopView {
                body: &s.body,
                orelse: &s.orelse,
            }),
            Stmt::AsyncFor(s) => Some(LoopView {
                body: &s.body,
                orelse: &s.orelse,
            }),
            Stmt::While(s) => Some(LoopView {
                body: &s.body,
                orelse: &s.orelse,
            }),
            _ => None,
        }
    }
}

pub(crate) fn with_body(stmt: &Stmt) -> Option<&[Stmt]> {
    match stmt {
        Stmt::With(s) => Some(&s.body),
        Stmt::AsyncWith(s) => Some(&s.body),
        _ => None,
    }
}

/// A parsed target unit. Indented (method) sources are parsed under a
/// synthetic `if 1:` wrapper so offsets refer to `text`, which is the unit
/// source with that wrapper prepended.
pub(crate) struct ParsedUnit {
    pub text: String,
    pub lines: LineIndex,
    line_delta: i64,
    suite: Vec<Stmt>,
    wrapped: bool,
    pub base_indent: String,
}

const WRAPPER: &str = "if 1:\n";

impl ParsedUnit {
    /// Parses unit source whose first line is `first_line` in its file.
    pub fn parse(source: &str, first_line: u32, path: &str) -> Result<Self, SyntaxDiagnostic> {
        let first = source.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let base_indent = crate::text::leading_whitespace(first).to_string();
        let wrapped = !base_indent.is_empty();
        let text = if wrapped {
            format!("{WRAPPER}{source}")
        } else {
            source.to_string()
        };
        let wrapper_lines = if wrapped { 1 } else { 0 };
        let line_delta = first_line as i64 - 1 - wrapper_lines;
        let suite = parse_suite(&text, path).map_err(|mut d| {
            d.line = (d.line as i64 + line_delta).max(1) as u32;
            d
        })?;
        let parsed = ParsedUnit {
            lines: LineIndex::new(&text),
            text,
            line_delta,
            suite,
            wrapped,
            base_indent,
        };
        let defs = parsed.top_level();
        let ok = defs.len() == 1 && FunctionView::of(&defs[0]).is_some();
        if !ok {
            return Err(SyntaxDiagnostic {
                path: path.to_string(),
                line: first_line,
                column: 1,
                message: "expected exactly one function definition".into(),
            });
        }
        Ok(parsed)
    }

    fn top_level(&self) -> &[Stmt] {
        if self.wrapped {
            match self.suite.first() {
                Some(Stmt::If(i)) => &i.body,
                _ => &[],
            }
        } else {
            &self.suite
        }
    }

    pub fn def_stmt(&self) -> &Stmt {
        &self.top_level()[0]
    }

    pub fn function(&self) -> FunctionView<'_> {
        FunctionView::of(self.def_stmt()).expect("checked at parse time")
    }

    pub fn file_line(&self, offset: usize) -> u32 {
        (self.lines.line_of(offset) as i64 + self.line_delta) as u32
    }

    pub fn file_last_line(&self, start: usize, end: usize) -> u32 {
        (self.lines.last_line_of(start, end) as i64 + self.line_delta) as u32
    }

    /// File lines covered by a node, first to last.
    pub fn file_lines(&self, range: TextRange) -> std::ops::RangeInclusive<u32> {
        let s = range.start().to_usize();
        let e = range.end().to_usize();
        self.file_line(s)..=self.file_last_line(s, e)
    }
}

/// Calls `f` on every expression reachable from `stmt`, nested bodies and
/// nested definitions included. Match patterns are not entered.
pub(crate) fn walk_stmt<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    let walk_body = |body: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)| {
        for s in body {
            walk_stmt(s, f);
        }
    };
    for e in own_exprs(stmt) {
        walk_expr(e, f);
    }
    match stmt {
        Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_) => {
            let fv = FunctionView::of(stmt).unwrap();
            for d in fv.decorators {
                walk_expr(d, f);
            }
            let mut defaults = Vec::new();
            arg_defaults(fv.args, &mut |e| defaults.push(e));
            for d in defaults {
                walk_expr(d, f);
            }
            arg_annotations(fv.args, &mut |e| walk_expr(e, f));
            if let Some(r) = fv.returns {
                walk_expr(r, f);
            }
            walk_body(fv.body, f);
        }
        Stmt::ClassDef(c) => {
            for e in c.decorator_list.iter().chain(&c.bases) {
                walk_expr(e, f);
            }
            for k in &c.keywords {
                walk_expr(&k.value, f);
            }
            walk_body(&c.body, f);
        }
        Stmt::If(s) => {
            walk_body(&s.body, f);
            walk_body(&s.orelse, f);
        }
        Stmt::AnnAssign(s) => walk_expr(&s.annotation, f),
        Stmt::Match(m) => {
            for c in &m.cases {
                if let Some(g) = &c.guard {
                    walk_expr(g, f);
                }
                walk_body(&c.body, f);
            }
        }
        _ => {
            if let Some(l) = LoopView::of(stmt) {
                walk_body(l.body, f);
                walk_body(l.orelse, f);
            } else if let Some(t) = TryView::of(stmt) {
                walk_body(t.body, f);
                for h in t.handlers {
                    let (inner, _) = handler_parts(h);
                    if let Some(ty) = &inner.type_ {
                        walk_expr(ty, f);
                    }
                    walk_body(&inner.body, f);
                }
                walk_body(t.orelse, f);
                walk_body(t.finalbody, f);
            } else if let Some(body) = with_body(stmt) {
                walk_body(body, f);
            }
        }
    }
}

/// Calls `f` on `expr` and every expression nested in it.
pub(crate) fn walk_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    child_exprs(expr, &mut |c| walk_expr(c, f));
}

/// Calls `f` on `stmt` and every statement nested in it, nested
/// definitions included.
pub(crate) fn for_each_stmt<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Stmt)) {
    f(stmt);
    let bodies: Vec<&'a [Stmt]> = match stmt {
        Stmt::FunctionDef(s) => vec![&s.body],
        Stmt::AsyncFunctionDef(s) => vec![&s.body],
        Stmt::ClassDef(s) => vec![&s.body],
        Stmt::If(s) => vec![&s.body, &s.orelse],
        Stmt::Match(m) => m.cases.iter().map(|c| c.body.as_slice()).collect(),
        _ => {
            if let Some(l) = LoopView::of(stmt) {
                vec![l.body, l.orelse]
            } else if let Some(t) = TryView::of(stmt) {
                let mut v = vec![t.body, t.orelse, t.finalbody];
                v.extend(t.handlers.iter().map(|h| handler_parts(h).0.body.as_slice()));
                v
            } else {
                with_body(stmt).into_iter().collect()
            }
        }
    };
    for body in bodies {
        for s in body {
            for_each_stmt(s, f);
        }
    }
}
