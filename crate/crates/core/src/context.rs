//! The basic code slice (the unit plus the same-file definitions it needs)
//! and summarized project-internal dependencies from other files.
//!
//! Resolution is syntactic: names and `self.`/`cls.` attributes read in a
//! definition, matched against same-file definitions and import bindings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rustpython_parser::ast::{Expr, Stmt};
use serde::{Deserialize, Serialize};

use crate::frontend::{parse_source, SourceModule, TargetUnit};
use crate::llm::Gateway;
use crate::prompt::{extract_summary, PromptSet};
use crate::pyast;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyKind {
    Function,
    Class,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    IntraFile,
    ProjectInternal,
    ThirdParty,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefinitionSpan {
    /// Relative to the project root.
    pub path: PathBuf,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyRef {
    pub name: String,
    pub kind: DependencyKind,
    pub origin: Origin,
    /// Absent exactly for third-party refs.
    pub definition_span: Option<DefinitionSpan>,
}

/// Definition text captured from a project file for summarization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedDefinition {
    pub name: String,
    pub kind: DependencyKind,
    pub path: PathBuf,
    /// Verbatim header (`def ...:`, `class ...:`, or the assignment line).
    pub signature: String,
    /// Functions in full; classes as header, docstring and method headers.
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyBundle {
    pub refs: Vec<DependencyRef>,
    pub definitions: Vec<CapturedDefinition>,
    pub warnings: Vec<String>,
}

impl DependencyBundle {
    /// Captured definitions, each preceded by a comment naming its file.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for d in &self.definitions {
            out.push_str(&format!("# {}\n{}\n", d.path.display(), d.text.trim_end()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySummary {
    pub name: String,
    pub signature: String,
    pub description: String,
}

/// What a generation session shows the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceAndDependencies {
    pub slice_source: String,
    pub summaries: Vec<DependencySummary>,
    pub origin_unit: TargetUnit,
}

impl SliceAndDependencies {
    /// Basic slice with the unit's text replaced by `unit_text`.
    pub fn with_unit_text(
        basic_slice: &str,
        unit: &TargetUnit,
        unit_text: &str,
        summaries: Vec<DependencySummary>,
    ) -> Self {
        let slice_source = match basic_slice.find(&unit.source) {
            Some(i) => format!(
                "{}{}{}",
                &basic_slice[..i],
                unit_text,
                &basic_slice[i + unit.source.len()..]
            ),
            None => unit_text.to_string(),
        };
        SliceAndDependencies {
            slice_source,
            summaries,
            origin_unit: unit.clone(),
        }
    }
}

/// A definition directly in the module body or a class body.
struct Item<'a> {
    names: Vec<String>,
    stmt: &'a Stmt,
    lines: (u32, u32),
    /// Index of the enclosing class item, for class members.
    class: Option<usize>,
}

struct ModuleItems<'a> {
    module: &'a SourceModule,
    items: Vec<Item<'a>>,
}

impl<'a> ModuleItems<'a> {
    fn new(module: &'a SourceModule) -> Self {
        let mut m = ModuleItems {
            module,
            items: Vec::new(),
        };
        m.add_body(&module.suite, None);
        m
    }

    fn add_body(&mut self, body: &'a [Stmt], class: Option<usize>) {
        for stmt in body {
            let names = bound_names(stmt);
            if names.is_empty() {
                continue;
            }
            let start = pyast::decorated_start(&self.module.text, stmt);
            let lines = (
                self.module.lines.line_of(start),
                self.module.lines.last_line_of(start, pyast::end(stmt)),
            );
            let idx = self.items.len();
            self.items.push(Item {
                names,
                stmt,
                lines,
                class,
            });
            if let Stmt::ClassDef(c) = stmt {
                self.add_body(&c.body, Some(idx));
            }
        }
    }

    fn header_lines(&self, idx: usize) -> (u32, u32) {
        let item = &self.items[idx];
        let colon = text::header_colon(&self.module.text, pyast::start(item.stmt))
            .unwrap_or(pyast::start(item.stmt));
        (item.lines.0, self.module.lines.line_of(colon))
    }

    fn unit_item(&self, unit: &TargetUnit) -> Option<usize> {
        self.items.iter().position(|i| {
            i.lines == (unit.span.start, unit.span.end)
                && matches!(i.stmt, Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_))
        })
    }

    fn ancestors(&self, mut idx: usize) -> Vec<usize> {
        let mut v = Vec::new();
        while let Some(c) = self.items[idx].class {
            v.push(c);
            idx = c;
        }
        v
    }

    /// Items `idx` refers to: module-level names, and members of its
    /// enclosing classes reached through `self.` / `cls.`.
    fn references(&self, idx: usize) -> Vec<usize> {
        let (names, attrs) = referenced_names(self.items[idx].stmt);
        let classes = self.ancestors(idx);
        let mut out = Vec::new();
        for (j, item) in self.items.iter().enumerate() {
            if j == idx {
                continue;
            }
            let hit = match item.class {
                None => item.names.iter().any(|n| names.contains(n)),
                Some(c) => {
                    classes.first() == Some(&c) && item.names.iter().any(|n| attrs.contains(n))
                }
            };
            if hit {
                out.push(j);
            }
        }
        out
    }
}

fn bound_names(stmt: &Stmt) -> Vec<String> {
    let targets: Vec<&Expr> = match stmt {
        Stmt::FunctionDef(f) => return vec![f.name.to_string()],
        Stmt::AsyncFunctionDef(f) => return vec![f.name.to_string()],
        Stmt::ClassDef(c) => return vec![c.name.to_string()],
        Stmt::Assign(a) => a.targets.iter().collect(),
        Stmt::AnnAssign(a) => vec![&a.target],
        Stmt::AugAssign(a) => vec![&a.target],
        _ => return Vec::new(),
    };
    let mut names = Vec::new();
    for t in targets {
        collect_target_names(t, &mut names);
    }
    names
}

fn collect_target_names(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Name(n) => out.push(n.id.to_string()),
        Expr::Tuple(t) => t.elts.iter().for_each(|x| collect_target_names(x, out)),
        Expr::List(l) => l.elts.iter().for_each(|x| collect_target_names(x, out)),
        Expr::Starred(s) => collect_target_names(&s.value, out),
        _ => {}
    }
}

/// Plain names and `self.` / `cls.` attribute names read anywhere in
/// `stmt`.
fn referenced_names(stmt: &Stmt) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut names = BTreeSet::new();
    let mut attrs = BTreeSet::new();
    pyast::walk_stmt(stmt, &mut |e| match e {
        Expr::Name(n) => {
            names.insert(n.id.to_string());
        }
        Expr::Attribute(a) => {
            if let Expr::Name(root) = a.value.as_ref() {
                if root.id.as_str() == "self" || root.id.as_str() == "cls" {
                    attrs.insert(a.attr.to_string());
                }
            }
        }
        _ => {}
    });
    (names, attrs)
}

/// Dotted attribute chains rooted at a plain name, e.g. `pkg.util.fmt`.
fn referenced_chains(stmt: &Stmt) -> BTreeSet<Vec<String>> {
    let mut chains = BTreeSet::new();
    pyast::walk_stmt(stmt, &mut |e| {
        if let Some(chain) = dotted(e) {
            chains.insert(chain);
        }
    });
    chains
}

fn dotted(e: &Expr) -> Option<Vec<String>> {
    match e {
        Expr::Name(n) => Some(vec![n.id.to_string()]),
        Expr::Attribute(a) => {
            let mut v = dotted(&a.value)?;
            v.push(a.attr.to_string());
            Some(v)
        }
        _ => None,
    }
}

/// Line-selected closure of same-file items for `unit`.
fn internal_closure(items: &ModuleItems, unit: &TargetUnit) -> (Option<usize>, BTreeSet<usize>) {
    let Some(root) = items.unit_item(unit) else {
        return (None, BTreeSet::new());
    };
    let mut included = BTreeSet::new();
    let mut work = vec![root];
    while let Some(i) = work.pop() {
        for j in items.references(i) {
            if j != root && included.insert(j) {
                work.push(j);
            }
        }
    }
    (Some(root), included)
}

/// The unit plus every same-file definition it transitively references, in
/// source order. Methods bring their class headers along.
pub fn collect_internal(module: &SourceModule, unit: &TargetUnit) -> String {
    let items = ModuleItems::new(module);
    let (root, included) = internal_closure(&items, unit);
    let Some(root) = root else {
        return unit.source.clone();
    };
    let mut lines: BTreeSet<u32> = (unit.span.start..=unit.span.end).collect();
    for &i in included.iter().chain(std::iter::once(&root)) {
        let (s, e) = items.items[i].lines;
        lines.extend(s..=e);
        for a in items.ancestors(i) {
            let (hs, he) = items.header_lines(a);
            lines.extend(hs..=he);
        }
    }

    let mut out = String::new();
    let mut prev: Option<u32> = None;
    for &l in &lines {
        if prev.is_some_and(|p| p + 1 != l) && items.items.iter().any(|i| i.class.is_none() && i.lines.0 == l) {
            out.push('\n');
        }
        let span = crate::frontend::LineSpan::new(l, l);
        out.push_str(&module.lines_text(span));
        prev = Some(l);
    }
    out
}

#[derive(Debug, Clone)]
enum Binding {
    Module(String),
    Member(String, String),
}

fn module_dotted(path: &Path) -> Vec<String> {
    path.with_extension("")
        .components()
        .filter_map(|c| match c {
            std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect()
}

/// Absolute dotted module name for `from <level dots><module> import`.
fn absolute_module(current: &Path, level: u32, module: Option<&str>) -> String {
    let mut parts = module_dotted(current);
    parts.pop();
    if level > 0 {
        let keep = parts.len().saturating_sub(level as usize - 1);
        parts.truncate(keep);
    } else {
        parts.clear();
    }
    if let Some(m) = module {
        parts.extend(m.split('.').map(str::to_string));
    }
    parts.join(".")
}

fn import_bindings(stmts: &[&Stmt], current: &Path) -> BTreeMap<String, Binding> {
    let mut out = BTreeMap::new();
    for stmt in stmts {
        match stmt {
            Stmt::Import(i) => {
                for alias in &i.names {
                    let full = alias.name.to_string();
                    match &alias.asname {
                        Some(a) => {
                            out.insert(a.to_string(), Binding::Module(full));
                        }
                        None => {
                            let root = full.split('.').next().unwrap_or(&full).to_string();
                            out.insert(root.clone(), Binding::Module(root));
                        }
                    }
                }
            }
            Stmt::ImportFrom(i) => {
                let level = i.level.as_ref().map_or(0, |l| l.to_u32());
                let module = absolute_module(current, level, i.module.as_ref().map(|m| m.as_str()));
                for alias in &i.names {
                    let name = alias.name.to_string();
                    if name == "*" {
                        continue;
                    }
                    let local = alias.asname.as_ref().map_or(name.clone(), |a| a.to_string());
                    out.insert(local, Binding::Member(module.clone(), name));
                }
            }
            _ => {}
        }
    }
    out
}

struct ProjectResolver<'a> {
    root: &'a Path,
    cache: BTreeMap<PathBuf, Option<SourceModule>>,
    warnings: Vec<String>,
}

enum Resolved {
    Definition(CapturedDefinition, DefinitionSpan),
    /// A project module itself; only its members are dependencies.
    Module,
    ThirdParty,
}

impl ProjectResolver<'_> {
    fn module_file(&self, dotted: &str) -> Option<PathBuf> {
        if dotted.is_empty() {
            return None;
        }
        let rel: PathBuf = dotted.split('.').collect();
        let file = rel.with_extension("py");
        if self.root.join(&file).is_file() {
            return Some(file);
        }
        let init = rel.join("__init__.py");
        self.root.join(&init).is_file().then_some(init)
    }

    fn load(&mut self, rel: &Path) -> Option<&SourceModule> {
        if !self.cache.contains_key(rel) {
            let abs = self.root.join(rel);
            let parsed = match std::fs::read_to_string(&abs) {
                Ok(text) => match parse_source(&text, rel) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        self.warnings.push(format!("{}: {e}; treated as third-party", rel.display()));
                        None
                    }
                },
                Err(e) => {
                    self.warnings.push(format!("{}: {e}; treated as third-party", abs.display()));
                    None
                }
            };
            self.cache.insert(rel.to_path_buf(), parsed);
        }
        self.cache.get(rel).and_then(|m| m.as_ref())
    }

    /// Resolves attribute `rest` chain starting at module `dotted`.
    fn resolve_in_module(&mut self, dotted: &str, rest: &[String], depth: u32) -> Resolved {
        let Some(first) = rest.first() else {
            return match self.module_file(dotted) {
                Some(_) => Resolved::Module,
                None => Resolved::ThirdParty,
            };
        };
        if depth > 4 {
            return Resolved::ThirdParty;
        }
        let sub = format!("{dotted}.{first}");
        let Some(file) = self.module_file(dotted) else {
            return Resolved::ThirdParty;
        };
        let Some(module) = self.load(&file) else {
            return Resolved::ThirdParty;
        };
        if let Some(found) = capture(module, first, &file) {
            return found;
        }
        // re-exported through an import in that module
        let top: Vec<&Stmt> = module.suite.iter().collect();
        let bindings = import_bindings(&top, &file);
        if let Some(b) = bindings.get(first).cloned() {
            return self.resolve_binding(&b, &rest[1..], depth + 1);
        }
        if self.module_file(&sub).is_some() {
            return self.resolve_in_module(&sub, &rest[1..], depth + 1);
        }
        self.warnings.push(format!("{first} not found in {}; treated as third-party", file.display()));
        Resolved::ThirdParty
    }

    fn resolve_binding(&mut self, b: &Binding, rest: &[String], depth: u32) -> Resolved {
        match b {
            Binding::Module(m) => self.resolve_in_module(m, rest, depth),
            Binding::Member(m, name) => {
                if self.module_file(m).is_none() {
                    return Resolved::ThirdParty;
                }
                let sub = format!("{m}.{name}");
                if self.module_file(&sub).is_some() {
                    return self.resolve_in_module(&sub, rest, depth);
                }
                let chain: Vec<String> = std::iter::once(name.clone()).collect();
                self.resolve_in_module(m, &chain, depth)
            }
        }
    }
}

fn capture(module: &SourceModule, name: &str, rel: &Path) -> Option<Resolved> {
    let stmt = module.suite.iter().rev().find(|s| bound_names(s).iter().any(|n| n == name))?;
    let start = pyast::decorated_start(&module.text, stmt);
    let end = pyast::end(stmt);
    let span = DefinitionSpan {
        path: rel.to_path_buf(),
        start_line: module.lines.line_of(start),
        end_line: module.lines.last_line_of(start, end),
    };
    let header_of = |s: &Stmt| {
        let st = pyast::start(s);
        let colon = text::header_colon(&module.text, st).unwrap_or(st);
        module.text[st..=colon].to_string()
    };
    let (kind, signature, text) = match stmt {
        Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_) => (
            DependencyKind::Function,
            header_of(stmt),
            module.text[start..end].to_string(),
        ),
        Stmt::ClassDef(c) => {
            let header = header_of(stmt);
            let mut text = module.text[start..=text::header_colon(&module.text, pyast::start(stmt))?].to_string();
            text.push('\n');
            let indent = c
                .body
                .first()
                .map(|s| line_indent(&module.text, pyast::start(s)).to_string())
                .unwrap_or_else(|| "    ".into());
            let mut members = 0;
            for (i, s) in c.body.iter().enumerate() {
                if i == 0 && pyast::is_docstring(s) {
                    text.push_str(&format!("{indent}{}\n", &module.text[pyast::start(s)..pyast::end(s)]));
                    members += 1;
                } else if matches!(s, Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_)) {
                    text.push_str(&format!("{indent}{} ...\n", header_of(s)));
                    members += 1;
                }
            }
            if members == 0 {
                text.push_str(&format!("{indent}...\n"));
            }
            (DependencyKind::Class, header, text)
        }
        _ => {
            let full = module.text[start..end].to_string();
            let first = full.lines().next().unwrap_or("").to_string();
            (DependencyKind::Variable, first, full)
        }
    };
    Some(Resolved::Definition(
        CapturedDefinition {
            name: name.to_string(),
            kind,
            path: rel.to_path_buf(),
            signature,
            text,
        },
        span,
    ))
}

fn line_indent(text: &str, offset: usize) -> &str {
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    text::leading_whitespace(&text[line_start..])
}

/// Classifies what the basic slice refers to: same-file definitions, and
/// imported names. Imports resolving to files under `project_root` are
/// captured; everything else is third-party and never captured.
pub fn collect_external(project_root: &Path, unit: &TargetUnit) -> DependencyBundle {
    let rel = unit
        .module_path
        .strip_prefix(project_root)
        .unwrap_or(&unit.module_path)
        .to_path_buf();
    let mut bundle = DependencyBundle::default();
    let source = match std::fs::read_to_string(project_root.join(&rel)) {
        Ok(s) => s,
        Err(e) => {
            bundle.warnings.push(format!("{}: {e}", rel.display()));
            return bundle;
        }
    };
    let module = match parse_source(&source, &rel) {
        Ok(m) => m,
        Err(e) => {
            bundle.warnings.push(e.to_string());
            return bundle;
        }
    };
    let items = ModuleItems::new(&module);
    let (root, included) = internal_closure(&items, unit);
    let Some(root) = root else {
        bundle.warnings.push(format!("{} not found in {}", unit.qualified_name, rel.display()));
        return bundle;
    };

    let slice_stmts: Vec<&Stmt> = std::iter::once(root)
        .chain(included.iter().copied())
        .map(|i| items.items[i].stmt)
        .collect();
    let mut import_stmts: Vec<&Stmt> = module
        .suite
        .iter()
        .filter(|s| matches!(s, Stmt::Import(_) | Stmt::ImportFrom(_)))
        .collect();
    for s in &slice_stmts {
        pyast::for_each_stmt(s, &mut |inner| {
            if matches!(inner, Stmt::Import(_) | Stmt::ImportFrom(_)) {
                import_stmts.push(inner);
            }
        });
    }
    let bindings = import_bindings(&import_stmts, &rel);
    let chains: BTreeSet<Vec<String>> = slice_stmts.iter().flat_map(|s| referenced_chains(s)).collect();

    let mut resolver = ProjectResolver {
        root: project_root,
        cache: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let mut refs = BTreeSet::new();
    for &j in &included {
        let item = &items.items[j];
        let kind = match item.stmt {
            Stmt::FunctionDef(_) | Stmt::AsyncFunctionDef(_) => DependencyKind::Function,
            Stmt::ClassDef(_) => DependencyKind::Class,
            _ => DependencyKind::Variable,
        };
        let mut name = item.names.join(", ");
        for a in items.ancestors(j) {
            name = format!("{}.{name}", items.items[a].names[0]);
        }
        refs.insert(DependencyRef {
            name,
            kind,
            origin: Origin::IntraFile,
            definition_span: Some(DefinitionSpan {
                path: rel.clone(),
                start_line: item.lines.0,
                end_line: item.lines.1,
            }),
        });
    }
    let mut seen_defs = BTreeSet::new();
    for chain in &chains {
        let Some(binding) = bindings.get(&chain[0]) else {
            continue;
        };
        // The longest chain wins; shorter prefixes of a resolved chain
        // would only name modules.
        match resolver.resolve_binding(binding, &chain[1..], 0) {
            Resolved::Definition(def, span) => {
                if seen_defs.insert((span.path.clone(), span.start_line)) {
                    refs.insert(DependencyRef {
                        name: def.name.clone(),
                        kind: def.kind,
                        origin: Origin::ProjectInternal,
                        definition_span: Some(span),
                    });
                    bundle.definitions.push(def);
                }
            }
            Resolved::Module => {}
            Resolved::ThirdParty => {
                if chain.len() == 1 || matches!(binding, Binding::Module(_)) {
                    refs.insert(DependencyRef {
                        name: chain[0].clone(),
                        kind: DependencyKind::Variable,
                        origin: Origin::ThirdParty,
                        definition_span: None,
                    });
                }
            }
        }
    }
    bundle.refs = refs.into_iter().collect();
    bundle.definitions.sort_by(|a, b| (&a.path, &a.name).cmp(&(&b.path, &b.name)));
    bundle.warnings.extend(resolver.warnings);
    bundle.warnings.sort();
    bundle.warnings.dedup();
    bundle
}

/// One summary per captured definition, each from a fresh dialogue. Any
/// gateway failure yields no summaries and a warning.
pub fn summarize(
    bundle: &DependencyBundle,
    gateway: &mut Gateway,
    prompts: &PromptSet,
) -> (Vec<DependencySummary>, Vec<String>) {
    let mut out = Vec::new();
    for def in &bundle.definitions {
        let prompt = match prompts.summarize_prompt(&def.text) {
            Ok(p) => p,
            Err(e) => return (Vec::new(), vec![e.to_string()]),
        };
        let mut dialogue = gateway.new_dialogue();
        match gateway.send(&mut dialogue, &prompt) {
            Ok(reply) => out.push(DependencySummary {
                name: def.name.clone(),
                signature: def.signature.clone(),
                description: extract_summary(&reply),
            }),
            Err(e) => {
                let w = format!("summarizing {}: {e}; continuing without summaries", def.name);
                log::warn!("{w}");
                return (Vec::new(), vec![w]);
            }
        }
    }
    (out, Vec::new())
}
