//! Command-line surface. Exit codes: 0 complete, 1 some unit exhausted
//! without full coverage, 2 usage or configuration error, 3 infrastructure
//! error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::cfg::build_cfg;
use crate::context::{collect_external, collect_internal, summarize};
use crate::engine::{Engine, FailureKind};
use crate::eliminate::{eliminate, write_slice_file};
use crate::frontend::{enumerate_target_units, parse_source, TargetUnit};
use crate::llm::{Gateway, LlmError, LlmMode, MockClient, ReplayClient, Transcript};
use crate::prompt::PromptSet;
use crate::store::{build_report, Ablation, RunConfig, TargetRecord};
use crate::validation::{ShimValidator, SHIM_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EXHAUSTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFRA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "covelim", version, about = "Coverage-guided test generation for complex Python methods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List qualifying methods and write one record skeleton per method.
    Analyze(AnalyzeArgs),
    /// Eliminate covered code from one method and print the slice.
    Eliminate(EliminateArgs),
    /// Run the generation pipeline for one or more records.
    Generate(GenerateArgs),
    /// Summarize coverage and pass rate of finished records.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub project_root: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub min_lines: u32,
    #[arg(long, default_value_t = 10)]
    pub min_complexity: u32,
    /// Where records go; without it only the listing is printed.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// A unit named by record, or by file and qualified name.
#[derive(Debug, Args)]
pub struct UnitArgs {
    #[arg(long, conflicts_with_all = ["file", "function"])]
    pub record: Option<PathBuf>,
    #[arg(long, requires = "function")]
    pub file: Option<PathBuf>,
    #[arg(long, requires = "file")]
    pub function: Option<String>,
    /// Root for `--file`; defaults to the file's directory.
    #[arg(long)]
    pub project_root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EliminateArgs {
    #[command(flatten)]
    pub unit: UnitArgs,
    /// Comma-separated uncovered lines; empty keeps the whole unit.
    #[arg(long, default_value = "")]
    pub uncov: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the CFG in DOT format here.
    #[arg(long)]
    pub dump_cfg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Records to run; repeatable.
    #[arg(long = "record", conflicts_with_all = ["file", "function"])]
    pub records: Vec<PathBuf>,
    #[arg(long, requires = "function")]
    pub file: Option<PathBuf>,
    #[arg(long, requires = "file")]
    pub function: Option<String>,
    #[arg(long)]
    pub project_root: Option<PathBuf>,
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub llm: Option<LlmMode>,
    /// Replay source in replay mode; otherwise where exchanges are saved.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// JSON array of replies for mock mode, served in order per unit.
    #[arg(long)]
    pub mock_replies: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub iteration_limit: Option<u32>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub token_limit: Option<usize>,
    /// Replacement for the initial prompt template.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Validation shim command; defaults to $COVELIM_SHIM.
    #[arg(long)]
    pub shim: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "covelim-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Record files, or directories of them.
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(m: impl ToString) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    fn infra(m: impl ToString) -> Self {
        CliError {
            code: EXIT_INFRA,
            message: m.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the command, writing to
/// `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Eliminate(a) => cmd_eliminate(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn python_files(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            e.depth() == 0 || !(name.starts_with('.') || name == "__pycache__")
        })
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("{err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "py"))
        .map(|e| e.path().to_path_buf())
        .collect();
    files.sort();
    files
}

/// Qualifying units across the project, with module paths relative to
/// `root`. Unreadable or unparsable files are skipped with a warning.
pub fn analyze_project(root: &Path, min_lines: u32, min_complexity: u32) -> (Vec<TargetUnit>, Vec<String>) {
    let mut units = Vec::new();
    let mut warnings = Vec::new();
    for path in python_files(root) {
        let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                warnings.push(format!("{}: {e}; skipped", rel.display()));
                continue;
            }
        };
        match parse_source(&text, &rel) {
            Ok(m) => units.extend(enumerate_target_units(&m, min_lines, min_complexity)),
            Err(e) => warnings.push(format!("{e}; skipped")),
        }
    }
    (units, warnings)
}

/// Fills the basic slice and dependency bundle from the project files.
fn prepare_record(root: &Path, unit: TargetUnit) -> Result<TargetRecord, CliError> {
    let text = std::fs::read_to_string(root.join(&unit.module_path))
        .map_err(|e| CliError::usage(format!("{}: {e}", unit.module_path.display())))?;
    let module = parse_source(&text, &unit.module_path).map_err(CliError::usage)?;
    let mut record = TargetRecord::skeleton(root, unit);
    record.basic_slice = Some(collect_internal(&module, &record.unit));
    let bundle = collect_external(root, &record.unit);
    record.warnings.extend(bundle.warnings.iter().cloned());
    record.dependencies = Some(bundle);
    Ok(record)
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn std::io::Write) -> Result<i32, CliError> {
    if !a.project_root.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", a.project_root.display())));
    }
    let (units, warnings) = analyze_project(&a.project_root, a.min_lines, a.min_complexity);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for u in units {
        let _ = writeln!(
            out,
            "{}:{}\tlines={}\tcomplexity={}\tspan={}-{}",
            u.module_path.display(),
            u.qualified_name,
            u.line_count,
            u.complexity,
            u.span.start,
            u.span.end
        );
        if let Some(dir) = &a.out_dir {
            let record = prepare_record(&a.project_root, u)?;
            record.save(dir).map_err(CliError::infra)?;
        }
    }
    Ok(EXIT_OK)
}

fn load_unit(u: &UnitArgs) -> Result<(PathBuf, TargetUnit), CliError> {
    if let Some(path) = &u.record {
        let r = TargetRecord::load(path).map_err(CliError::usage)?;
        return Ok((r.project_root, r.unit));
    }
    match (&u.file, &u.function) {
        (Some(file), Some(function)) => unit_from_file(file, function, u.project_root.as_deref()),
        _ => Err(CliError::usage("name a unit with --record, or --file and --function")),
    }
}

fn unit_from_file(file: &Path, function: &str, root: Option<&Path>) -> Result<(PathBuf, TargetUnit), CliError> {
    let root = root
        .map(Path::to_path_buf)
        .or_else(|| file.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let rel = file.strip_prefix(&root).unwrap_or(file).to_path_buf();
    let text = std::fs::read_to_string(file).map_err(|e| CliError::usage(format!("{}: {e}", file.display())))?;
    let module = parse_source(&text, &rel).map_err(CliError::usage)?;
    let def = module
        .definition(function)
        .ok_or_else(|| CliError::usage(format!("{function} not found in {}", file.display())))?;
    let unit = module.target_unit(def).map_err(CliError::usage)?;
    Ok((root, unit))
}

fn parse_lines(list: &str) -> Result<BTreeSet<u32>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|_| CliError::usage(format!("bad line number {s:?}"))))
        .collect()
}

fn cmd_eliminate(a: &EliminateArgs, out: &mut dyn std::io::Write) -> Result<i32, CliError> {
    let (_, unit) = load_unit(&a.unit)?;
    let uncov = parse_lines(&a.uncov)?;
    if let Some(path) = &a.dump_cfg {
        let cfg = build_cfg(&unit).map_err(CliError::usage)?;
        std::fs::write(path, cfg.to_dot()).map_err(|e| CliError::infra(format!("{}: {e}", path.display())))?;
    }
    let slice = eliminate(&unit, &uncov).map_err(CliError::usage)?;
    for w in &slice.warnings {
        eprintln!("warning: {w}");
    }
    let text = write_slice_file(&slice);
    match &a.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| CliError::infra(format!("{}: {e}", path.display())))?,
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    Ok(EXIT_OK)
}

fn run_config(a: &GenerateArgs) -> Result<RunConfig, CliError> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p).map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.llm {
        c.llm.mode = m;
    }
    if let Some(v) = a.ablation {
        c.ablation = v;
    }
    if let Some(v) = a.iteration_limit {
        c.iteration_limit = v;
    }
    if let Some(v) = &a.model {
        c.llm.model_id = v.clone();
    }
    if let Some(v) = a.temperature {
        c.llm.temperature = v;
    }
    if let Some(v) = a.token_limit {
        c.llm.token_limit = v;
    }
    if let Some(v) = a.workers {
        c.workers = v;
    }
    if c.llm.mode == LlmMode::Replay {
        c.llm.transcript_path = a.transcript.clone();
    }
    c.validate().map_err(CliError::usage)?;
    Ok(c)
}

/// How each unit's gateway is built.
enum ClientSource {
    Mock(Vec<String>),
    Replay(Option<Transcript>),
    Live,
}

impl ClientSource {
    fn gateway(&self, config: &RunConfig, record: &TargetRecord) -> Result<Gateway, LlmError> {
        let llm = config.llm.clone();
        match self {
            ClientSource::Mock(replies) => Ok(Gateway::with_client(llm, Box::new(MockClient::new(replies.clone())))),
            ClientSource::Replay(Some(t)) => Ok(Gateway::with_client(llm, Box::new(ReplayClient::new(t)))),
            ClientSource::Replay(None) => {
                let t = Transcript {
                    entries: record.transcript.clone(),
                };
                Ok(Gateway::with_client(llm, Box::new(ReplayClient::new(&t))))
            }
            ClientSource::Live => Gateway::new(llm),
        }
    }
}

/// Runs dependency summarization and the pipeline for one record.
fn generate_one(
    mut record: TargetRecord,
    config: &RunConfig,
    source: &ClientSource,
    prompts: &PromptSet,
    shim: &ShimValidator,
) -> Result<TargetRecord, CliError> {
    let mut gateway = source.gateway(config, &record).map_err(CliError::usage)?;
    let root = record.project_root.clone();
    if record.basic_slice.is_none() || record.dependencies.is_none() {
        let prepared = prepare_record(&root, record.unit.clone())?;
        record.basic_slice = prepared.basic_slice;
        record.dependencies = prepared.dependencies;
        record.warnings.extend(prepared.warnings);
    }
    record.summaries.clear();
    if config.use_dependencies() {
        let bundle = record.dependencies.clone().unwrap_or_default();
        let (summaries, warnings) = summarize(&bundle, &mut gateway, prompts);
        record.summaries = summaries;
        record.warnings.extend(warnings);
    }

    let mut validator = shim.clone();
    let basic = record.basic_slice.clone().unwrap_or_else(|| record.unit.source.clone());
    let result = {
        let mut engine = Engine {
            gateway: &mut gateway,
            validator: &mut validator,
            prompts,
            original_file: record.original_file(),
        };
        engine.run_pipeline(&record.unit, &basic, &record.summaries, &config.pipeline_options())
    };
    record.config = Some(config.clone());
    record.slices = result.slices;
    record.suite = Some(result.suite);
    record.report = Some(result.report);
    record.transcript = gateway.transcript().entries.clone();
    record.warnings.sort();
    record.warnings.dedup();
    Ok(record)
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn std::io::Write) -> Result<i32, CliError> {
    let config = run_config(a)?;
    let prompts = match &a.template {
        Some(p) => PromptSet::with_initial_template(p).map_err(CliError::usage)?,
        None => PromptSet::default(),
    };
    let source = match config.llm.mode {
        LlmMode::Mock => {
            let replies = match &a.mock_replies {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<Vec<String>>(&text)
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
                }
                None => Vec::new(),
            };
            ClientSource::Mock(replies)
        }
        LlmMode::Replay => match &a.transcript {
            Some(p) => ClientSource::Replay(Some(Transcript::load(p).map_err(CliError::usage)?)),
            None => ClientSource::Replay(None),
        },
        LlmMode::Live => {
            // fails fast on missing credentials
            Gateway::new(config.llm.clone()).map_err(CliError::usage)?;
            ClientSource::Live
        }
    };
    let shim_cmd = a
        .shim
        .clone()
        .or_else(|| std::env::var(SHIM_ENV).ok())
        .ok_or_else(|| CliError::usage(format!("no validation shim: pass --shim or set {SHIM_ENV}")))?;
    let shim = ShimValidator::new(&shim_cmd).map_err(CliError::usage)?;

    let mut records = Vec::new();
    for p in &a.records {
        records.push(TargetRecord::load(p).map_err(CliError::usage)?);
    }
    if let (Some(file), Some(function)) = (&a.file, &a.function) {
        let (root, unit) = unit_from_file(file, function, a.project_root.as_deref())?;
        records.push(prepare_record(&root, unit)?);
    }
    if records.is_empty() {
        return Err(CliError::usage("nothing to generate: pass --record or --file/--function"));
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TargetRecord, CliError>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..config.workers.min(records.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(r) = records.get(i) else { break };
                let done = generate_one(r.clone(), &config, &source, &prompts, &shim);
                results.lock().expect("no worker panicked")[i] = Some(done);
            });
        }
    });

    let mut code = EXIT_OK;
    let mut merged = Transcript::default();
    for done in results.into_inner().expect("no worker panicked").into_iter().flatten() {
        let record = done?;
        let path = record.save(&a.out_dir).map_err(CliError::infra)?;
        if let Some(suite) = &record.suite {
            let test_path = a.out_dir.join(record.file_name().replace(".json", ".tests.py"));
            std::fs::write(&test_path, suite.render()).map_err(|e| CliError::infra(format!("{}: {e}", test_path.display())))?;
        }
        let report = record.report.as_ref().expect("generation writes a report");
        let _ = writeln!(
            out,
            "{}\tcoverage={:.2}%\tsessions={}\tsends={}\t{}",
            record.unit.qualified_name,
            report.line_coverage * 100.0,
            report.sessions.len(),
            report.sends,
            path.display()
        );
        let unit_code = match &report.failure {
            Some(f) if f.kind == FailureKind::Infrastructure => {
                eprintln!("error: {}: {}", record.unit.qualified_name, f.message);
                EXIT_INFRA
            }
            _ if report.is_complete() => EXIT_OK,
            _ => EXIT_EXHAUSTED,
        };
        code = code.max(unit_code);
        record.transcript.iter().cloned().for_each(|e| merged.push(e));
    }
    if config.llm.mode != LlmMode::Replay {
        if let Some(p) = &a.transcript {
            merged.save(p).map_err(|e| CliError::infra(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(code)
}

fn record_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            paths.extend(found);
        } else if p.is_file() {
            paths.push(p.clone());
        } else {
            return Err(CliError::usage(format!("{} does not exist", p.display())));
        }
    }
    Ok(paths)
}

fn cmd_report(a: &ReportArgs, out: &mut dyn std::io::Write) -> Result<i32, CliError> {
    let mut records = Vec::new();
    for p in record_paths(&a.records)? {
        records.push(TargetRecord::load(&p).map_err(CliError::usage)?);
    }
    let table = build_report(&records);
    let text = if a.json { table.to_json() } else { table.to_text() };
    let _ = out.write_all(text.as_bytes());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_lists_parse() {
        assert_eq!(parse_lines("17, 24,31").unwrap(), BTreeSet::from([17, 24, 31]));
        assert!(parse_lines("").unwrap().is_empty());
        assert_eq!(parse_lines("x").unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn missing_project_is_usage_error() {
        let mut out = Vec::new();
        let code = run(["covelim", "analyze", "--project-root", "/nonexistent/dir"], &mut out);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let mut out = Vec::new();
        assert_eq!(run(["covelim", "report", "--bogus"], &mut out), EXIT_USAGE);
    }

    #[test]
    fn ablation_names_are_snake_case() {
        let cli = Cli::try_parse_from([
            "covelim",
            "generate",
            "--record",
            "r.json",
            "--ablation",
            "no_elimination",
        ])
        .unwrap();
        let Command::Generate(g) = cli.command else { panic!() };
        assert_eq!(g.ablation, Some(Ablation::NoElimination));
    }
}
