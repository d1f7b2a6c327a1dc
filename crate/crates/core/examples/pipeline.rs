//! The full generate / validate / eliminate loop on bump_version, with
//! recorded model replies and the marker-driven stand-in shim.
//!
//!     cargo run --example pipeline
//!
//! Needs `python3` on PATH for the shim.

use std::path::Path;

use covelim::context::{collect_external, collect_internal, summarize};
use covelim::engine::{Engine, PipelineOptions};
use covelim::llm::{Gateway, LlmConfig, ReplayClient, Transcript};
use covelim::parse_source;
use covelim::prompt::PromptSet;
use covelim::validation::ShimValidator;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let root = fixtures.join("bump_version");
    let rel = Path::new("flutils_packages.py");
    let text = std::fs::read_to_string(root.join(rel)).expect("fixture present");
    let module = parse_source(&text, rel).expect("fixture parses");
    let unit = module
        .target_unit(module.definition("bump_version").expect("defined"))
        .expect("unit");

    let transcript = Transcript::load(&root.join("transcript.jsonl")).expect("transcript");
    let mut gateway = Gateway::with_client(LlmConfig::default(), Box::new(ReplayClient::new(&transcript)));
    let prompts = PromptSet::default();
    let bundle = collect_external(&root, &unit);
    let (summaries, warnings) = summarize(&bundle, &mut gateway, &prompts);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("{} dependency summaries", summaries.len());

    let shim = format!("python3 {}", fixtures.join("shim/fake_shim.py").display());
    let mut validator = ShimValidator::new(&shim).expect("shim command");
    let result = Engine {
        gateway: &mut gateway,
        validator: &mut validator,
        prompts: &prompts,
        original_file: root.join(rel),
    }
    .run_pipeline(&unit, &collect_internal(&module, &unit), &summaries, &PipelineOptions::default());

    let r = &result.report;
    for (i, s) in r.sessions.iter().enumerate() {
        println!(
            "session {}: slice {:>2} lines, uncovered {:>2} -> {:>2}, {} send(s), flag {:?}",
            i + 1,
            s.slice_lines,
            s.uncov_before,
            s.uncov_after,
            s.sends,
            s.flag
        );
    }
    println!(
        "line coverage {:.2}% of {} lines, pass rate {}, {} tests",
        r.line_coverage * 100.0,
        r.executable_lines,
        r.pass_rate.map_or("-".into(), |p| format!("{:.2}%", p * 100.0)),
        result.suite.len()
    );
    if let Some(f) = &r.failure {
        println!("stopped: {:?}: {}", f.kind, f.message);
    }
}
