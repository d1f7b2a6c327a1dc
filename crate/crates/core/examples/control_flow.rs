//! Complexity, control-flow graph and bounded paths of bump_version.
//!
//!     cargo run --example control_flow > cfg.dot
//!
//! The DOT graph goes to stdout, the measurements to stderr.

use std::path::Path;

use covelim::cfg::{build_cfg, enumerate_paths};
use covelim::{cyclomatic_complexity, parse_source};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bump_version/flutils_packages.py");
    let text = std::fs::read_to_string(&path).expect("fixture present");
    let module = parse_source(&text, Path::new("flutils_packages.py")).expect("fixture parses");
    let unit = module
        .target_unit(module.definition("bump_version").expect("defined"))
        .expect("unit");

    let cfg = build_cfg(&unit).expect("cfg");
    let paths = enumerate_paths(&cfg, 1).expect("loop-free unit has few paths");
    eprintln!("decision-point complexity  {}", cyclomatic_complexity(&unit).expect("parses"));
    eprintln!("graph E' - N + 2           {}", cfg.cyclomatic_number());
    eprintln!("nodes / edges              {} / {}", cfg.nodes.len(), cfg.edges.len());
    eprintln!("entry-to-exit paths        {}", paths.len());
    print!("{}", cfg.to_dot());
}
