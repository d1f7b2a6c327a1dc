//! Basic slice and project-internal dependencies of the bump_version fixture.
//!
//!     cargo run --example dependencies

use std::path::Path;

use covelim::context::{collect_external, collect_internal, Origin};
use covelim::parse_source;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bump_version");
    let rel = Path::new("flutils_packages.py");
    let text = std::fs::read_to_string(root.join(rel)).expect("fixture present");
    let module = parse_source(&text, rel).expect("fixture parses");
    let unit = module
        .target_unit(module.definition("bump_version").expect("defined"))
        .expect("unit");

    println!("--- basic slice ---");
    print!("{}", collect_internal(&module, &unit));

    let bundle = collect_external(&root, &unit);
    println!("--- references ---");
    for r in &bundle.refs {
        let at = match &r.definition_span {
            Some(s) => format!("{}:{}-{}", s.path.display(), s.start_line, s.end_line),
            None => "-".into(),
        };
        let origin = match r.origin {
            Origin::IntraFile => "intra-file",
            Origin::ProjectInternal => "project",
            Origin::ThirdParty => "third-party",
        };
        println!("{:<32} {:<12} {at}", r.name, origin);
    }
    println!("--- captured for summarization ---");
    print!("{}", bundle.text());
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
}
