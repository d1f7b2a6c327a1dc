//! Lists the methods of a project that qualify as target units.
//!
//!     cargo run --example analyze -- [project-root] [min-lines] [min-complexity]
//!
//! Defaults to the bundled `pkg` fixture with thresholds 10 and 4.

use std::path::PathBuf;

use covelim::cli::analyze_project;

fn main() {
    let mut args = std::env::args().skip(1);
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/project"));
    let min_lines = args.next().map_or(10, |a| a.parse().expect("min-lines is a number"));
    let min_complexity = args.next().map_or(4, |a| a.parse().expect("min-complexity is a number"));

    let (units, warnings) = analyze_project(&root, min_lines, min_complexity);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("{} unit(s) with more than {min_lines} lines and complexity above {min_complexity}", units.len());
    for u in units {
        println!(
            "  {}:{:<24} lines {:>3}  complexity {:>2}  span {}-{}",
            u.module_path.display(),
            u.qualified_name,
            u.line_count,
            u.complexity,
            u.span.start,
            u.span.end
        );
    }
}
