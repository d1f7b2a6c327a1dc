//! Covered-code elimination on bump_version, following two rounds of
//! coverage: first lines 17, 24, 31 and 42 remain uncovered, then 17 and 31.
//!
//!     cargo run --example eliminate [-- <comma-separated lines>]

use std::collections::BTreeSet;
use std::path::Path;

use covelim::eliminate::{eliminate, write_slice_file};
use covelim::parse_source;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bump_version/flutils_packages.py");
    let text = std::fs::read_to_string(&path).expect("fixture present");
    let module = parse_source(&text, Path::new("flutils_packages.py")).expect("fixture parses");
    let unit = module
        .target_unit(module.definition("bump_version").expect("defined"))
        .expect("unit");

    let rounds: Vec<BTreeSet<u32>> = match std::env::args().nth(1) {
        Some(list) => vec![list
            .split(',')
            .map(|s| s.trim().parse().expect("line numbers"))
            .collect()],
        None => vec![[17, 24, 31, 42].into(), [17, 31].into()],
    };
    println!("unit: {} lines", unit.line_count);
    for uncov in rounds {
        let slice = eliminate(&unit, &uncov).expect("eliminate");
        println!(
            "\n=== uncovered {uncov:?}: {} lines kept, {} dropped ===",
            slice.line_count(),
            slice.dropped.len()
        );
        for w in &slice.warnings {
            println!("warning: {w}");
        }
        print!("{}", write_slice_file(&slice));
    }
}
