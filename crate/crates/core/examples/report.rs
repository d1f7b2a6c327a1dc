//! Aggregates finished unit records into the per-project table.
//!
//!     cargo run --example report -- <record.json or directory>...
//!
//! Without arguments it tabulates a few synthetic records.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use covelim::engine::RunReport;
use covelim::store::{build_report, TargetRecord};
use covelim::TargetUnit;

fn synthetic(project: &str, name: &str, covered: u32, total: u32, pass_rate: Option<f64>) -> TargetRecord {
    let unit = TargetUnit::from_source(name, "m.py", 1, "def f():\n    return 1\n").expect("parses");
    let mut record = TargetRecord::skeleton(Path::new(project), unit);
    record.report = Some(RunReport {
        unit: name.into(),
        sessions: Vec::new(),
        eliminations: 0,
        sends: 0,
        validations: 0,
        executable_lines: total as usize,
        covered_lines: (1..=covered).collect(),
        uncovered_lines: (covered + 1..=total).collect::<BTreeSet<u32>>(),
        line_coverage: covered as f64 / total as f64,
        pass_rate,
        flag: None,
        failure: None,
    });
    record
}

fn main() {
    let inputs: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let records = if inputs.is_empty() {
        vec![
            synthetic("alpha", "parse", 30, 40, Some(0.5)),
            synthetic("alpha", "render", 10, 40, Some(1.0)),
            synthetic("beta", "solve", 45, 50, None),
        ]
    } else {
        let mut files = Vec::new();
        for p in inputs {
            if p.is_dir() {
                for e in std::fs::read_dir(&p).expect("readable directory") {
                    let f = e.expect("entry").path();
                    if f.extension().is_some_and(|x| x == "json") {
                        files.push(f);
                    }
                }
            } else {
                files.push(p);
            }
        }
        files.sort();
        files.iter().map(|f| TargetRecord::load(f).expect("valid record")).collect()
    };
    let table = build_report(&records);
    print!("{}", table.to_text());
}
