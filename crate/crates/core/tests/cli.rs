mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use covelim::eliminate::read_slice_file;
use covelim::llm::Transcript;
use covelim::store::TargetRecord;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn covelim(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_covelim"))
        .args(args)
        .env_remove("COVELIM_SHIM")
        .env_remove("COVELIM_API_KEY")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bump_file() -> PathBuf {
    fixture("bump_version/flutils_packages.py")
}

fn generate(out_dir: &Path, extra: &[&str]) -> Run {
    let file = bump_file();
    let root = fixture("bump_version");
    let shim = fake_shim_command();
    let mut args = vec![
        "generate",
        "--file",
        s(&file),
        "--function",
        "bump_version",
        "--project-root",
        s(&root),
        "--shim",
        &shim,
        "--out-dir",
        s(out_dir),
    ];
    args.extend_from_slice(extra);
    covelim(&args)
}

fn mock_args() -> Vec<String> {
    let replies = fixture("bump_version/mock_replies.json");
    vec!["--llm".into(), "mock".into(), "--mock-replies".into(), s(&replies).into()]
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn only_record(dir: &Path) -> TargetRecord {
    let json: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(json.len(), 1, "{json:?}");
    TargetRecord::load(&json[0]).unwrap()
}

#[test]
fn analyze_lists_and_records_qualifying_units() {
    let tmp = tempfile::tempdir().unwrap();
    let root = fixture("project");
    let r = covelim(&[
        "analyze",
        "--project-root",
        s(&root),
        "--min-lines",
        "10",
        "--min-complexity",
        "4",
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{}", r.stdout);
    assert!(lines[0].starts_with("pkg/core.py:rank\tlines=22\tcomplexity=10"));
    assert!(lines[1].starts_with("pkg/core.py:fetch\tlines=13\tcomplexity=6"));
    let records = dir_contents(tmp.path());
    assert_eq!(records.len(), 2);
    for name in records.keys() {
        let rec = TargetRecord::load(&tmp.path().join(name)).unwrap();
        assert!(rec.basic_slice.is_some());
        assert!(rec.dependencies.is_some());
        assert!(rec.report.is_none());
    }
}

#[test]
fn analyze_thresholds_are_strict() {
    let root = fixture("bump_version");
    // thresholds are strict: a 50-line unit is not "more than 50"
    let r = covelim(&["analyze", "--project-root", s(&root)]);
    assert_eq!((r.code, r.stdout.as_str()), (0, ""));
    let r = covelim(&["analyze", "--project-root", s(&root), "--min-lines", "49"]);
    assert_eq!(r.stdout, "flutils_packages.py:bump_version\tlines=50\tcomplexity=15\tspan=1-50\n");
}

#[test]
fn analyze_empty_and_missing_projects() {
    let tmp = tempfile::tempdir().unwrap();
    let r = covelim(&["analyze", "--project-root", s(tmp.path())]);
    assert_eq!((r.code, r.stdout.as_str()), (0, ""));
    let r = covelim(&["analyze", "--project-root", "/nonexistent/project"]);
    assert_eq!(r.code, 2);
}

#[test]
fn eliminate_prints_reduced_slice() {
    let file = bump_file();
    let r = covelim(&[
        "eliminate",
        "--file",
        s(&file),
        "--function",
        "bump_version",
        "--uncov",
        "17,24,31,42",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (map, text) = read_slice_file(&r.stdout).unwrap();
    // collapsed else-if headers are synthesized and carry no original line
    assert_eq!(map.len(), 20);
    assert_eq!(text.lines().count(), 22);
    for l in [17, 24, 31, 42] {
        assert!(map.values().any(|&o| o == l), "line {l} kept");
    }
}

#[test]
fn eliminate_without_uncov_keeps_unit() {
    let tmp = tempfile::tempdir().unwrap();
    let file = bump_file();
    let out = tmp.path().join("slice.txt");
    let dot = tmp.path().join("cfg.dot");
    let r = covelim(&[
        "eliminate",
        "--file",
        s(&file),
        "--function",
        "bump_version",
        "--out",
        s(&out),
        "--dump-cfg",
        s(&dot),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (map, text) = read_slice_file(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(map.len(), 50);
    assert_eq!(text, bump_version_unit().source);
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph cfg {"));
}

#[test]
fn eliminate_warns_on_non_executable_line() {
    let file = bump_file();
    let r = covelim(&["eliminate", "--file", s(&file), "--function", "bump_version", "--uncov", "14,17"]);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("line 14 is not executable"), "{}", r.stderr);
    let r = covelim(&["eliminate", "--file", s(&file), "--function", "bump_version", "--uncov", "x"]);
    assert_eq!(r.code, 2);
    let r = covelim(&["eliminate", "--file", s(&file), "--function", "nope"]);
    assert_eq!(r.code, 2);
}

#[test]
fn generate_mock_reaches_full_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = mock_args();
    let extra: Vec<&str> = extra.iter().map(String::as_str).collect();
    let r = generate(tmp.path(), &extra);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("bump_version\tcoverage=100.00%\tsessions=3\tsends=3\t"), "{}", r.stdout);
    let rec = only_record(tmp.path());
    let report = rec.report.unwrap();
    let lines: Vec<u32> = report.sessions.iter().map(|s| s.slice_lines).collect();
    assert_eq!(lines, [50, 22, 16]);
    assert_eq!(report.executable_lines, 38);
    assert_eq!(rec.suite.as_ref().unwrap().len(), 3);
    let rendered = std::fs::read_to_string(tmp.path().join("flutils_packages__bump_version.tests.py")).unwrap();
    assert!(rendered.contains("# test_003"));
}

#[test]
fn replay_is_byte_identical_across_runs() {
    let transcript = fixture("bump_version/transcript.jsonl");
    let mut outputs = Vec::new();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let r = generate(d.path(), &["--llm", "replay", "--transcript", s(&transcript)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        outputs.push(dir_contents(d.path()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
    assert_eq!(outputs[0].len(), 2);
}

#[test]
fn replay_from_embedded_record_transcript() {
    let transcript = fixture("bump_version/transcript.jsonl");
    let first = tempfile::tempdir().unwrap();
    generate(first.path(), &["--llm", "replay", "--transcript", s(&transcript)]);
    let record = first.path().join("flutils_packages__bump_version.json");
    let second = tempfile::tempdir().unwrap();
    let shim = fake_shim_command();
    let r = covelim(&[
        "generate",
        "--record",
        s(&record),
        "--llm",
        "replay",
        "--shim",
        &shim,
        "--out-dir",
        s(second.path()),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut a = only_record(first.path());
    let mut b = only_record(second.path());
    // the only input that differs between the two invocations
    a.config.as_mut().unwrap().llm.transcript_path = None;
    b.config.as_mut().unwrap().llm.transcript_path = None;
    assert_eq!(a.to_json(), b.to_json());
    let tests = "flutils_packages__bump_version.tests.py";
    assert_eq!(dir_contents(first.path())[tests], dir_contents(second.path())[tests]);
}

#[test]
fn no_elimination_slices_never_shrink() {
    let tmp = tempfile::tempdir().unwrap();
    let transcript = fixture("bump_version/transcript.jsonl");
    let r = generate(
        tmp.path(),
        &["--llm", "replay", "--transcript", s(&transcript), "--ablation", "no_elimination"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = only_record(tmp.path()).report.unwrap();
    assert_eq!(report.eliminations, 0);
    assert!(report.sessions.iter().all(|s| s.slice_lines == 50));
}

#[test]
fn committed_transcript_matches_fresh_mock_recordings() {
    let tmp = tempfile::tempdir().unwrap();
    let mut merged = Transcript::default();
    for ablation in ["none", "no_elimination"] {
        let t = tmp.path().join(format!("{ablation}.jsonl"));
        let mut extra = mock_args();
        extra.extend(["--ablation".into(), ablation.into(), "--transcript".into(), s(&t).into()]);
        let extra: Vec<&str> = extra.iter().map(String::as_str).collect();
        let out = tmp.path().join(ablation);
        let r = generate(&out, &extra);
        assert_eq!(r.code, 0, "{}", r.stderr);
        Transcript::load(&t).unwrap().entries.into_iter().for_each(|e| merged.push(e));
    }
    let committed = std::fs::read_to_string(fixture("bump_version/transcript.jsonl")).unwrap();
    assert_eq!(merged.to_jsonl(), committed);
}

#[test]
fn live_mode_without_key_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = generate(tmp.path(), &["--llm", "live"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("COVELIM_API_KEY"), "{}", r.stderr);
}

#[test]
fn generate_without_shim_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = bump_file();
    let r = covelim(&["generate", "--file", s(&file), "--function", "bump_version", "--out-dir", s(tmp.path())]);
    assert_eq!(r.code, 2);
}

#[test]
fn unhelpful_replies_exit_exhausted() {
    let tmp = tempfile::tempdir().unwrap();
    let replies = tmp.path().join("replies.json");
    let reply = "```python\ndef test_nothing():\n    assert True\n```";
    std::fs::write(&replies, serde_json::to_string(&vec![reply; 5]).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let r = generate(
        &out,
        &["--llm", "mock", "--mock-replies", s(&replies), "--ablation", "no_dependencies", "--iteration-limit", "5"],
    );
    assert_eq!(r.code, 1, "{}\n{}", r.stdout, r.stderr);
    let report = only_record(&out).report.unwrap();
    assert_eq!(report.sends, 5);
    assert!(report.line_coverage < 1.0);
}

#[test]
fn report_averages_records() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rec = TargetRecord::skeleton(&fixture("project"), bump_version_unit());
    let mut report: covelim::engine::RunReport = serde_json::from_value(serde_json::json!({
        "unit": "bump_version", "sessions": [], "eliminations": 1, "sends": 1,
        "validations": 2, "executable_lines": 40, "covered_lines": (1..=10).collect::<Vec<u32>>(),
        "uncovered_lines": (11..=40).collect::<Vec<u32>>(), "line_coverage": 0.25,
        "pass_rate": 0.5, "flag": -1, "failure": null
    }))
    .unwrap();
    report.line_coverage = report.covered_lines.len() as f64 / report.executable_lines as f64;
    rec.report = Some(report);
    rec.save(tmp.path()).unwrap();
    let r = covelim(&["report", s(tmp.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let project_row = r.stdout.lines().find(|l| l.starts_with("project")).unwrap();
    assert!(project_row.contains("25.00%") && project_row.contains("50.00%"), "{}", r.stdout);
    assert!(r.stdout.lines().any(|l| l.starts_with("Average")));

    let r = covelim(&["report", "--json", s(tmp.path())]);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["rows"][0]["line_coverage"], 0.25);
}

#[test]
fn report_without_records() {
    let tmp = tempfile::tempdir().unwrap();
    let r = covelim(&["report", s(tmp.path())]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.starts_with("Project"));
    let r = covelim(&["report", "/nonexistent/records"]);
    assert_eq!(r.code, 2);
}
