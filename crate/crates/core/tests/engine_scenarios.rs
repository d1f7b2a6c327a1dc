mod common;

use std::collections::BTreeSet;

use common::*;
use covelim::engine::{Engine, FailureKind, GenerationFlag, PipelineOptions};
use covelim::llm::{Gateway, LlmConfig, MockClient};
use covelim::prompt::PromptSet;

#[test]
fn scenario_table_matches_hand_traces() {
    let table = scenarios();
    assert!(table.len() >= 10);
    let bad: Vec<String> = table.iter().flat_map(check_scenario).collect();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn failing_tests_stay_in_the_suite_with_status() {
    let s = scenarios()
        .into_iter()
        .find(|s| s.name == "failing test that improves is kept")
        .unwrap();
    let run = run_scenario(&s);
    assert_eq!(run.suite.tests[0].status, Some(covelim::validation::TestStatus::Fail));
    assert_eq!(run.suite.tests[0].diagnostics, vec!["AssertionError".to_string()]);
}

#[test]
fn overflow_is_reported_as_such() {
    let s = scenarios().into_iter().find(|s| s.name == "overflow at round 3").unwrap();
    let run = run_scenario(&s);
    assert_eq!(run.outcome.failure.unwrap().kind, FailureKind::Overflow);
}

#[test]
fn uncov_never_grows_within_a_session() {
    for s in scenarios() {
        let run = run_scenario(&s);
        let start: BTreeSet<u32> = SCENARIO_LINES.into_iter().collect();
        assert!(run.outcome.uncov.is_subset(&start), "{}", s.name);
    }
}

fn pipeline(replies: Vec<String>, options: PipelineOptions) -> covelim::engine::PipelineResult {
    let u = unit(SCENARIO_UNIT);
    let config = LlmConfig {
        retry_backoff_ms: 0,
        ..LlmConfig::default()
    };
    let mut gateway = Gateway::with_client(config, Box::new(MockClient::new(replies)));
    let mut validator = MarkerValidator::new(SCENARIO_LINES);
    let prompts = PromptSet::default();
    let mut engine = Engine {
        gateway: &mut gateway,
        validator: &mut validator,
        prompts: &prompts,
        original_file: "m.py".into(),
    };
    engine.run_pipeline(&u, &u.source, &[], &options)
}

#[test]
fn full_coverage_in_one_session_means_one_noop_elimination() {
    let r = pipeline(vec![test_reply(&SCENARIO_LINES)], PipelineOptions::default());
    assert_eq!(r.report.sessions.len(), 1);
    assert_eq!(r.report.eliminations, 1);
    assert_eq!(r.report.sessions[0].slice_lines, unit(SCENARIO_UNIT).line_count);
    assert_eq!(r.report.flag, Some(GenerationFlag::FullyCovered));
}

#[test]
fn coverage_never_shrinks_and_slices_follow_uncov() {
    let replies = vec![
        test_reply(&[1, 2, 3, 8, 10]),
        test_reply(&[]),
        test_reply(&[4, 5]),
        test_reply(&[9]),
        test_reply(&[7]),
    ];
    let r = pipeline(replies, PipelineOptions::default());
    let sizes: Vec<usize> = r.report.sessions.iter().map(|s| s.uncov_after).collect();
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    assert_eq!(r.report.line_coverage, 1.0);
    let lines: Vec<u32> = r.report.sessions.iter().map(|s| s.slice_lines).collect();
    assert!(lines.windows(2).all(|w| w[1] <= w[0]), "{lines:?}");
    // bounded: each session at most `limit` sends, sessions at most |lines|
    assert!(r.report.sessions.len() <= SCENARIO_LINES.len());
    assert!(r.report.sends <= 5 * SCENARIO_LINES.len());
}

#[test]
fn no_elimination_keeps_the_full_slice() {
    let replies = vec![test_reply(&[1, 2, 3, 8, 10]), test_reply(&[4, 5, 7, 9])];
    let options = PipelineOptions {
        eliminate: false,
        ..PipelineOptions::default()
    };
    let r = pipeline(replies, options);
    assert_eq!(r.report.eliminations, 0);
    assert!(r.report.sessions.iter().all(|s| s.slice_lines == 10));
    assert_eq!(r.report.sessions.len(), 2);
}

#[test]
fn gateway_failure_mid_pipeline_keeps_suite() {
    let replies = vec![test_reply(&[1, 2, 3])];
    let r = pipeline(replies, PipelineOptions::default());
    // second session finds the mock empty
    assert_eq!(r.suite.len(), 1);
    assert_eq!(r.report.flag, Some(GenerationFlag::Exhausted));
    assert!(r.report.failure.is_some());
    assert!(!r.report.is_complete());
}
