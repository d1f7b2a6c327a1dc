#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use covelim::cfg::{build_cfg, enumerate_paths_capped, FineGrainedCfg, NodeId};
use covelim::context::SliceAndDependencies;
use covelim::engine::{Engine, GenerationFlag, SessionOutcome};
use covelim::llm::{Gateway, LlmConfig, MockClient};
use covelim::prompt::PromptSet;
use covelim::validation::{TestError, TestStatus, TestSuite, ValidationError, ValidationOutcome, Validator};
use covelim::TargetUnit;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(rel)
}

pub fn fake_shim_command() -> String {
    format!("python3 {}", fixture("shim/fake_shim.py").display())
}

pub fn bump_version_unit() -> TargetUnit {
    let path = fixture("bump_version/flutils_packages.py");
    let text = std::fs::read_to_string(&path).unwrap();
    let module = covelim::parse_source(&text, Path::new("flutils_packages.py")).unwrap();
    module
        .target_unit(module.definition("bump_version").unwrap())
        .unwrap()
}

pub fn unit(src: &str) -> TargetUnit {
    TargetUnit::from_source("f", "m.py", 1, src).unwrap()
}

/// Shape limits for generated functions.
#[derive(Debug, Clone, Copy)]
pub struct GenOpts {
    pub max_depth: u32,
    pub max_block: usize,
    pub max_nodes: usize,
    pub loops: bool,
    pub handlers: bool,
    pub expr_decisions: bool,
}

impl Default for GenOpts {
    fn default() -> Self {
        GenOpts {
            max_depth: 4,
            max_block: 3,
            max_nodes: 30,
            loops: true,
            handlers: true,
            expr_decisions: true,
        }
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    opts: GenOpts,
    out: Vec<String>,
    vars: usize,
}

impl Gen<'_> {
    fn line(&mut self, depth: u32, text: String) {
        self.out.push(format!("{}{}", "    ".repeat(depth as usize + 1), text));
    }

    fn var(&mut self) -> String {
        self.vars += 1;
        format!("v{}", self.vars)
    }

    fn cond(&mut self) -> String {
        let a = self.rng.gen_range(0..6);
        let b = self.rng.gen_range(0..6);
        if self.opts.expr_decisions {
            match self.rng.gen_range(0..6) {
                0 => return format!("c{a} and c{b}"),
                1 => return format!("c{a} or not c{b}"),
                _ => {}
            }
        }
        match self.rng.gen_range(0..3) {
            0 => format!("not c{a}"),
            1 => format!("x > {b}"),
            _ => format!("c{a}"),
        }
    }

    fn simple(&mut self, depth: u32) {
        let v = self.var();
        let text = match self.rng.gen_range(0..8) {
            0 if self.opts.expr_decisions => format!("{v} = x if c{} else -x", self.rng.gen_range(0..6)),
            1 if self.opts.expr_decisions => format!("{v} = [i for i in xs if i > {}]", self.rng.gen_range(0..4)),
            2 => format!("x = x + {}", self.rng.gen_range(1..5)),
            3 => format!("log('{v}')"),
            _ => format!("{v} = x * {}", self.rng.gen_range(1..9)),
        };
        self.line(depth, text);
    }

    /// A block of at least one statement; `in_loop` permits break/continue.
    fn block(&mut self, depth: u32, in_loop: bool) {
        let n = self.rng.gen_range(1..=self.opts.max_block);
        for i in 0..n {
            let last = i + 1 == n;
            self.stmt(depth, in_loop, last);
        }
    }

    fn stmt(&mut self, depth: u32, in_loop: bool, last: bool) {
        let compound = depth < self.opts.max_depth;
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=39 => self.simple(depth),
            40..=59 if compound => {
                let c = self.cond();
                self.line(depth, format!("if {c}:"));
                self.block(depth + 1, in_loop);
                let elifs = self.rng.gen_range(0..3);
                for _ in 0..elifs {
                    let c = self.cond();
                    self.line(depth, format!("elif {c}:"));
                    self.block(depth + 1, in_loop);
                }
                if self.rng.gen_bool(0.5) {
                    self.line(depth, "else:".into());
                    self.block(depth + 1, in_loop);
                }
            }
            60..=69 if compound && self.opts.loops => {
                let c = self.cond();
                self.line(depth, format!("while {c}:"));
                self.block(depth + 1, true);
                if self.rng.gen_bool(0.2) {
                    self.line(depth, "else:".into());
                    self.block(depth + 1, in_loop);
                }
            }
            70..=77 if compound && self.opts.loops => {
                let v = self.var();
                self.line(depth, format!("for {v} in xs:"));
                self.block(depth + 1, true);
                if self.rng.gen_bool(0.2) {
                    self.line(depth, "else:".into());
                    self.block(depth + 1, in_loop);
                }
            }
            78..=85 if compound && self.opts.handlers => {
                self.line(depth, "try:".into());
                self.block(depth + 1, in_loop);
                let handlers = self.rng.gen_range(0..3);
                for h in 0..handlers {
                    let ty = ["ValueError", "KeyError"][h % 2];
                    self.line(depth, format!("except {ty}:"));
                    self.block(depth + 1, in_loop);
                }
                if handlers > 0 && self.rng.gen_bool(0.3) {
                    self.line(depth, "else:".into());
                    self.block(depth + 1, in_loop);
                }
                if handlers == 0 || self.rng.gen_bool(0.3) {
                    self.line(depth, "finally:".into());
                    self.block(depth + 1, in_loop);
                }
            }
            86..=89 if compound => {
                self.line(depth, "with ctx() as w:".into());
                self.block(depth + 1, in_loop);
            }
            90..=99 if last => match self.rng.gen_range(0..4) {
                0 if in_loop => self.line(depth, "break".into()),
                1 if in_loop => self.line(depth, "continue".into()),
                2 => self.line(depth, "raise ValueError(x)".into()),
                _ => self.line(depth, "return x".into()),
            },
            _ => self.simple(depth),
        }
    }
}

/// Source of one random function `f`, with at most `opts.max_nodes` CFG
/// nodes.
pub fn random_unit(rng: &mut ChaCha8Rng, opts: GenOpts) -> String {
    loop {
        let mut g = Gen {
            rng,
            opts,
            out: vec!["def f(x, xs, c0, c1, c2, c3, c4, c5):".into()],
            vars: 0,
        };
        g.block(0, false);
        g.line(0, "return x".into());
        let src = g.out.join("\n") + "\n";
        let u = unit(&src);
        if let Ok(cfg) = build_cfg(&u) {
            if cfg.nodes.len() <= opts.max_nodes {
                return src;
            }
        }
    }
}

/// Node sets of complete paths through each node, from explicit path
/// enumeration.
pub fn path_membership(
    cfg: &FineGrainedCfg,
    unroll: u32,
    cap: usize,
) -> Option<Vec<BTreeSet<NodeId>>> {
    let paths = enumerate_paths_capped(cfg, unroll, cap).ok()?;
    let mut masks = vec![0u128; cfg.nodes.len()];
    for p in &paths {
        let m = p.iter().fold(0u128, |m, &n| m | (1 << n));
        for &n in p {
            masks[n] |= m;
        }
    }
    Some(
        masks
            .into_iter()
            .map(|m| (0..cfg.nodes.len()).filter(|i| m & (1 << i) != 0).collect())
            .collect(),
    )
}

/// Covers the lines named by `# covers:` markers of every test; a
/// `# status: fail` marker marks the test failing with a runtime error.
pub struct MarkerValidator {
    pub universe: BTreeSet<u32>,
    pub calls: usize,
}

impl MarkerValidator {
    pub fn new(universe: impl IntoIterator<Item = u32>) -> Self {
        MarkerValidator {
            universe: universe.into_iter().collect(),
            calls: 0,
        }
    }
}

impl Validator for MarkerValidator {
    fn validate(
        &mut self,
        tests: &TestSuite,
        _file: &Path,
        _unit: &TargetUnit,
    ) -> Result<ValidationOutcome, ValidationError> {
        self.calls += 1;
        let mut covered = BTreeSet::new();
        let mut per_test = BTreeMap::new();
        let mut errors = Vec::new();
        for t in &tests.tests {
            let mut status = TestStatus::Pass;
            for line in t.source.lines() {
                let line = line.trim();
                if let Some(rest) = line.strip_prefix("# covers:") {
                    covered.extend(rest.split(',').filter_map(|x| x.trim().parse::<u32>().ok()));
                }
                if line == "# status: fail" {
                    status = TestStatus::Fail;
                    errors.push(TestError {
                        id: t.id.clone(),
                        message: "AssertionError".into(),
                    });
                }
            }
            per_test.insert(t.id.clone(), status);
        }
        covered.retain(|l| self.universe.contains(l));
        Ok(ValidationOutcome {
            uncovered: self.universe.difference(&covered).copied().collect(),
            covered,
            per_test,
            errors,
        })
    }
}

pub fn test_reply(lines: &[u32]) -> String {
    let l: Vec<String> = lines.iter().map(u32::to_string).collect();
    format!(
        "<answer>\ndef test_generated():\n    # covers: {}\n    assert f(1, [], 0, 0, 0, 0, 0, 0) is not None\n</answer>",
        l.join(",")
    )
}

pub const SCENARIO_UNIT: &str = "\
def f(x, xs, c0, c1, c2, c3, c4, c5):
    if c0:
        x = 1
    elif c1:
        x = 2
    else:
        x = 3
    for i in xs:
        x += i
    return x
";

/// Executable lines of [`SCENARIO_UNIT`].
pub const SCENARIO_LINES: [u32; 9] = [1, 2, 3, 4, 5, 7, 8, 9, 10];

/// One scripted mock item: a reply, or a transport failure.
#[derive(Debug, Clone)]
pub enum Step {
    Reply(String),
    Transport,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub limit: u32,
    pub token_limit: usize,
    pub steps: Vec<Step>,
    /// Hand-traced (sends, validations, flag).
    pub expected: (usize, usize, GenerationFlag),
    pub expected_uncov: usize,
    pub expected_tests: usize,
}

fn r(lines: &[u32]) -> Step {
    Step::Reply(test_reply(lines))
}

fn padded(lines: &[u32], pad: usize) -> Step {
    Step::Reply(format!("{}\n{}", test_reply(lines), "#".repeat(pad)))
}

/// The scripted table: every send is one item, transport failures burn
/// one item per attempt (four attempts with three retries).
pub fn scenarios() -> Vec<Scenario> {
    use GenerationFlag::*;
    let all = &SCENARIO_LINES[..];
    let fail_reply = Step::Reply(
        "<answer>\ndef test_bad():\n    # covers: 1,2,3\n    # status: fail\n    assert False\n</answer>".into(),
    );
    vec![
        Scenario {
            name: "immediate success",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(all)],
            expected: (1, 1, FullyCovered),
            expected_uncov: 0,
            expected_tests: 1,
        },
        Scenario {
            name: "improvement at round 1",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[1, 2, 3])],
            expected: (1, 1, NewCoverage),
            expected_uncov: 6,
            expected_tests: 1,
        },
        Scenario {
            name: "improvement at round 2",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), r(&[5])],
            expected: (2, 2, NewCoverage),
            expected_uncov: 8,
            expected_tests: 2,
        },
        Scenario {
            name: "improvement at round 3",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), r(&[]), r(&[1, 2, 4, 5])],
            expected: (3, 3, NewCoverage),
            expected_uncov: 5,
            expected_tests: 3,
        },
        Scenario {
            name: "improvement at round 5",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), r(&[]), r(&[]), r(&[]), r(&[9])],
            expected: (5, 5, NewCoverage),
            expected_uncov: 8,
            expected_tests: 5,
        },
        Scenario {
            name: "full coverage at round 4",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), r(&[]), r(&[]), r(all)],
            expected: (4, 4, FullyCovered),
            expected_uncov: 0,
            expected_tests: 4,
        },
        Scenario {
            name: "never improving, limit 5",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]); 5],
            expected: (5, 5, Exhausted),
            expected_uncov: 9,
            expected_tests: 5,
        },
        Scenario {
            name: "never improving, limit 1",
            limit: 1,
            token_limit: 8096,
            steps: vec![r(&[])],
            expected: (1, 1, Exhausted),
            expected_uncov: 9,
            expected_tests: 1,
        },
        Scenario {
            name: "improvement after limit is not reached",
            limit: 2,
            token_limit: 8096,
            steps: vec![r(&[]), r(&[]), r(all)],
            expected: (2, 2, Exhausted),
            expected_uncov: 9,
            expected_tests: 2,
        },
        Scenario {
            name: "overflow at round 1",
            limit: 5,
            token_limit: 16,
            steps: vec![r(all)],
            expected: (0, 0, Exhausted),
            expected_uncov: 9,
            expected_tests: 0,
        },
        Scenario {
            name: "overflow at round 3",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), padded(&[], 40_000), r(all)],
            expected: (2, 2, Exhausted),
            expected_uncov: 9,
            expected_tests: 2,
        },
        Scenario {
            name: "extraction failure then success",
            limit: 5,
            token_limit: 8096,
            steps: vec![Step::Reply("I cannot help with that.".into()), r(all)],
            expected: (2, 1, FullyCovered),
            expected_uncov: 0,
            expected_tests: 1,
        },
        Scenario {
            name: "unparseable answer every round",
            limit: 5,
            token_limit: 8096,
            steps: vec![Step::Reply("<answer>def test(:\n</answer>".into()); 5],
            expected: (5, 0, Exhausted),
            expected_uncov: 9,
            expected_tests: 0,
        },
        Scenario {
            name: "transport failure at round 2",
            limit: 5,
            token_limit: 8096,
            steps: vec![r(&[]), Step::Transport, Step::Transport, Step::Transport, Step::Transport],
            expected: (1, 1, Exhausted),
            expected_uncov: 9,
            expected_tests: 1,
        },
        Scenario {
            name: "transient transport failure is retried",
            limit: 5,
            token_limit: 8096,
            steps: vec![Step::Transport, Step::Transport, r(all)],
            expected: (1, 1, FullyCovered),
            expected_uncov: 0,
            expected_tests: 1,
        },
        Scenario {
            name: "failing test that improves is kept",
            limit: 5,
            token_limit: 8096,
            steps: vec![fail_reply],
            expected: (1, 1, NewCoverage),
            expected_uncov: 6,
            expected_tests: 1,
        },
    ]
}

pub struct ScenarioRun {
    pub outcome: SessionOutcome,
    pub suite: TestSuite,
    pub validator_calls: usize,
}

pub fn run_scenario(s: &Scenario) -> ScenarioRun {
    let u = unit(SCENARIO_UNIT);
    let config = LlmConfig {
        token_limit: s.token_limit,
        retry_backoff_ms: 0,
        ..LlmConfig::default()
    };
    let items = s.steps.iter().map(|st| match st {
        Step::Reply(t) => Ok(t.clone()),
        Step::Transport => Err("connection reset".to_string()),
    });
    let mut gateway = Gateway::with_client(config, Box::new(MockClient::scripted(items)));
    let mut validator = MarkerValidator::new(SCENARIO_LINES);
    let prompts = PromptSet::default();
    let mut suite = TestSuite::default();
    let outcome = {
        let mut engine = Engine {
            gateway: &mut gateway,
            validator: &mut validator,
            prompts: &prompts,
            original_file: "m.py".into(),
        };
        let ctx = SliceAndDependencies::with_unit_text(&u.source, &u, &u.source, Vec::new());
        engine.generate_for_slice(&ctx, s.limit, &mut suite, &SCENARIO_LINES.into_iter().collect())
    };
    ScenarioRun {
        outcome,
        suite,
        validator_calls: validator.calls,
    }
}

/// Empty when the run matches the hand trace, else one message per
/// mismatch.
pub fn check_scenario(s: &Scenario) -> Vec<String> {
    let run = run_scenario(s);
    let o = &run.outcome;
    let mut bad = Vec::new();
    let got = (o.sends, o.validations, o.flag);
    if got != s.expected {
        bad.push(format!("{}: got {:?}, traced {:?}", s.name, got, s.expected));
    }
    if o.uncov.len() != s.expected_uncov {
        bad.push(format!("{}: uncov {} != {}", s.name, o.uncov.len(), s.expected_uncov));
    }
    if run.suite.len() != s.expected_tests {
        bad.push(format!("{}: suite {} != {}", s.name, run.suite.len(), s.expected_tests));
    }
    if run.validator_calls != o.validations {
        bad.push(format!("{}: validator ran {} times", s.name, run.validator_calls));
    }
    bad
}

/// Runs `python3` with `script` on stdin-provided JSON and parses its JSON
/// output.
pub fn python_json(script: &Path, input: &serde_json::Value) -> serde_json::Value {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let mut child = Command::new("python3")
        .arg(script)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 available");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.to_string().as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{} failed", script.display());
    serde_json::from_slice(&out.stdout).unwrap()
}
