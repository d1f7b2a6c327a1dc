//! The three prompts the generator sends, and test extraction from replies.
//!
//!     cargo run --example prompts

use std::collections::BTreeSet;

use covelim::context::{DependencySummary, SliceAndDependencies};
use covelim::prompt::{extract_test_code, PromptSet};
use covelim::TargetUnit;

const UNIT: &str = "\
def clamp(value, low, high):
    if value < low:
        return low
    if value > high:
        return high
    return value
";

fn main() {
    let unit = TargetUnit::from_source("clamp", "mathutil.py", 1, UNIT).expect("parses");
    let prompts = PromptSet::default();
    let ctx = SliceAndDependencies::with_unit_text(
        UNIT,
        &unit,
        UNIT,
        vec![DependencySummary {
            name: "LIMIT".into(),
            signature: "LIMIT = 100".into(),
            description: "Upper bound used by callers.".into(),
        }],
    );
    let uncov: BTreeSet<u32> = [3, 5].into();

    println!("=== initial ===\n{}", prompts.initial_prompt(&ctx, &uncov).expect("renders"));
    let errors = vec!["test_001: AssertionError: assert 0 == 1".to_string()];
    println!(
        "\n=== refinement ===\n{}",
        prompts.refinement_prompt(&[5].into(), &errors, &unit).expect("renders")
    );
    println!("\n=== summarize ===\n{}", prompts.summarize_prompt("LIMIT = 100").expect("renders"));

    let reply = "Sure.\n<answer>\n```python\n    from mathutil import clamp\n\n    def test_low():\n        assert clamp(-1, 0, 9) == 0\n```\n</answer>";
    println!("\n=== extracted ===\n{}", extract_test_code(reply).expect("valid reply"));
    match extract_test_code("I could not write a test.") {
        Ok(_) => unreachable!(),
        Err(e) => println!("unusable reply: {e}"),
    }
}
