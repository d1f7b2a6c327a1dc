//! Records a scripted dialogue, then answers the same requests from the
//! recording without any model.
//!
//!     cargo run --example dialogue

use covelim::llm::{Gateway, LlmConfig, LlmError, MockClient, ReplayClient};

fn main() {
    let mut recorder = Gateway::mock(["first answer", "second answer"]);
    let mut d = recorder.new_dialogue();
    for q in ["write a test", "now cover line 7"] {
        let a = recorder.send(&mut d, q).expect("scripted");
        println!("{} > {q}\n{} < {a}", d.id, d.id);
    }
    println!("estimated tokens in {}: {}", d.id, d.token_estimate);

    let transcript = recorder.transcript().clone();
    print!("--- transcript ---\n{}", transcript.to_jsonl());

    let mut replay = Gateway::with_client(LlmConfig::default(), Box::new(ReplayClient::new(&transcript)));
    let mut d = replay.new_dialogue();
    for q in ["write a test", "now cover line 7"] {
        println!("replayed < {}", replay.send(&mut d, q).expect("recorded"));
    }
    match replay.send(&mut d, "something new") {
        Err(LlmError::ReplayMismatch { digest }) => println!("unrecorded request {}...", &digest[..12]),
        other => println!("unexpected: {other:?}"),
    }

    let tight = LlmConfig {
        token_limit: 8,
        ..LlmConfig::default()
    };
    let mut small = Gateway::with_client(tight, Box::new(MockClient::new(["ok"])));
    let mut d = small.new_dialogue();
    println!("over budget: {}", small.send(&mut d, &"x".repeat(64)).unwrap_err());
}
