//! Regenerates `data/smack-replay.jsonl` by running a guided session against
//! scripted replies and recording every provider exchange.
//!
//! cargo run -p crashsolver-core --example record_smack

use std::fs;
use std::path::Path;

use chrono::Utc;
use crashsolver_core::crash::{read_case_pool, BugCategory};
use crashsolver_core::engine::{advance, start_session, step, Action, Event, Limits, StrategyConfig};
use crashsolver_core::gateway::{record, ScriptedProvider};

const QUESTION: &str =
    "My first question is: What is the version of the Smack library that you are using in this project?";
const ANSWER: &str = "Smack 4.1.0 (smack-java7)";
const RECOMMENDATION: &str = "To fix this issue, you can try using a Smack library version that is specifically designed for Android, such as smack-android-extensions:4.4.4 or smack-android:4.4.4.";

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cases = read_case_pool(fs::File::open(data.join("smack-case.jsonl")).map(std::io::BufReader::new).unwrap()).unwrap();
    let out = data.join("smack-replay.jsonl");
    let _ = fs::remove_file(&out);

    let mut provider = record(ScriptedProvider::new([QUESTION, RECOMMENDATION]), &out).unwrap();
    let (state, action) = start_session(
        "smack",
        &cases[0],
        BugCategory::EnvironmentRelated,
        StrategyConfig::guided(),
        Limits::default(),
        Utc::now(),
    )
    .unwrap();
    let adv = advance(state, action, &mut provider, Utc::now);
    assert!(matches!(adv.action, Action::AwaitUserAnswer { .. }), "{:?}", adv.action);
    let (state, action) = step(&adv.state, Event::UserAnswer { text: ANSWER.into() }).unwrap();
    let adv = advance(state, action, &mut provider, Utc::now);
    assert!(matches!(adv.action, Action::PresentSolutions { .. }), "{:?}", adv.action);
    println!("wrote {}", out.display());
}
