//! The classifier plugin protocol spoken against the builtin learner,
//! in-process: a scripted request stream goes in and the reply lines come
//! out. `alharness plugin-mock` serves the same thing over stdin/stdout.
//!
//! cargo run --example plugin_protocol

use std::io::Cursor;

use al_harness::classifier::DEFAULT_EMBEDDING_DIM;
use al_harness::corpus::Label;
use al_harness::features::TfidfOptions;
use al_harness::plugin::{encode, serve, Command, Request, WireExample};
use al_harness::{BuiltinLearner, ClassifierSpec, Vocabulary};

fn main() -> al_harness::Result<()> {
    let texts = [
        ("you are an idiot", Label::Abuse),
        ("thanks for the careful edit", Label::NonAbuse),
        ("shut up you moron", Label::Abuse),
        ("the citation looks fine", Label::NonAbuse),
    ];
    let corpus: Vec<&str> = texts.iter().map(|t| t.0).collect();
    let vocab = Vocabulary::fit(&corpus, TfidfOptions::default())?;

    let examples = texts
        .iter()
        .enumerate()
        .map(|(i, (text, label))| WireExample {
            id: i as u64,
            text: text.to_string(),
            label: *label,
            batch: 0,
        })
        .collect();
    let script = [
        Command::Hello {},
        Command::Predict {
            texts: vec!["idiot".into()],
        },
        Command::Train { examples, seed: 1 },
        Command::Predict {
            texts: vec!["what an idiot".into(), "nice edit\nthanks".into()],
        },
        Command::Embed {
            texts: vec!["moron".into()],
        },
        Command::Shutdown {},
    ];
    let mut input = String::new();
    for cmd in script {
        input.push_str(&encode(&Request::new(cmd))?);
    }
    input.push_str("{\"v\":1,\"cmd\":\"never reached\"}\n");

    let learner = BuiltinLearner::new(ClassifierSpec::default(), &vocab, DEFAULT_EMBEDDING_DIM, 7);
    let mut output = Vec::new();
    serve(Cursor::new(input.clone()), &mut output, learner, &vocab)?;

    for (req, resp) in input.lines().zip(String::from_utf8_lossy(&output).lines()) {
        let resp = if resp.len() > 110 { format!("{}...", &resp[..110]) } else { resp.to_string() };
        println!("> {req}\n< {resp}");
    }
    Ok(())
}
