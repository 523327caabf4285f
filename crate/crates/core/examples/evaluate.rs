//! Evaluates the fixture dataset in all three modes and prints a table.

use std::sync::Arc;

use langrepo::embed::Embedder;
use langrepo::eval::{evaluate, load_captions_dir, load_qa_dataset, render_table, EvalConfig, EvalMode};
use langrepo::llm::{LlmClient, MockBackend};
use langrepo::repository::Providers;

fn main() -> Result<(), langrepo::Error> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let items = load_qa_dataset(format!("{fixtures}/dataset.json"))?;
    let captions = load_captions_dir(format!("{fixtures}/captions"), &items)?;

    let mut reports = Vec::new();
    for mode in EvalMode::ALL {
        let providers = Providers::new(
            Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
            Arc::new(Embedder::hashing(256)),
        );
        reports.push((mode.to_string(), evaluate(&items, &captions, &EvalConfig::default(), mode, &providers)?));
    }
    let rows: Vec<_> = reports.iter().map(|(m, r)| (m.clone(), r)).collect();
    print!("{}", render_table(&rows));
    Ok(())
}
