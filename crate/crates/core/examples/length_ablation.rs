//! Halves and doubles the caption rate and compares accuracy and cost.

use std::sync::Arc;

use langrepo::embed::Embedder;
use langrepo::eval::{load_captions_dir, load_qa_dataset, render_table, run_length_ablation, EvalConfig, EvalMode};
use langrepo::ingest::RateFactor;
use langrepo::llm::{LlmClient, MockBackend};
use langrepo::repository::Providers;

fn main() -> Result<(), langrepo::Error> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let items = load_qa_dataset(format!("{fixtures}/dataset.json"))?;
    let captions = load_captions_dir(format!("{fixtures}/captions"), &items)?;
    let providers = Providers::new(
        Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
        Arc::new(Embedder::hashing(256)),
    );

    for mode in [EvalMode::Langrepo, EvalMode::LloviWhole] {
        let reports = run_length_ablation(&items, &captions, &RateFactor::ALL, &EvalConfig::default(), mode, &providers)?;
        let rows: Vec<_> = reports.iter().map(|(f, r)| (format!("{mode} @ {f}"), r)).collect();
        print!("{}", render_table(&rows));
    }
    Ok(())
}
