//! Prints every scale of a freshly built repository as rendered lines.

use std::sync::Arc;

use langrepo::embed::Embedder;
use langrepo::ingest::load_captions;
use langrepo::llm::{LlmClient, MockBackend};
use langrepo::repository::{build, render_description_line, BuildConfig, Providers};

fn main() -> Result<(), langrepo::Error> {
    let set = load_captions(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/captions/garden02.json"))?;
    let providers = Providers::new(
        Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
        Arc::new(Embedder::hashing(256)),
    );
    let cfg = BuildConfig {
        include_timestamps: true,
        include_occurrences: true,
        ..Default::default()
    };
    let repo = build(&set, &cfg, &providers)?;
    for (k, entries) in repo.scales.iter().enumerate() {
        println!("scale {k}");
        for e in entries {
            for d in &e.descriptions {
                println!("  [{}] {}", e.chunk_index, render_description_line(d, &cfg));
            }
        }
    }
    Ok(())
}
