//! Builds a three-scale repository from a caption file with the offline
//! mock backend and saves it.
//!
//! cargo run --example build_repository -- [captions.json] [out.json]

use std::sync::Arc;

use langrepo::embed::Embedder;
use langrepo::ingest::load_captions;
use langrepo::llm::{LlmClient, MockBackend};
use langrepo::repository::{build, BuildConfig, Providers};

fn main() -> Result<(), langrepo::Error> {
    let mut args = std::env::args().skip(1);
    let captions = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/captions/kitchen01.json").into());
    let out = args.next().unwrap_or_else(|| "kitchen01.repo.json".into());

    let set = load_captions(&captions)?;
    let providers = Providers::new(
        Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
        Arc::new(Embedder::hashing(256)),
    );
    let cfg = BuildConfig {
        chunk_schedule: vec![4, 3, 2],
        grouping_ratio: 0.5,
        ..Default::default()
    };
    let repo = build(&set, &cfg, &providers)?;
    repo.save(&out)?;

    println!("{} captions -> {out}", set.len());
    for (k, (entries, descs)) in repo.chunk_counts().iter().zip(repo.description_counts()).enumerate() {
        println!("scale {k}: {entries} entries, {descs} descriptions");
    }
    println!("{}", providers.llm.ledger());
    Ok(())
}
