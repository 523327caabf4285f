//! Reads a repository into summaries and answers one question with both
//! classifiers.

use std::sync::Arc;

use langrepo::embed::Embedder;
use langrepo::ingest::load_captions;
use langrepo::llm::{LlmClient, MockBackend};
use langrepo::prompts::LoglikFormat;
use langrepo::repository::{build, read_from_repo, BuildConfig, Providers};
use langrepo::vqa::{answer_generative, answer_loglik, QaItem};

fn main() -> Result<(), langrepo::Error> {
    let set = load_captions(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/captions/kitchen01.json"))?;
    let providers = Providers::new(
        Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
        Arc::new(Embedder::hashing(256)),
    );
    let cfg = BuildConfig {
        include_timestamps: true,
        ..Default::default()
    };
    let repo = build(&set, &cfg, &providers)?;

    let item = QaItem {
        question_id: "demo".into(),
        video_id: set.video_id.clone(),
        question: "What did C do after pouring the milk".into(),
        options: vec![
            "opened the fridge".into(),
            "stirred the milk with a spoon".into(),
            "washed a plate".into(),
            "left the kitchen".into(),
            "watered plants".into(),
        ],
        answer_index: Some(1),
        split_tag: None,
    };
    let summaries = read_from_repo(&repo, &cfg, Some(&item.question), &providers)?;
    for s in &summaries {
        println!("summary: {s}");
    }

    let loglik = answer_loglik(&summaries, &item, LoglikFormat::Plain, &providers.llm)?;
    println!("log-likelihood choice {} scores {:?}", loglik.choice_index, loglik.per_option_scores.unwrap_or_default());
    let generative = answer_generative(&summaries, &item, set.duration_s, &providers.llm)?;
    println!("generative choice {} from reply {:?}", generative.choice_index, generative.raw_output.unwrap_or_default());
    Ok(())
}
