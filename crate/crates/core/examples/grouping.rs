//! Splits a chunk into destinations and sources, then merges the most
//! similar sources into their best destination.

use langrepo::embed::{similarity_matrix, Embedder};
use langrepo::grouping::{match_and_group, split};

fn main() -> Result<(), langrepo::Error> {
    let captions: Vec<String> = [
        "C opens the fridge",
        "C takes out a carton of milk",
        "C opens the fridge door",
        "C pours milk into a cup",
        "C pours milk into a glass",
        "C closes the fridge",
        "C stirs the milk",
        "C stirs the milk with a spoon",
    ]
    .map(String::from)
    .to_vec();

    let embedder = Embedder::hashing(256);
    let vectors = embedder.embed_texts(&captions)?;
    let sides = split(captions.len(), 0.25);
    let pick = |idx: &[usize]| idx.iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>();
    let sim = similarity_matrix(&pick(&sides.src_indices), &pick(&sides.dst_indices))?;

    for x in [0.0, 0.5, 1.0] {
        let grouping = match_and_group(&sim, &sides, x)?;
        println!("x = {x}: {} -> {} descriptions", captions.len(), grouping.output_count());
        for g in &grouping.groups {
            let texts: Vec<&str> = g.members().iter().map(|&i| captions[i].as_str()).collect();
            println!("  group at {}: {}", g.dst_index, texts.join(" | "));
        }
        for &i in &grouping.pass_through {
            println!("  kept {i}: {}", captions[i]);
        }
    }
    Ok(())
}
