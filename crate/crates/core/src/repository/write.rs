use crate::embed::similarity_matrix;
use crate::error::Result;
use crate::grouping::{match_and_group, split};
use crate::ingest::{split_evenly, Chunk};
use crate::llm::{GenerationRequest, Purpose};
use crate::prompts::{parse_rephrase_output, RephrasePromptInput};

use super::{merge_spans, BuildConfig, Providers, RepoDescription, RepoEntry};

/// Joins member texts of a group whose rephrase reply never parsed.
pub const FALLBACK_SEPARATOR: &str = "; ";

/// Prunes one chunk into a repository entry.
///
/// Similar descriptions are grouped, every group is rephrased in a single
/// LLM call, and ungrouped descriptions are copied verbatim. If the reply
/// cannot be parsed after `cfg.rephrase_retries` re-asks, each group falls
/// back to its member texts joined by [`FALLBACK_SEPARATOR`].
pub fn write_to_repo(
    chunk: &Chunk<RepoDescription>,
    scale: usize,
    cfg: &BuildConfig,
    providers: &Providers,
) -> Result<RepoEntry> {
    assert!(!chunk.items.is_empty(), "cannot write an empty chunk");
    let items = &chunk.items;
    let entry = |descriptions| RepoEntry {
        scale,
        chunk_index: chunk.index,
        descriptions,
    };
    if items.len() == 1 {
        return Ok(entry(items.clone()));
    }

    let sides = split(items.len(), cfg.dst_ratio);
    let texts: Vec<String> = items.iter().map(|d| d.text.clone()).collect();
    let vectors = providers.embedder.embed_texts(&texts)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>();
    let sim = similarity_matrix(&pick(&sides.src_indices), &pick(&sides.dst_indices))?;
    let grouping = match_and_group(&sim, &sides, cfg.grouping_ratio)?;
    if grouping.groups.is_empty() {
        return Ok(entry(items.clone()));
    }

    let members: Vec<Vec<usize>> = grouping.groups.iter().map(|g| g.members()).collect();
    let member_texts: Vec<Vec<&str>> = members
        .iter()
        .map(|m| m.iter().map(|&i| items[i].text.as_str()).collect())
        .collect();
    let rephrased = rephrase_groups(&member_texts, chunk.index, scale, cfg, providers)?;

    // (first member index, description)
    let mut out: Vec<(usize, RepoDescription)> = members
        .iter()
        .zip(rephrased)
        .map(|(m, text)| {
            let founding = m.iter().map(|&i| &items[i]);
            let desc = RepoDescription {
                text,
                timestamps: merge_spans(founding.clone().flat_map(|d| d.timestamps.iter().copied())),
                occurrences: founding.map(|d| d.occurrences).sum(),
            };
            (m[0], desc)
        })
        .collect();
    out.extend(grouping.pass_through.iter().map(|&i| (i, items[i].clone())));
    out.sort_by(|a, b| {
        a.1.earliest_start()
            .total_cmp(&b.1.earliest_start())
            .then(a.0.cmp(&b.0))
    });
    Ok(entry(out.into_iter().map(|(_, d)| d).collect()))
}

fn rephrase_groups(
    member_texts: &[Vec<&str>],
    chunk_index: usize,
    scale: usize,
    cfg: &BuildConfig,
    providers: &Providers,
) -> Result<Vec<String>> {
    let prompt = providers
        .prompts
        .render_rephrase(&RephrasePromptInput::from_members(member_texts));
    for attempt in 0..=cfg.rephrase_retries {
        let req = GenerationRequest::new(Purpose::Rephrase, prompt.clone(), cfg.rephrase_max_tokens)
            .with_attempt(attempt);
        let reply = providers.llm.generate(&req)?;
        match parse_rephrase_output(&reply, member_texts.len()) {
            Ok(items) => return Ok(items),
            Err(e) => log::warn!(
                "scale {scale} chunk {chunk_index}: unusable rephrase reply (attempt {}): {e}",
                attempt + 1
            ),
        }
    }
    log::warn!("scale {scale} chunk {chunk_index}: falling back to joined group texts");
    Ok(member_texts
        .iter()
        .map(|m| m.join(FALLBACK_SEPARATOR))
        .collect())
}

/// Re-splits all descriptions of one scale, in temporal order, into `m` chunks.
pub fn re_chunk(entries: &[RepoEntry], m: usize) -> Vec<Chunk<RepoDescription>> {
    let mut ordered: Vec<&RepoEntry> = entries.iter().collect();
    ordered.sort_by_key(|e| e.chunk_index);
    let mut all: Vec<RepoDescription> = ordered
        .into_iter()
        .flat_map(|e| e.descriptions.iter().cloned())
        .collect();
    all.sort_by(|a, b| a.earliest_start().total_cmp(&b.earliest_start()));
    split_evenly(&all, m.max(1))
        .into_iter()
        .enumerate()
        .map(|(index, items)| Chunk { index, items })
        .collect()
}
