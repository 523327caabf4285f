use rayon::prelude::*;

use crate::error::Result;
use crate::llm::{GenerationRequest, Purpose};

use super::{BuildConfig, Providers, RepoDescription, Repository};

/// Renders `[0.0s-1.0s, 4.0s-5.0s] text (x3)` according to the metadata flags.
///
/// The occurrence suffix is omitted for single occurrences.
pub fn render_description_line(d: &RepoDescription, cfg: &BuildConfig) -> String {
    let mut line = String::new();
    if cfg.include_timestamps && !d.timestamps.is_empty() {
        let spans: Vec<String> = d
            .timestamps
            .iter()
            .map(|[s, e]| format!("{s:.1}s-{e:.1}s"))
            .collect();
        line.push('[');
        line.push_str(&spans.join(", "));
        line.push_str("] ");
    }
    line.push_str(&d.text);
    if cfg.include_occurrences && d.occurrences > 1 {
        line.push_str(&format!(" (x{})", d.occurrences));
    }
    line
}

/// Summarizes every entry of the `cfg.read_scales` coarsest scales.
///
/// Returns one summary per entry, ordered by scale then chunk index. The
/// coarsest scale is always read. `question` is only used when
/// `cfg.question_conditioning` is set.
pub fn read_from_repo(
    repo: &Repository,
    cfg: &BuildConfig,
    question: Option<&str>,
    providers: &Providers,
) -> Result<Vec<String>> {
    let first = repo.scales.len().saturating_sub(cfg.read_scales.max(1));
    let question = question.filter(|_| cfg.question_conditioning);
    let prompts: Vec<String> = repo.scales[first..]
        .iter()
        .flat_map(|scale| scale.iter())
        .map(|entry| {
            let lines: Vec<String> = entry
                .descriptions
                .iter()
                .map(|d| render_description_line(d, cfg))
                .collect();
            providers.prompts.render_summarize(&lines, question)
        })
        .collect();
    prompts
        .into_par_iter()
        .map(|prompt| {
            let req = GenerationRequest::new(Purpose::Summarize, prompt, cfg.summarize_max_tokens);
            Ok(providers.llm.generate(&req)?)
        })
        .collect()
}
