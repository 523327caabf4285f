//! Command-line front end: configuration loading and the subcommands.
//!
//! Exit codes are 0 on success, 2 for usage or configuration errors and 1
//! for failures while running.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, EmbeddingProviderConfig};
use crate::error::Error;
use crate::eval::{
    evaluate, load_captions_dir, load_qa_dataset, predictions_json, render_table, run_length_ablation,
    EvalConfig, EvalMode, EvalReport,
};
use crate::ingest::{load_captions, RateFactor};
use crate::llm::{LlmBackend, LlmClient, MockBackend, OpenAiBackend, OpenAiConfig};
use crate::prompts::{option_letter, LoglikFormat, PromptError, PromptSet};
use crate::repository::{build, read_from_repo, render_description_line, BuildConfig, Providers, RepoError, Repository};
use crate::retry::RetryPolicy;
use crate::vqa::{answer, Classifier, QaItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Deterministic offline backend.
    #[default]
    Mock,
    /// Any OpenAI-compatible HTTP server.
    Openai,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub backend: BackendKind,
    #[serde(flatten)]
    pub openai: OpenAiConfig,
    pub retry: RetryPolicy,
}

/// Contents of the TOML configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub llm: LlmSettings,
    pub embed: EmbeddingProviderConfig,
    pub build: BuildConfig,
    /// Persistent LLM response cache; in-memory only when unset.
    pub cache_dir: Option<PathBuf>,
    /// Bound on concurrent LLM requests.
    pub parallelism: usize,
    pub classifier: Classifier,
    pub loglik_format: LoglikFormat,
    pub seed: Option<u64>,
    /// Directory holding `rephrase.txt` and `summarize.txt` overrides.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            llm: LlmSettings::default(),
            embed: EmbeddingProviderConfig::default(),
            build: BuildConfig::default(),
            cache_dir: None,
            parallelism: LlmClient::DEFAULT_PARALLELISM,
            classifier: Classifier::default(),
            loglik_format: LoglikFormat::default(),
            seed: None,
            prompts_dir: None,
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| AppError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.build.validate().map_err(|e| e.to_string())?;
        self.embed.validate().map_err(|e| e.to_string())?;
        if self.parallelism == 0 {
            return Err("parallelism must be positive".into());
        }
        if self.llm.backend == BackendKind::Openai
            && (self.llm.openai.endpoint.is_empty() || self.llm.openai.model.is_empty())
        {
            return Err("the openai backend needs llm.endpoint and llm.model".into());
        }
        Ok(())
    }

    pub fn providers(&self) -> Result<Providers, Error> {
        let backend: Arc<dyn LlmBackend> = match self.llm.backend {
            BackendKind::Mock => Arc::new(MockBackend::new()),
            BackendKind::Openai => Arc::new(OpenAiBackend::new(self.llm.openai.clone())),
        };
        let mut llm = LlmClient::new(backend)
            .with_retry(self.llm.retry.clone())
            .with_parallelism(self.parallelism);
        if let Some(dir) = &self.cache_dir {
            llm = llm.with_cache_dir(dir)?;
        }
        let prompts = match &self.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::default(),
        };
        Ok(Providers::new(Arc::new(llm), Arc::new(Embedder::from_config(&self.embed)?)).with_prompts(prompts))
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            build: self.build.clone(),
            classifier: self.classifier,
            loglik_format: self.loglik_format,
            seed: self.seed,
        }
    }
}

#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Runtime(Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(m) => f.write_str(m),
            AppError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => AppError::Usage(m),
            Error::Repo(RepoError::InvalidConfig(m)) => AppError::Usage(m),
            Error::Prompt(e @ PromptError::OptionCountError { .. }) => AppError::Usage(e.to_string()),
            other => AppError::Runtime(other),
        }
    }
}

impl From<RepoError> for AppError {
    fn from(e: RepoError) -> Self {
        Error::Repo(e).into()
    }
}

#[derive(Debug, Parser)]
#[command(name = "langrepo", version, about = "Build and query multi-scale textual repositories of captioned videos")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_parser = parse_classifier)]
    pub classifier: Option<Classifier>,
    #[arg(long, global = true, value_parser = parse_format)]
    pub loglik_format: Option<LoglikFormat>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a repository from a caption file.
    Build {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one multiple-choice question from a built repository.
    Answer {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, num_args = 1.., required = true)]
        options: Vec<String>,
    },
    /// Evaluate a QA dataset and write report and predictions files.
    Eval(EvalArgs),
    /// Evaluate at half, identity and double caption rates.
    AblateLength(EvalArgs),
    /// Print the entries of a repository.
    Inspect {
        #[arg(long)]
        repo: PathBuf,
        /// Only print this scale.
        #[arg(long)]
        scale: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory with one `<video_id>.json` caption file per video.
    #[arg(long)]
    pub captions_dir: PathBuf,
    #[arg(long, default_value = "langrepo")]
    pub mode: EvalMode,
    /// Output directory for reports and predictions.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl clap::ValueEnum for EvalMode {
    fn value_variants<'a>() -> &'a [Self] {
        &EvalMode::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.as_str()))
    }
}

fn parse_classifier(s: &str) -> Result<Classifier, String> {
    match s {
        "generative" => Ok(Classifier::Generative),
        "loglik" => Ok(Classifier::Loglik),
        _ => Err("expected generative or loglik".into()),
    }
}

fn parse_format(s: &str) -> Result<LoglikFormat, String> {
    match s {
        "plain" => Ok(LoglikFormat::Plain),
        "structured" => Ok(LoglikFormat::Structured),
        _ => Err("expected plain or structured".into()),
    }
}

fn require_path(path: &Path, what: &str) -> Result<(), AppError> {
    if path.exists() {
        Ok(())
    } else {
        Err(AppError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents).map_err(|source| {
        AppError::Runtime(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

/// Loads the config file if given and applies flag overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<AppConfig, AppError> {
    let mut cfg = match &global.config {
        Some(path) => {
            require_path(path, "config")?;
            AppConfig::load(path)?
        }
        None => AppConfig::default(),
    };
    if let Some(d) = &global.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(p) = global.parallelism {
        cfg.parallelism = p;
    }
    if let Some(c) = global.classifier {
        cfg.classifier = c;
    }
    if let Some(f) = global.loglik_format {
        cfg.loglik_format = f;
    }
    if global.seed.is_some() {
        cfg.seed = global.seed;
    }
    cfg.validate().map_err(AppError::Usage)?;
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Build { captions, out } => cmd_build(&cfg, &captions, &out),
        Command::Answer { repo, question, options } => cmd_answer(&cfg, &repo, &question, &options),
        Command::Eval(args) => cmd_eval(&cfg, &args),
        Command::AblateLength(args) => cmd_ablate_length(&cfg, &args),
        Command::Inspect { repo, scale } => cmd_inspect(&repo, scale),
    }
}

pub fn cmd_build(cfg: &AppConfig, captions: &Path, out: &Path) -> Result<(), AppError> {
    require_path(captions, "captions file")?;
    let set = load_captions(captions).map_err(Error::from)?;
    let providers = cfg.providers()?;
    let repo = build(&set, &cfg.build, &providers)?;
    repo.save(out)?;
    println!("wrote {}", out.display());
    println!("video {} ({} captions, {:.1}s)", repo.video_id, set.len(), repo.duration_s);
    let descs = repo.description_counts();
    for (k, (chunks, d)) in repo.chunk_counts().iter().zip(&descs).enumerate() {
        println!("scale {k}: {chunks} entries, {d} descriptions");
    }
    println!("llm calls: {}", providers.llm.ledger());
    Ok(())
}

pub fn cmd_answer(cfg: &AppConfig, repo_path: &Path, question: &str, options: &[String]) -> Result<(), AppError> {
    require_path(repo_path, "repository")?;
    let repo = Repository::load(repo_path)?;
    let item = QaItem {
        question_id: "cli".into(),
        video_id: repo.video_id.clone(),
        question: question.into(),
        options: options.to_vec(),
        answer_index: None,
        split_tag: None,
    };
    item.validate().map_err(AppError::Usage)?;
    if cfg.classifier == Classifier::Generative && !item.is_generative_compatible() {
        return Err(AppError::Usage(format!(
            "the generative classifier needs exactly 5 options, got {}",
            options.len()
        )));
    }
    let providers = cfg.providers()?;
    let descriptions = read_from_repo(&repo, &cfg.build, Some(question), &providers)?;
    let p = answer(
        &descriptions,
        &item,
        repo.duration_s,
        cfg.classifier,
        cfg.loglik_format,
        &providers.llm,
    )?;
    println!("answer: {}: {}", option_letter(p.choice_index), options[p.choice_index]);
    if let Some(scores) = &p.per_option_scores {
        for (i, s) in scores.iter().enumerate() {
            println!("  {}: {s:.4}  {}", option_letter(i), options[i]);
        }
    }
    if let Some(raw) = &p.raw_output {
        println!("raw reply: {raw}");
    }
    if p.fallback {
        println!("no answer letter found; fell back to A");
    }
    println!("llm calls: {}", providers.llm.ledger());
    Ok(())
}

fn load_eval_inputs(args: &EvalArgs) -> Result<(Vec<QaItem>, HashMap<String, crate::ingest::CaptionSet>), AppError> {
    require_path(&args.dataset, "dataset")?;
    require_path(&args.captions_dir, "captions directory")?;
    let items = load_qa_dataset(&args.dataset)?;
    let captions = load_captions_dir(&args.captions_dir, &items)?;
    std::fs::create_dir_all(&args.out).map_err(|source| {
        AppError::Runtime(Error::Io {
            path: args.out.display().to_string(),
            source,
        })
    })?;
    Ok((items, captions))
}

fn write_report(out: &Path, stem: &str, report: &EvalReport) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    write_file(&out.join(format!("report-{stem}.json")), &json)?;
    write_file(
        &out.join(format!("predictions-{stem}.json")),
        &predictions_json(&report.predictions),
    )
}

pub fn cmd_eval(cfg: &AppConfig, args: &EvalArgs) -> Result<(), AppError> {
    let (items, captions) = load_eval_inputs(args)?;
    let providers = cfg.providers()?;
    let report = evaluate(&items, &captions, &cfg.eval_config(), args.mode, &providers)?;
    write_report(&args.out, args.mode.as_str(), &report)?;
    print!("{}", render_table(&[(args.mode.to_string(), &report)]));
    if report.n_unscored > 0 {
        println!("{} items without answers; see the predictions file", report.n_unscored);
    }
    Ok(())
}

pub fn cmd_ablate_length(cfg: &AppConfig, args: &EvalArgs) -> Result<(), AppError> {
    let (items, captions) = load_eval_inputs(args)?;
    let providers = cfg.providers()?;
    let reports = run_length_ablation(
        &items,
        &captions,
        &RateFactor::ALL,
        &cfg.eval_config(),
        args.mode,
        &providers,
    )?;
    let mut rows = Vec::new();
    for (f, r) in &reports {
        write_report(&args.out, &format!("{}-{}", args.mode, f.as_f64()), r)?;
        rows.push((format!("{} @ {f}", args.mode), r));
    }
    print!("{}", render_table(&rows));
    Ok(())
}

pub fn cmd_inspect(repo_path: &Path, scale: Option<usize>) -> Result<(), AppError> {
    require_path(repo_path, "repository")?;
    let repo = Repository::load(repo_path)?;
    if let Some(k) = scale {
        if k >= repo.num_scales() {
            return Err(AppError::Usage(format!(
                "scale {k} out of range; repository has {} scales",
                repo.num_scales()
            )));
        }
    }
    let p = &repo.provenance;
    println!(
        "video {} ({:.1}s), captioner {}, templates {}, llm {}, embedder {}",
        repo.video_id, repo.duration_s, p.captioner, p.template_version, p.backend_id, p.embedder_id
    );
    let render = BuildConfig {
        include_timestamps: true,
        include_occurrences: true,
        ..repo.config.clone()
    };
    for (k, entries) in repo.scales.iter().enumerate() {
        if scale.is_some_and(|s| s != k) {
            continue;
        }
        println!("== scale {k} ({} entries)", entries.len());
        for e in entries {
            println!("-- entry {} ({} descriptions)", e.chunk_index, e.descriptions.len());
            for d in &e.descriptions {
                println!("   {}", render_description_line(d, &render));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = AppConfig::from_toml(
            r#"
            parallelism = 2
            classifier = "generative"
            [llm]
            backend = "openai"
            endpoint = "http://localhost:9000/v1"
            model = "m"
            [llm.retry]
            max_retries = 5
            [embed]
            kind = "hashing"
            dimension = 32
            [build]
            chunk_schedule = [3, 2]
            grouping_ratio = 0.25
            "#,
        )
        .unwrap();
        assert_eq!(cfg.llm.backend, BackendKind::Openai);
        assert_eq!(cfg.llm.openai.endpoint, "http://localhost:9000/v1");
        assert_eq!(cfg.llm.retry.max_retries, 5);
        assert_eq!(cfg.build.chunk_schedule, vec![3, 2]);
        assert_eq!(cfg.build.dst_ratio, BuildConfig::default().dst_ratio);
        assert_eq!(cfg.classifier, Classifier::Generative);
        assert_eq!(AppConfig::from_toml("").unwrap(), AppConfig::default());
    }

    #[test]
    fn invalid_configs_rejected() {
        let err = AppConfig::from_toml("[build]\nchunk_schedule = [2, 3]").unwrap_err();
        assert!(err.contains("decreasing"), "{err}");
        assert!(AppConfig::from_toml("parallelism = 0").is_err());
        assert!(AppConfig::from_toml("unknown_key = 1").is_err());
        assert!(AppConfig::from_toml("[embed]\nkind = \"http-endpoint\"").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(AppError::from(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(AppError::from(Error::MissingCaptions("v".into())).exit_code(), 1);
    }
}
