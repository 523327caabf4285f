use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn langrepo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langrepo"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Env {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
            config: fixtures().join("config.toml"),
        }
    }

    fn cache(&self) -> PathBuf {
        self.dir.path().join("cache")
    }

    fn build(&self, video: &str) -> PathBuf {
        let out = self.dir.path().join(format!("{video}.repo.json"));
        let captions = fixtures().join(format!("captions/{video}.json"));
        let o = langrepo(&[
            "build",
            "--config",
            path(&self.config),
            "--cache-dir",
            path(&self.cache()),
            "--captions",
            path(&captions),
            "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    }
}

#[test]
fn build_writes_repository() {
    let env = Env::new();
    let out = env.build("kitchen01");
    let repo = langrepo::repository::Repository::load(&out).unwrap();
    assert_eq!(repo.chunk_counts(), vec![4, 3, 2]);
    assert_eq!(repo.occurrence_totals(), vec![12, 12, 12]);
}

#[test]
fn build_reports_counts() {
    let env = Env::new();
    let out = env.dir.path().join("r.json");
    let o = langrepo(&[
        "build",
        "--config",
        path(&env.config),
        "--captions",
        path(&fixtures().join("captions/garden02.json")),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("scale 0: 4 entries"), "{text}");
    assert!(text.contains("llm calls: rephrase="), "{text}");
}

#[test]
fn bad_schedule_is_a_config_error() {
    let env = Env::new();
    let o = langrepo(&[
        "build",
        "--config",
        path(&fixtures().join("bad_schedule.toml")),
        "--captions",
        path(&fixtures().join("captions/kitchen01.json")),
        "--out",
        path(&env.dir.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("strictly decreasing"), "{}", stderr(&o));
}

#[test]
fn missing_captions_path_is_a_usage_error() {
    let env = Env::new();
    let o = langrepo(&[
        "build",
        "--captions",
        "/nonexistent/captions.json",
        "--out",
        path(&env.dir.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn answer_prints_argmax_and_reuses_the_repository() {
    let env = Env::new();
    let repo = env.build("kitchen01");
    let ask = || {
        langrepo(&[
            "answer",
            "--config",
            path(&env.config),
            "--cache-dir",
            path(&env.cache()),
            "--repo",
            path(&repo),
            "--question",
            "What did C take from the fridge",
            "--options",
            "a carton of milk",
            "an egg",
            "a tomato",
            "a bottle of juice",
            "nothing",
        ])
    };
    let first = ask();
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    // The mock scorer prefers the shortest continuation.
    assert!(text.contains("answer: B: an egg"), "{text}");
    assert!(text.contains("rephrase=0"), "{text}");
    let second = stdout(&ask());
    assert!(second.contains("rephrase=0 summarize=0 qa=0 score=0"), "{second}");
}

#[test]
fn generative_answer_needs_five_options() {
    let env = Env::new();
    let repo = env.build("kitchen01");
    let o = langrepo(&[
        "answer",
        "--classifier",
        "generative",
        "--repo",
        path(&repo),
        "--question",
        "q",
        "--options",
        "a",
        "b",
        "c",
        "d",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exactly 5 options"), "{}", stderr(&o));
}

#[test]
fn eval_writes_report_and_predictions() {
    let env = Env::new();
    let out = env.dir.path().join("eval");
    let o = langrepo(&[
        "eval",
        "--config",
        path(&env.config),
        "--dataset",
        path(&fixtures().join("dataset.json")),
        "--captions-dir",
        path(&fixtures().join("captions")),
        "--mode",
        "langrepo",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report-langrepo.json")).unwrap()).unwrap();
    assert_eq!(report["n_items"], 4);
    let acc = report["overall_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let preds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("predictions-langrepo.json")).unwrap()).unwrap();
    assert_eq!(preds["predictions"].as_array().unwrap().len(), 4);
    assert!(stdout(&o).contains("accuracy"));
}

#[test]
fn ablate_length_writes_three_reports() {
    let env = Env::new();
    let out = env.dir.path().join("ablate");
    let o = langrepo(&[
        "ablate-length",
        "--dataset",
        path(&fixtures().join("dataset.json")),
        "--captions-dir",
        path(&fixtures().join("captions")),
        "--mode",
        "llovi-whole",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["0.5", "1", "2"] {
        assert!(out.join(format!("report-llovi-whole-{f}.json")).exists(), "factor {f}");
    }
}

#[test]
fn inspect_filters_by_scale() {
    let env = Env::new();
    let repo = env.build("kitchen01");
    let o = langrepo(&["inspect", "--repo", path(&repo), "--scale", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("== scale 1"), "{text}");
    assert!(!text.contains("== scale 0") && !text.contains("== scale 2"), "{text}");
    assert!(text.contains("s-"), "timestamps rendered: {text}");

    let o = langrepo(&["inspect", "--repo", path(&repo), "--scale", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rerun_with_disk_cache_makes_no_backend_calls() {
    let env = Env::new();
    env.build("garden02");
    let out = env.dir.path().join("again.json");
    let o = langrepo(&[
        "build",
        "--config",
        path(&env.config),
        "--cache-dir",
        path(&env.cache()),
        "--captions",
        path(&fixtures().join("captions/garden02.json")),
        "--out",
        path(&out),
    ]);
    assert!(stdout(&o).contains("rephrase=0 summarize=0 qa=0 score=0"), "{}", stdout(&o));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(langrepo(&["frobnicate"]).status.code(), Some(2));
}
