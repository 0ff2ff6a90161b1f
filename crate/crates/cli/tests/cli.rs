use std::path::Path;
use std::process::{Command, Output};

fn ctxmatch(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ctxmatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "ctxmatch {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const CONFIG: &str = r#"
seed = 4

[input]
table_a = "pair/a.csv"
table_b = "pair/b.csv"
meta_a = "pair/a.meta.toml"
meta_b = "pair/b.meta.toml"
truth = "pair/truth.csv"

[walks]
walk_length = 20
walks_per_node = 2

[train]
epochs = 2
dim = 32
"#;

fn prepare(dir: &Path) {
    ctxmatch(
        dir,
        &[
            "synth",
            "--rows",
            "60",
            "--cols",
            "6",
            "--seed",
            "4",
            "--out",
            "base.csv",
            "--meta",
            "base.meta.toml",
        ],
    );
    ctxmatch(
        dir,
        &[
            "perturb",
            "overlap",
            "--table",
            "base.csv",
            "--meta",
            "base.meta.toml",
            "--column-overlap",
            "1.0",
            "--row-overlap",
            "0.5",
            "--rename-noise",
            "--seed",
            "4",
            "--out-dir",
            "pair",
        ],
    );
    std::fs::write(dir.join("config.toml"), CONFIG).unwrap();
}

#[test]
fn run_then_eval_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    ctxmatch(dir, &["run", "--config", "config.toml", "--out-dir", "out"]);

    let eval = ctxmatch(
        dir,
        &[
            "eval",
            "--truth",
            "pair/truth.csv",
            "--pred",
            "out/sm_predictions.csv",
        ],
    );
    let eval: toml::Table = toml::from_str(&String::from_utf8(eval.stdout).unwrap()).unwrap();
    let report: toml::Table =
        toml::from_str(&std::fs::read_to_string(dir.join("out/sm_report.toml")).unwrap()).unwrap();
    assert_eq!(eval["sm"]["f1"], report["f1"]);
    assert_eq!(eval["sm"]["true_positives"], report["true_positives"]);
}

#[test]
fn staged_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    ctxmatch(
        dir,
        &[
            "profile",
            "--table",
            "pair/a.csv",
            "--meta",
            "pair/a.meta.toml",
            "--out",
            "profile.csv",
        ],
    );
    ctxmatch(
        dir,
        &["simmatrix", "--config", "config.toml", "--out", "sim.csv"],
    );
    ctxmatch(
        dir,
        &[
            "build-graph",
            "--config",
            "config.toml",
            "--out",
            "graph.txt",
            "--stats",
            "stats.toml",
        ],
    );
    ctxmatch(
        dir,
        &[
            "walk",
            "--config",
            "config.toml",
            "--graph",
            "graph.txt",
            "--out",
            "corpus.txt",
        ],
    );
    ctxmatch(
        dir,
        &[
            "train",
            "--config",
            "config.toml",
            "--corpus",
            "corpus.txt",
            "--out",
            "emb.vec",
        ],
    );
    ctxmatch(
        dir,
        &[
            "match",
            "--config",
            "config.toml",
            "--graph",
            "graph.txt",
            "--embeddings",
            "emb.vec",
            "--out",
            "pred.csv",
        ],
    );
    ctxmatch(
        dir,
        &[
            "eval",
            "--truth",
            "pair/truth.csv",
            "--pred",
            "pred.csv",
            "--out",
            "eval.toml",
        ],
    );
    for f in [
        "profile.csv",
        "sim.csv",
        "graph.txt",
        "stats.toml",
        "corpus.txt",
        "emb.vec",
        "pred.csv",
        "eval.toml",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let header = std::fs::read_to_string(dir.join("emb.vec")).unwrap();
    assert!(header.lines().next().unwrap().ends_with(" 32"));
}

#[test]
fn missing_injection_hits_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    ctxmatch(
        dir,
        &[
            "perturb",
            "missing",
            "--table",
            "base.csv",
            "--rate",
            "0.3",
            "--seed",
            "1",
            "--out",
            "holes.csv",
        ],
    );
    let opts = ctxmatch_core::tabular::CsvOptions::default();
    let t = ctxmatch_core::tabular::load_table(dir.join("holes.csv"), "T", &opts).unwrap();
    let t = ctxmatch_core::tabular::normalize_missing_default(&t, &[]);
    assert!(
        (t.missing_rate() - 0.3).abs() <= 1.0 / t.n_cells() as f64,
        "rate {}",
        t.missing_rate()
    );
}
