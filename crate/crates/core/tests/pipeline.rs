use std::collections::HashSet;

use ctxmatch_core::graph::tok_key;
use ctxmatch_core::harness::{
    build_graph, load_inputs, make_overlap_pair, run_on_tables, sweep, synth_table, InputConfig,
    Mode, OverlapOptions, PipelineConfig, PreparedTable, Property, SweepSpec, SynthConfig,
};
use ctxmatch_core::matching::{entity_candidates, CandidateMode};
use ctxmatch_core::tabular::{tokenize_cell, write_table, TableMetadata};

fn light(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        ..Default::default()
    };
    cfg.walks.walk_length = 30;
    cfg.walks.walks_per_node = 3;
    cfg.train.epochs = 3;
    cfg
}

fn renamed_duplicate(
    rows: usize,
    cols: usize,
    seed: u64,
) -> (
    PreparedTable,
    PreparedTable,
    ctxmatch_core::matching::GroundTruth,
) {
    let base = synth_table(&SynthConfig {
        n_rows: rows,
        n_cols: cols,
        seed,
        ..Default::default()
    })
    .unwrap();
    let opts = OverlapOptions {
        rename_noise: true,
        ..Default::default()
    };
    let pair = make_overlap_pair(&base, 1.0, 1.0, &opts, seed).unwrap();
    (pair.a.into(), pair.b.into(), pair.truth)
}

#[test]
fn small_duplicate_is_recovered() {
    let (a, b, truth) = renamed_duplicate(150, 8, 3);
    let out = run_on_tables(&a, &b, &truth, &light(3), None).unwrap();
    assert_eq!(out.sm.f1, 1.0);
    assert!(out.er.f1 > 0.9, "ER F1 {}", out.er.f1);
    assert!(out.stats.cid_cid_edges() > 0);
}

#[test]
fn in_memory_runs_repeat_exactly() {
    let (a, b, truth) = renamed_duplicate(80, 6, 4);
    let run = || {
        let out = run_on_tables(&a, &b, &truth, &light(9), None).unwrap();
        let mut vecs = Vec::new();
        out.space.write_word2vec(&mut vecs).unwrap();
        (
            out.sm.to_toml(),
            out.er.to_toml(),
            out.corpus_fingerprint,
            vecs,
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn blocking_keeps_every_token_sharing_true_pair() {
    let (a, b, truth) = renamed_duplicate(60, 6, 5);
    let cfg = light(5);
    let (tables, _, g, _) = build_graph(&a, &b, &cfg).unwrap();
    let blocked: HashSet<_> = entity_candidates(&g, CandidateMode::Blocking)
        .into_iter()
        .collect();
    let complete: HashSet<_> = entity_candidates(&g, CandidateMode::Complete)
        .into_iter()
        .collect();
    assert!(blocked.is_subset(&complete));

    let tokens = |t: &ctxmatch_core::tabular::TableData, key: &str| -> HashSet<String> {
        let r = t.row_keys().iter().position(|k| k == key).unwrap();
        t.rows()[r]
            .iter()
            .flatten()
            .flat_map(|v| tokenize_cell(v, cfg.graph.tokenize))
            .map(|tok| tok_key(&tok))
            .filter(|k| g.id_of(k).is_some())
            .collect()
    };
    for (ra, rb) in &truth.row_pairs {
        if tokens(&tables[0], ra).is_disjoint(&tokens(&tables[1], rb)) {
            continue;
        }
        let x = g.id_of(&format!("idx__A_{ra}")).unwrap();
        let y = g.id_of(&format!("idx__B_{rb}")).unwrap();
        assert!(blocked.contains(&(x, y)), "true pair {ra}/{rb} blocked out");
    }
}

#[test]
fn baseline_mode_has_no_column_edges() {
    let (a, b, truth) = renamed_duplicate(60, 6, 6);
    let cfg = PipelineConfig {
        mode: Mode::Baseline,
        ..light(6)
    };
    let out = run_on_tables(&a, &b, &truth, &cfg, None).unwrap();
    assert_eq!(out.stats.cid_cid_edges(), 0);
    assert_eq!(out.merges, 0);
    assert_eq!(out.sm.mode.as_deref(), Some("baseline"));
}

#[test]
fn overlap_pair_survives_csv_round_trip() {
    let base = synth_table(&SynthConfig {
        n_rows: 90,
        n_cols: 10,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let pair = make_overlap_pair(&base, 0.5, 0.3, &OverlapOptions::default(), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (t, name) in [(&pair.a, "a"), (&pair.b, "b")] {
        write_table(t, dir.path().join(format!("{name}.csv"))).unwrap();
        std::fs::write(
            dir.path().join(format!("{name}.meta.toml")),
            TableMetadata::from_table(t).to_toml(),
        )
        .unwrap();
    }
    pair.truth.save(dir.path().join("truth.csv")).unwrap();
    let cfg = PipelineConfig {
        input: InputConfig {
            table_a: Some(dir.path().join("a.csv")),
            table_b: Some(dir.path().join("b.csv")),
            meta_a: Some(dir.path().join("a.meta.toml")),
            meta_b: Some(dir.path().join("b.meta.toml")),
            truth: Some(dir.path().join("truth.csv")),
            ..Default::default()
        },
        ..Default::default()
    };
    let (a, b, truth) = load_inputs(&cfg).unwrap();
    assert_eq!(truth, pair.truth);
    assert_eq!(a.table.row_keys(), pair.a.row_keys());
    assert_eq!(b.table.columns().len(), pair.b.n_cols());
}

#[test]
fn artifacts_are_written() {
    let (a, b, truth) = renamed_duplicate(40, 5, 8);
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        save_corpus: true,
        ..light(8)
    };
    run_on_tables(&a, &b, &truth, &cfg, Some(dir.path())).unwrap();
    for f in [
        "resolved_config.toml",
        "sim_matrix.csv",
        "graph_stats.toml",
        "graph.txt",
        "merge_log.csv",
        "corpus.toml",
        "corpus.txt",
        "train.toml",
        "embeddings.vec",
        "sm_report.toml",
        "er_report.toml",
        "sm_predictions.csv",
        "er_predictions.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let snapshot = std::fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap();
    let back = PipelineConfig::parse(&snapshot).unwrap();
    assert_eq!(back.walks.seed, 8);
    assert_eq!(back.walks.walk_length, 30);
}

#[test]
fn missing_sweep_has_one_row_per_run() {
    let spec = SweepSpec {
        property: Property::MissingRate,
        replicates: 3,
        base: SynthConfig {
            n_rows: 30,
            n_cols: 6,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut cfg = light(0);
    cfg.walks.walk_length = 10;
    cfg.walks.walks_per_node = 1;
    cfg.train.epochs = 1;
    cfg.train.dim = 16;
    let first = sweep(&spec, &cfg).unwrap();
    assert_eq!(first.rows.len(), 36);
    assert_eq!(first.summary.len(), 12);
    assert!(first.rows.iter().all(|r| r.sm_f1.is_finite()));
    let second = sweep(&spec, &cfg).unwrap();
    assert_eq!(first, second);
}
