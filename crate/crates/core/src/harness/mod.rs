//! End-to-end pipeline orchestration, dataset variants and sweeps.

pub mod perturb;
pub mod sweep;
pub mod synth;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{train_skipgram, EmbeddingSpace, TrainConfig};
use crate::graph::{
    assign_node_weights, build_four_partite, cid_key, column_importance, graph_stats, merge_tokens,
    write_merge_log, FourPartiteGraph, GraphStats, ImportanceConfig,
};
use crate::matching::{
    entity_candidates, entity_resolve, evaluate, schema_match, GroundTruth, MatchConfig,
    MatchReport, Task,
};
use crate::similarity::{column_similarity_matrix, MergeConfig, SimilarityMatrix};
use crate::tabular::{
    load_table, normalize_missing, profile_table, CsvOptions, TableData, TableMetadata,
    TokenizeOptions, DEFAULT_MISSING_TOKENS,
};
use crate::textvec::{load_vectors, HashEmbedConfig, TextEmbedder};
use crate::walks::{generate_corpus, WalkConfig};

pub use perturb::{inject_missing, make_overlap_pair, subsample, OverlapOptions, OverlapPair};
pub use sweep::{sweep, Property, SweepResult, SweepSpec};
pub use synth::{synth_table, SynthConfig};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("table error: {0}")]
    Table(#[from] crate::tabular::TableError),
    #[error("target missing rate {target} is below the current rate {current}")]
    RateBelowCurrent { target: f64, current: f64 },
    #[error("target of {target_cells} cells is smaller than one row of {n_cols} columns")]
    TooSmall { target_cells: usize, n_cols: usize },
    #[error("overlap targets are infeasible; closest achievable: column {column}, row {row}")]
    InfeasibleOverlap { column: f64, row: f64 },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn stage<E: Into<BoxError>>(stage: &'static str) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::Stage {
        stage,
        source: e.into(),
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// CID–CID edges, token merging and weighted walks.
    #[default]
    Proposed,
    /// Plain tripartite graph with edge-weight walks.
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub table_a: Option<PathBuf>,
    pub table_b: Option<PathBuf>,
    pub meta_a: Option<PathBuf>,
    pub meta_b: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub id_a: String,
    pub id_b: String,
    pub delimiter: char,
    pub missing_tokens: Vec<String>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            table_a: None,
            table_b: None,
            meta_a: None,
            meta_b: None,
            truth: None,
            id_a: "A".into(),
            id_b: "B".into(),
            delimiter: ',',
            missing_tokens: DEFAULT_MISSING_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextConfig {
    /// word2vec-format file keyed by `"<name> which means <description>"`.
    pub sentence_vectors: Option<PathBuf>,
    /// word2vec-format file keyed by token.
    pub token_vectors: Option<PathBuf>,
    pub hashing: HashEmbedConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub merge_tokens: bool,
    pub tau_tok: f64,
    /// Restrict merge candidates to tokens sharing a character 3-gram.
    pub merge_blocking: bool,
    pub tokenize: TokenizeOptions,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            merge_tokens: true,
            tau_tok: 0.9,
            merge_blocking: true,
            tokenize: TokenizeOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Seeds walks and training.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Also write the walk corpus (can be large).
    pub save_corpus: bool,
    pub input: InputConfig,
    pub text: TextConfig,
    pub similarity: MergeConfig,
    pub graph: GraphConfig,
    pub importance: ImportanceConfig,
    pub walks: WalkConfig,
    pub train: TrainConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut().filter(|p| p.is_relative()) {
                *inner = dir.join(&*inner);
            }
        };
        for p in [
            &mut cfg.input.table_a,
            &mut cfg.input.table_b,
            &mut cfg.input.meta_a,
            &mut cfg.input.meta_b,
            &mut cfg.input.truth,
            &mut cfg.text.sentence_vectors,
            &mut cfg.text.token_vectors,
            &mut cfg.importance.freq_list_file,
            &mut cfg.out_dir,
        ] {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Effective settings: the global seed is pushed into walks and training,
    /// and baseline mode disables CID–CID edges, token merging and weighted
    /// walks.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.walks.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        match cfg.mode {
            Mode::Proposed => cfg.walks.baseline_mode = false,
            Mode::Baseline => {
                cfg.similarity.tau_cid = f64::INFINITY;
                cfg.graph.merge_tokens = false;
                cfg.walks.baseline_mode = true;
            }
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        let invalid = |e: &dyn std::fmt::Display| HarnessError::InvalidConfig(e.to_string());
        self.similarity.validate().map_err(|e| invalid(&e))?;
        self.importance.validate().map_err(|e| invalid(&e))?;
        self.walks.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.text.hashing.validate().map_err(|e| invalid(&e))?;
        if !(0.0..=1.0).contains(&self.graph.tau_tok) {
            return Err(HarnessError::InvalidConfig(format!(
                "tau_tok {} outside [0, 1]",
                self.graph.tau_tok
            )));
        }
        Ok(())
    }

    pub fn embedder(&self) -> Result<TextEmbedder> {
        let mut e =
            TextEmbedder::hashed(self.text.hashing.clone()).map_err(stage("text vectors"))?;
        if let Some(p) = &self.text.sentence_vectors {
            e = e.with_sentence_store(load_vectors(p).map_err(stage("text vectors"))?);
        }
        if let Some(p) = &self.text.token_vectors {
            e = e.with_token_store(load_vectors(p).map_err(stage("text vectors"))?);
        }
        Ok(e)
    }
}

/// A table with the names of its zero-fill columns.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedTable {
    pub table: TableData,
    pub zero_fill: Vec<String>,
}

impl From<TableData> for PreparedTable {
    fn from(table: TableData) -> Self {
        Self {
            table,
            zero_fill: Vec::new(),
        }
    }
}

/// Loads both tables (applying metadata sidecars) and the ground truth.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<(PreparedTable, PreparedTable, GroundTruth)> {
    let input = &cfg.input;
    let opts = CsvOptions {
        delimiter: input.delimiter,
        ..Default::default()
    };
    let load =
        |path: &Option<PathBuf>, meta: &Option<PathBuf>, id: &str| -> Result<PreparedTable> {
            let path = path.as_ref().ok_or_else(|| {
                HarnessError::InvalidConfig(format!("no input path for table {id}"))
            })?;
            let mut table = load_table(path, id, &opts).map_err(stage("load"))?;
            let zero_fill = match meta {
                Some(m) => TableMetadata::load(m)
                    .map_err(stage("load"))?
                    .apply(&mut table),
                None => Vec::new(),
            };
            Ok(PreparedTable { table, zero_fill })
        };
    let a = load(&input.table_a, &input.meta_a, &input.id_a)?;
    let b = load(&input.table_b, &input.meta_b, &input.id_b)?;
    let truth = match &input.truth {
        Some(p) => GroundTruth::load(p)
            .and_then(|t| t.validated(&a.table, &b.table))
            .map_err(stage("truth"))?,
        None => GroundTruth::default(),
    };
    Ok((a, b, truth))
}

/// Everything the stages produce, kept in memory.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub tables: [TableData; 2],
    pub similarity: SimilarityMatrix,
    pub graph: FourPartiteGraph,
    pub stats: GraphStats,
    pub merges: usize,
    pub corpus_fingerprint: String,
    pub corpus_walks: usize,
    pub space: EmbeddingSpace,
    pub sm: MatchReport,
    pub er: MatchReport,
}

/// Graph-building stages: normalize, profile, similarity, graph, merge,
/// weights. Returned tables are the normalized ones.
pub fn build_graph(
    a: &PreparedTable,
    b: &PreparedTable,
    cfg: &PipelineConfig,
) -> Result<(
    [TableData; 2],
    SimilarityMatrix,
    FourPartiteGraph,
    Vec<crate::graph::MergeRecord>,
)> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let embedder = cfg.embedder()?;
    let ta = normalize_missing(&a.table, &cfg.input.missing_tokens, &a.zero_fill);
    let tb = normalize_missing(&b.table, &cfg.input.missing_tokens, &b.zero_fill);
    let (pa, pb) = (profile_table(&ta), profile_table(&tb));
    let sim = column_similarity_matrix(&ta, &pa, &tb, &pb, &embedder, &cfg.similarity)
        .map_err(stage("similarity"))?;
    let g = build_four_partite(&ta, &tb, &sim, &cfg.similarity, cfg.graph.tokenize)
        .map_err(stage("graph"))?;
    let (mut g, log) = if cfg.graph.merge_tokens {
        merge_tokens(&g, &embedder, cfg.graph.tau_tok, cfg.graph.merge_blocking)
    } else {
        (g, Vec::new())
    };
    let mut importance = cfg.importance.clone();
    importance.resolve_freq_list().map_err(stage("weights"))?;
    let mut weights = HashMap::new();
    for (t, profiles) in [(&ta, &pa), (&tb, &pb)] {
        for (meta, p) in t.columns().iter().zip(profiles) {
            weights.insert(
                cid_key(t.table_id(), &meta.name),
                column_importance(p, meta, &importance),
            );
        }
    }
    assign_node_weights(&mut g, &weights).map_err(stage("weights"))?;
    Ok(([ta, tb], sim, g, log))
}

/// Runs every stage on in-memory tables. Artifacts go to `out_dir` when given.
pub fn run_on_tables(
    a: &PreparedTable,
    b: &PreparedTable,
    truth: &GroundTruth,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    let resolved = cfg.resolved();
    let (tables, sim, g, merge_log) = build_graph(a, b, cfg)?;
    let stats = graph_stats(&g);
    let corpus = generate_corpus(&g, &resolved.walks).map_err(stage("walks"))?;
    let space = train_skipgram(&corpus, &resolved.train).map_err(stage("train"))?;

    let m = &resolved.matching;
    let sm_pred = schema_match(&space, &g, m.tau_match, m.rule);
    let candidates = entity_candidates(&g, m.candidates);
    let er_pred = entity_resolve(&space, &g, &candidates, m.tau_er, m.rule);
    let finish = |mut r: MatchReport, tau: f64| {
        r.mode = Some(resolved.mode.as_str().to_string());
        r.rule = m.rule;
        r.threshold = tau;
        r
    };
    let sm = finish(evaluate(&sm_pred, truth, Task::SchemaMatching), m.tau_match);
    let er = finish(evaluate(&er_pred, truth, Task::EntityResolution), m.tau_er);

    let out = PipelineOutput {
        config: resolved,
        tables,
        similarity: sim,
        stats,
        merges: merge_log.len(),
        corpus_fingerprint: corpus.fingerprint(),
        corpus_walks: corpus.len(),
        graph: g,
        space,
        sm,
        er,
    };
    if let Some(dir) = out_dir {
        write_artifacts(dir, &out, &merge_log, cfg.save_corpus.then_some(&corpus))?;
    }
    Ok(out)
}

/// Loads inputs from `cfg.input` and runs the full pipeline.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let (a, b, truth) = load_inputs(cfg)?;
    run_on_tables(&a, &b, &truth, cfg, cfg.out_dir.as_deref())
}

#[derive(Serialize)]
struct CorpusInfo<'a> {
    fingerprint: &'a str,
    walks: usize,
}

#[derive(Serialize)]
struct TrainInfo<'a> {
    corpus_fingerprint: &'a str,
    vocabulary: usize,
    final_loss: f64,
    epoch_losses: &'a [f64],
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|source| HarnessError::Io { path, source })
}

fn write_with<F>(path: PathBuf, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::result::Result<(), BoxError>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(stage("artifacts"))?;
    write_file(path, &buf)
}

/// Writes all artifacts. Contents depend only on inputs and config, never
/// on wall-clock time.
pub fn write_artifacts(
    dir: &Path,
    out: &PipelineOutput,
    merge_log: &[crate::graph::MergeRecord],
    corpus: Option<&crate::walks::WalkCorpus>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut snapshot = out.config.clone();
    snapshot.out_dir = None;
    write_file(
        dir.join("resolved_config.toml"),
        snapshot.to_toml().as_bytes(),
    )?;
    write_with(dir.join("sim_matrix.csv"), |w| {
        Ok(out.similarity.write_csv(w)?)
    })?;
    write_file(dir.join("graph_stats.toml"), out.stats.to_toml().as_bytes())?;
    write_with(dir.join("graph.txt"), |w| Ok(out.graph.write_dump(w)?))?;
    write_with(dir.join("merge_log.csv"), |w| {
        Ok(write_merge_log(merge_log, w)?)
    })?;
    let info = CorpusInfo {
        fingerprint: &out.corpus_fingerprint,
        walks: out.corpus_walks,
    };
    write_file(
        dir.join("corpus.toml"),
        toml::to_string(&info)
            .map_err(stage("artifacts"))?
            .as_bytes(),
    )?;
    if let Some(c) = corpus {
        write_with(dir.join("corpus.txt"), |w| Ok(c.write_dump(w)?))?;
    }
    if let Some(p) = &out.space.provenance {
        let info = TrainInfo {
            corpus_fingerprint: &p.corpus_fingerprint,
            vocabulary: out.space.len(),
            final_loss: p.final_loss,
            epoch_losses: &p.epoch_losses,
        };
        write_file(
            dir.join("train.toml"),
            toml::to_string(&info)
                .map_err(stage("artifacts"))?
                .as_bytes(),
        )?;
    }
    write_with(dir.join("embeddings.vec"), |w| {
        Ok(out.space.write_word2vec(w)?)
    })?;
    for (name, report) in [("sm", &out.sm), ("er", &out.er)] {
        write_file(
            dir.join(format!("{name}_report.toml")),
            report.to_toml().as_bytes(),
        )?;
        write_with(dir.join(format!("{name}_predictions.csv")), |w| {
            Ok(report.write_predictions(w)?)
        })?;
    }
    Ok(())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let mut f = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(text.as_bytes())
        .map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
}
