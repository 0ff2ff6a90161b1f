use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ctxmatch_core::embed::{train_skipgram, EmbeddingSpace};
use ctxmatch_core::graph::{column_importance, graph_stats, write_merge_log, FourPartiteGraph};
use ctxmatch_core::harness::perturb::{default_importances, inject_missing_weighted};
use ctxmatch_core::harness::{
    build_graph, load_inputs, make_overlap_pair, run_pipeline, subsample, sweep, synth_table,
    write_text, OverlapOptions, PipelineConfig, SweepSpec, SynthConfig,
};
use ctxmatch_core::matching::{
    entity_candidates, entity_resolve, evaluate, read_predictions, schema_match,
    write_prediction_sets, GroundTruth, PairKind, Task,
};
use ctxmatch_core::tabular::{
    load_table, normalize_missing, profile_table, write_table, CsvOptions, TableData, TableMetadata,
};
use ctxmatch_core::textvec::load_vectors;
use ctxmatch_core::walks::{generate_corpus, WalkCorpus};

/// Schema matching and entity resolution with contextual graph embeddings.
#[derive(Parser)]
#[command(name = "ctxmatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Args)]
struct TableArg {
    /// CSV file.
    #[arg(long)]
    table: PathBuf,
    /// Metadata sidecar (TOML) with descriptions and zero-fill flags.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long, default_value = "T")]
    id: String,
}

impl TableArg {
    fn load(&self) -> Result<(TableData, Vec<String>)> {
        let mut t = load_table(&self.table, &self.id, &CsvOptions::default())?;
        let zero_fill = match &self.meta {
            Some(m) => TableMetadata::load(m)?.apply(&mut t),
            None => Vec::new(),
        };
        Ok((t, zero_fill))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Column profiles and importances of one table, as CSV.
    Profile {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Column similarity matrix for the configured table pair.
    Simmatrix {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build, merge and weight the graph for the configured table pair.
    BuildGraph {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write graph statistics (TOML).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Also write the token merge log (CSV).
        #[arg(long)]
        merge_log: Option<PathBuf>,
    },
    /// Generate a walk corpus from a graph dump.
    Walk {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train node embeddings on a walk corpus.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict column and row pairs from a graph and its embeddings.
    Match {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions CSV against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Write both reports here (TOML) instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce a controlled variant of a table.
    Perturb {
        #[command(subcommand)]
        kind: Perturb,
    },
    /// Run a property sweep in both modes.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Sweep specification (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full pipeline and write all artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic base table and its metadata sidecar.
    Synth {
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        cols: usize,
        #[arg(long, default_value_t = 0.4)]
        numeric_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        meta: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Perturb {
    /// Blank cells up to a target missing rate.
    Missing {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0.7)]
        bias: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample rows down to a target cell count.
    Subsample {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        cells: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Carve two tables with target overlaps plus their ground truth.
    Overlap {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        column_overlap: f64,
        #[arg(long)]
        row_overlap: f64,
        #[arg(long)]
        rename_noise: bool,
        #[arg(long)]
        keep_row_order: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives a.csv, b.csv, their .meta.toml sidecars and truth.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn save_table_with_meta(t: &TableData, path: &Path) -> Result<()> {
    write_table(t, path)?;
    write_text(
        &path.with_extension("meta.toml"),
        &TableMetadata::from_table(t).to_toml(),
    )?;
    Ok(())
}

fn profile(args: &TableArg, out: &Option<PathBuf>) -> Result<()> {
    let (t, zero_fill) = args.load()?;
    let t = normalize_missing(
        &t,
        ctxmatch_core::tabular::DEFAULT_MISSING_TOKENS,
        &zero_fill,
    );
    let profiles = profile_table(&t);
    let cfg = ctxmatch_core::graph::ImportanceConfig::default();
    let mut w = output(out)?;
    writeln!(
        w,
        "column,mean,min,max,variance,std,space,punct,special,digit,missing_rate,distinct_ratio,linguistic_fraction,n_valid,importance"
    )?;
    for (meta, p) in t.columns().iter().zip(&profiles) {
        let f = p.feature_vector();
        let fields: Vec<String> = f.iter().map(|x| x.to_string()).collect();
        writeln!(
            w,
            "\"{}\",{},{},{},{},{},{}",
            meta.name.replace('"', "\"\""),
            fields.join(","),
            p.missing_rate,
            p.distinct_ratio,
            p.linguistic_fraction,
            p.n_valid,
            column_importance(p, meta, &cfg),
        )?;
    }
    Ok(())
}

fn load_graph(path: &Path) -> Result<FourPartiteGraph> {
    FourPartiteGraph::load(path).with_context(|| format!("reading graph {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(n) = std::env::var("CTXMATCH_THREADS") {
        let n: usize = n
            .parse()
            .context("CTXMATCH_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Profile { table, out } => profile(&table, &out)?,
        Command::Simmatrix { config, out } => {
            let cfg = config.load()?;
            let (a, b, _) = load_inputs(&cfg)?;
            let (_, sim, _, _) = build_graph(&a, &b, &cfg)?;
            sim.write_csv(output(&out)?)?;
        }
        Command::BuildGraph {
            config,
            out,
            stats,
            merge_log,
        } => {
            let cfg = config.load()?;
            let (a, b, _) = load_inputs(&cfg)?;
            let (_, _, g, log) = build_graph(&a, &b, &cfg)?;
            g.save(&out)?;
            if let Some(p) = stats {
                write_text(&p, &graph_stats(&g).to_toml())?;
            }
            if let Some(p) = merge_log {
                write_merge_log(&log, create(&p)?)?;
            }
        }
        Command::Walk { config, graph, out } => {
            let cfg = config.load()?.resolved();
            let corpus = generate_corpus(&load_graph(&graph)?, &cfg.walks)?;
            corpus.save(&out)?;
        }
        Command::Train {
            config,
            corpus,
            out,
        } => {
            let cfg = config.load()?.resolved();
            let corpus = WalkCorpus::load(&corpus)?;
            let space = train_skipgram(&corpus, &cfg.train)?;
            space.save(&out)?;
        }
        Command::Match {
            config,
            graph,
            embeddings,
            out,
        } => {
            let cfg = config.load()?.resolved();
            let g = load_graph(&graph)?;
            let space = EmbeddingSpace::from_store(&load_vectors(&embeddings)?);
            let m = &cfg.matching;
            let sm = schema_match(&space, &g, m.tau_match, m.rule);
            let er = entity_resolve(
                &space,
                &g,
                &entity_candidates(&g, m.candidates),
                m.tau_er,
                m.rule,
            );
            write_prediction_sets(
                &[(&sm, PairKind::Column), (&er, PairKind::Row)],
                output(&out)?,
            )?;
        }
        Command::Eval { truth, pred, out } => {
            let truth = GroundTruth::load(&truth)?;
            let (cols, rows) = read_predictions(File::open(&pred)?)?;
            let sm = evaluate(&cols, &truth, Task::SchemaMatching);
            let er = evaluate(&rows, &truth, Task::EntityResolution);
            let text = format!("[sm]\n{}\n[er]\n{}", sm.to_toml(), er.to_toml());
            match out {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Perturb { kind } => perturb(kind)?,
        Command::Sweep {
            config,
            spec,
            out_dir,
        } => {
            let cfg = config.load()?;
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec: SweepSpec = toml::from_str(&text)?;
            let result = sweep(&spec, &cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            result.write_rows(create(&out_dir.join("sweep_results.csv"))?)?;
            result.write_summary(create(&out_dir.join("sweep_summary.csv"))?)?;
            write_text(&out_dir.join("sweep_spec.toml"), &toml::to_string(&spec)?)?;
            write_text(&out_dir.join("resolved_config.toml"), &cfg.to_toml())?;
        }
        Command::Run { config, out_dir } => {
            let mut cfg = config.load()?;
            if out_dir.is_some() {
                cfg.out_dir = out_dir;
            }
            if cfg.out_dir.is_none() {
                bail!("no output directory: pass --out-dir or set out_dir in the config");
            }
            let out = run_pipeline(&cfg)?;
            println!(
                "SM f1={:.4} (p={:.4} r={:.4})  ER f1={:.4} (p={:.4} r={:.4})",
                out.sm.f1,
                out.sm.precision,
                out.sm.recall,
                out.er.f1,
                out.er.precision,
                out.er.recall
            );
        }
        Command::Synth {
            rows,
            cols,
            numeric_fraction,
            seed,
            out,
            meta,
        } => {
            let t = synth_table(&SynthConfig {
                n_rows: rows,
                n_cols: cols,
                numeric_fraction,
                seed,
                ..Default::default()
            })?;
            write_table(&t, &out)?;
            let meta = meta.unwrap_or_else(|| out.with_extension("meta.toml"));
            write_text(&meta, &TableMetadata::from_table(&t).to_toml())?;
        }
    }
    Ok(())
}

fn perturb(kind: Perturb) -> Result<()> {
    match kind {
        Perturb::Missing {
            table,
            rate,
            bias,
            seed,
            out,
        } => {
            let (t, zero_fill) = table.load()?;
            let t = normalize_missing(
                &t,
                ctxmatch_core::tabular::DEFAULT_MISSING_TOKENS,
                &zero_fill,
            );
            let w = default_importances(&t);
            save_table_with_meta(&inject_missing_weighted(&t, rate, bias, seed, &w)?, &out)?;
        }
        Perturb::Subsample {
            table,
            cells,
            seed,
            out,
        } => {
            let (t, _) = table.load()?;
            save_table_with_meta(&subsample(&t, cells, seed)?, &out)?;
        }
        Perturb::Overlap {
            table,
            column_overlap,
            row_overlap,
            rename_noise,
            keep_row_order,
            seed,
            out_dir,
        } => {
            let (t, _) = table.load()?;
            let opts = OverlapOptions {
                rename_noise,
                shuffle_rows: !keep_row_order,
                ..Default::default()
            };
            let pair = make_overlap_pair(&t, column_overlap, row_overlap, &opts, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            save_table_with_meta(&pair.a, &out_dir.join("a.csv"))?;
            save_table_with_meta(&pair.b, &out_dir.join("b.csv"))?;
            pair.truth.save(out_dir.join("truth.csv"))?;
        }
    }
    Ok(())
}
