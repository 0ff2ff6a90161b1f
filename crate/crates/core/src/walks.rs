//! Weighted random walks over a frozen [`FourPartiteGraph`].
//!
//! Transition rules by source kind:
//! - RID → TOK: mass `tok.weight × edge weight`;
//! - CID → TOK: mass = edge weight; CID → CID: `kappa_cid × S_total × mean TOK edge weight`;
//! - TOK → any: mass = edge weight.
//!
//! Baseline mode drops node weights and CID–CID edges, leaving plain
//! edge-weight-proportional walks.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeKind, FourPartiteGraph, NodeId, NodeKind};
use crate::hashing::{fingerprint, hash_str, mix64};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("node `{0}` has no walkable neighbor")]
    IsolatedNode(String),
    #[error("graph has no walkable node")]
    EmptyGraph,
    #[error("invalid walk config: {0}")]
    InvalidConfig(String),
    #[error("corpus line {0} is empty")]
    EmptyWalk(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WalkError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDistribution {
    #[default]
    UniformNodes,
    DegreeProportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Nodes per walk, including the start.
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub start_distribution: StartDistribution,
    /// Multiplier on CID→CID transition mass.
    pub kappa_cid: f64,
    pub seed: u64,
    pub baseline_mode: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 60,
            walks_per_node: 10,
            start_distribution: StartDistribution::UniformNodes,
            kappa_cid: 1.0,
            seed: 0,
            baseline_mode: false,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(WalkError::InvalidConfig(
                "walk_length must be at least 2".into(),
            ));
        }
        if self.walks_per_node < 1 {
            return Err(WalkError::InvalidConfig(
                "walks_per_node must be at least 1".into(),
            ));
        }
        if !(self.kappa_cid >= 0.0) {
            return Err(WalkError::InvalidConfig(
                "kappa_cid must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Next-node probabilities from `node`, in neighbor-id order. Neighbors
/// with zero mass are omitted.
pub fn transition_distribution(
    g: &FourPartiteGraph,
    node: NodeId,
    cfg: &WalkConfig,
) -> Result<Vec<(NodeId, f64)>> {
    let src = g.node(node);
    let nbrs = g.neighbors(node);
    let masses: Vec<(NodeId, f64)> = if cfg.baseline_mode {
        nbrs.iter()
            .filter(|n| n.kind != EdgeKind::CidCid)
            .map(|n| (n.node, n.weight))
            .collect()
    } else {
        match src.kind {
            NodeKind::Rid => {
                let weighted: Vec<(NodeId, f64)> = nbrs
                    .iter()
                    .map(|n| (n.node, g.node(n.node).weight * n.weight))
                    .collect();
                if weighted.iter().any(|(_, m)| *m > 0.0) {
                    weighted
                } else {
                    // All token weights are zero: fall back to edge weights.
                    nbrs.iter().map(|n| (n.node, n.weight)).collect()
                }
            }
            NodeKind::Cid => {
                let tok_weights: Vec<f64> = nbrs
                    .iter()
                    .filter(|n| n.kind == EdgeKind::TokCid)
                    .map(|n| n.weight)
                    .collect();
                let mean_tok = if tok_weights.is_empty() {
                    1.0
                } else {
                    tok_weights.iter().sum::<f64>() / tok_weights.len() as f64
                };
                nbrs.iter()
                    .map(|n| match n.kind {
                        EdgeKind::CidCid => (n.node, cfg.kappa_cid * n.weight * mean_tok),
                        _ => (n.node, n.weight),
                    })
                    .collect()
            }
            NodeKind::Tok => nbrs.iter().map(|n| (n.node, n.weight)).collect(),
        }
    };
    let total: f64 = masses.iter().map(|(_, m)| m).sum();
    if masses.is_empty() || !(total > 0.0) {
        return Err(WalkError::IsolatedNode(src.key.clone()));
    }
    Ok(masses
        .into_iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(n, m)| (n, m / total))
        .collect())
}

/// Precomputed cumulative transition tables for every node.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    rows: Vec<Vec<(NodeId, f64)>>,
}

impl TransitionTable {
    pub fn new(g: &FourPartiteGraph, cfg: &WalkConfig) -> Self {
        let rows = (0..g.node_count() as NodeId)
            .into_par_iter()
            .map(|id| match transition_distribution(g, id, cfg) {
                Ok(dist) => {
                    let mut acc = 0.0;
                    let mut cum: Vec<(NodeId, f64)> = dist
                        .into_iter()
                        .map(|(n, p)| {
                            acc += p;
                            (n, acc)
                        })
                        .collect();
                    cum.last_mut().expect("non-empty").1 = 1.0;
                    cum
                }
                Err(_) => Vec::new(),
            })
            .collect();
        Self { rows }
    }

    pub fn is_walkable(&self, id: NodeId) -> bool {
        !self.rows[id as usize].is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, from: NodeId, rng: &mut R) -> Option<NodeId> {
        let row = &self.rows[from as usize];
        if row.is_empty() {
            return None;
        }
        let u: f64 = rng.gen();
        let idx = row.partition_point(|&(_, c)| c <= u).min(row.len() - 1);
        Some(row[idx].0)
    }
}

/// A walk of `walk_length` nodes from `start`. Stops early only if it reaches
/// a node without outgoing mass, which cannot happen on a built graph.
pub fn random_walk<R: Rng + ?Sized>(
    table: &TransitionTable,
    start: NodeId,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let mut cur = start;
    while walk.len() < cfg.walk_length {
        match table.sample(cur, rng) {
            Some(next) => {
                walk.push(next);
                cur = next;
            }
            None => break,
        }
    }
    walk
}

/// RNG seed for one (start node, replica) stream.
pub fn stream_seed(seed: u64, start_key: &str, replica: usize) -> u64 {
    seed ^ hash_str(start_key, mix64(replica as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusProvenance {
    pub seed: u64,
    pub config: WalkConfig,
    pub graph_fingerprint: String,
}

/// Walk sequences over a vocabulary of node keys.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub vocab: Vec<String>,
    pub sequences: Vec<Vec<u32>>,
    pub provenance: Option<CorpusProvenance>,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    /// One walk per line, space-separated node keys.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for seq in &self.sequences {
            let mut first = true;
            for &t in seq {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                w.write_all(self.vocab[t as usize].as_bytes())?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_dump(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Self> {
        let mut vocab = Vec::new();
        let mut index = std::collections::HashMap::new();
        let mut sequences = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let seq: Vec<u32> = line
                .split_whitespace()
                .map(|k| {
                    *index.entry(k.to_string()).or_insert_with(|| {
                        vocab.push(k.to_string());
                        (vocab.len() - 1) as u32
                    })
                })
                .collect();
            if seq.is_empty() {
                return Err(WalkError::EmptyWalk(i + 1));
            }
            sequences.push(seq);
        }
        Ok(Self {
            vocab,
            sequences,
            provenance: None,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_dump(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// SHA-256 of the text dump.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("in-memory write");
        fingerprint(&buf)
    }
}

/// Walks from every walkable node, ordered by (start node id, replica).
/// Each walk draws from its own RNG stream, so the parallel result equals the
/// sequential one.
pub fn generate_corpus(g: &FourPartiteGraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    let table = TransitionTable::new(g, cfg);
    let starts: Vec<NodeId> = (0..g.node_count() as NodeId)
        .filter(|&id| table.is_walkable(id))
        .collect();
    if starts.is_empty() {
        return Err(WalkError::EmptyGraph);
    }
    let jobs: Vec<(NodeId, usize)> = match cfg.start_distribution {
        StartDistribution::UniformNodes => starts
            .iter()
            .flat_map(|&s| (0..cfg.walks_per_node).map(move |r| (s, r)))
            .collect(),
        StartDistribution::DegreeProportional => {
            let weights: Vec<usize> = starts.iter().map(|&s| g.degree(s)).collect();
            let dist = WeightedIndex::new(&weights).expect("walkable nodes have degree >= 1");
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed));
            let mut counts = vec![0usize; starts.len()];
            for _ in 0..starts.len() * cfg.walks_per_node {
                counts[dist.sample(&mut rng)] += 1;
            }
            starts
                .iter()
                .zip(counts)
                .flat_map(|(&s, c)| (0..c).map(move |r| (s, r)))
                .collect()
        }
    };
    let sequences = jobs
        .par_iter()
        .map(|&(start, replica)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &g.node(start).key, replica));
            random_walk(&table, start, cfg, &mut rng)
        })
        .collect();
    Ok(WalkCorpus {
        vocab: g.nodes().iter().map(|n| n.key.clone()).collect(),
        sequences,
        provenance: Some(CorpusProvenance {
            seed: cfg.seed,
            config: cfg.clone(),
            graph_fingerprint: g.fingerprint(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(dump: &str) -> FourPartiteGraph {
        FourPartiteGraph::read_dump(dump.as_bytes()).unwrap()
    }

    /// RID r1 with four tokens weighted 0.7, 0.7, 0.3, 0.3.
    fn rid_fixture() -> FourPartiteGraph {
        graph(
            "G A B\nN idx__A_r1 RID A_r1 1\nN cid__A_Title CID A_Title 0.7\nN cid__A_Year CID A_Year 0.3\n\
             N tt__hp TOK hp 0.7\nN tt__im TOK im 0.7\nN tt__2001 TOK 2001 0.3\nN tt__2008 TOK 2008 0.3\n\
             E idx__A_r1 tt__hp RID_TOK 1\nE idx__A_r1 tt__im RID_TOK 1\nE idx__A_r1 tt__2001 RID_TOK 1\nE idx__A_r1 tt__2008 RID_TOK 1\n\
             E tt__hp cid__A_Title TOK_CID 1\nE tt__im cid__A_Title TOK_CID 1\nE tt__2001 cid__A_Year TOK_CID 1\nE tt__2008 cid__A_Year TOK_CID 1\n",
        )
    }

    #[test]
    fn rid_transition_follows_token_weights() {
        let g = rid_fixture();
        let dist = transition_distribution(&g, 0, &WalkConfig::default()).unwrap();
        let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
        let expected = [0.35, 0.35, 0.15, 0.15];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_is_uniform_over_unit_edges() {
        let g = rid_fixture();
        let cfg = WalkConfig {
            baseline_mode: true,
            ..Default::default()
        };
        let title = g.id_of("cid__A_Title").unwrap();
        let hp = g.id_of("tt__hp").unwrap();
        for (_, p) in transition_distribution(&g, hp, &cfg).unwrap() {
            assert!((p - 0.5).abs() < 1e-15);
        }
        for (_, p) in transition_distribution(&g, title, &cfg).unwrap() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cid_transition_with_similarity_edge() {
        let g = graph(
            "G A B\nN cid__B_Title CID B_Title 1\nN cid__A_Title CID A_Title 1\nN tt__hp TOK hp 1\nN tt__im TOK im 1\n\
             E cid__B_Title tt__hp TOK_CID 1\nE cid__B_Title tt__im TOK_CID 1\nE cid__B_Title cid__A_Title CID_CID 0.8\n",
        );
        let dist = transition_distribution(&g, 0, &WalkConfig::default()).unwrap();
        let get = |key: &str| dist.iter().find(|(n, _)| g.node(*n).key == key).unwrap().1;
        assert!((get("tt__hp") - 5.0 / 14.0).abs() < 1e-12);
        assert!((get("tt__im") - 5.0 / 14.0).abs() < 1e-12);
        assert!((get("cid__A_Title") - 4.0 / 14.0).abs() < 1e-12);
        // The only route out of A_Title is the similarity edge.
        let back = transition_distribution(&g, 1, &WalkConfig::default()).unwrap();
        assert_eq!(back, vec![(0, 1.0)]);
        let base = WalkConfig {
            baseline_mode: true,
            ..Default::default()
        };
        assert!(matches!(
            transition_distribution(&g, 1, &base),
            Err(WalkError::IsolatedNode(_))
        ));
    }

    #[test]
    fn two_node_walk_alternates() {
        let g = graph("G A B\nN idx__A_0 RID A_0 1\nN tt__x TOK x 1\nE idx__A_0 tt__x RID_TOK 1\n");
        let cfg = WalkConfig {
            walk_length: 7,
            ..Default::default()
        };
        let table = TransitionTable::new(&g, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            random_walk(&table, 0, &cfg, &mut rng),
            vec![0, 1, 0, 1, 0, 1, 0]
        );
    }

    #[test]
    fn corpus_order_and_determinism() {
        let g = rid_fixture();
        let cfg = WalkConfig {
            walks_per_node: 3,
            walk_length: 10,
            seed: 11,
            ..Default::default()
        };
        let a = generate_corpus(&g, &cfg).unwrap();
        let b = generate_corpus(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7 * 3);
        assert!(a.sequences.iter().all(|s| s.len() == 10));
        let starts: Vec<u32> = a.sequences.iter().map(|s| s[0]).collect();
        let mut sorted = starts.clone();
        sorted.sort();
        assert_eq!(starts, sorted);
        let c = generate_corpus(
            &g,
            &WalkConfig {
                seed: 12,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a.sequences, c.sequences);
    }

    #[test]
    fn degree_start_distribution_keeps_total() {
        let g = rid_fixture();
        let cfg = WalkConfig {
            walks_per_node: 4,
            start_distribution: StartDistribution::DegreeProportional,
            ..Default::default()
        };
        let corpus = generate_corpus(&g, &cfg).unwrap();
        assert_eq!(corpus.len(), 7 * 4);
    }

    #[test]
    fn corpus_dump_round_trip() {
        let g = rid_fixture();
        let corpus = generate_corpus(
            &g,
            &WalkConfig {
                walks_per_node: 1,
                walk_length: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        corpus.write_dump(&mut buf).unwrap();
        let back = WalkCorpus::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.len(), corpus.len());
        for (x, y) in back.sequences.iter().zip(&corpus.sequences) {
            let kx: Vec<&str> = x.iter().map(|&t| back.vocab[t as usize].as_str()).collect();
            let ky: Vec<&str> = y
                .iter()
                .map(|&t| corpus.vocab[t as usize].as_str())
                .collect();
            assert_eq!(kx, ky);
        }
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = graph("G A B\nN idx__A_0 RID A_0 1\n");
        assert!(matches!(
            generate_corpus(&g, &WalkConfig::default()),
            Err(WalkError::EmptyGraph)
        ));
        assert!(WalkConfig {
            walk_length: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
