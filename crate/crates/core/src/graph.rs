//! The 4-partite RID/TOK/CID graph: construction from two tables, token
//! merging, column importance and node weights, stats and a text dump format.
//!
//! Node keys are whitespace-free and double as vocabulary entries for walks
//! and embeddings:
//!
//! | kind | key                      | label            |
//! |------|--------------------------|------------------|
//! | RID  | `idx__<table>_<row key>` | `<table>_<row>`  |
//! | TOK  | `tt__<token>`            | `<token>`        |
//! | CID  | `cid__<table>_<column>`  | `<table>_<column>` |
//!
//! Whitespace and `%` inside keys and dumped labels are percent-encoded.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fingerprint;
use crate::similarity::{MergeConfig, SimilarityMatrix};
use crate::tabular::{
    normalize_name, parse_number, tokenize_cell, ColumnMeta, ColumnProfile, TableData,
    TokenizeOptions,
};
use crate::textvec::{cosine, TextEmbedder};
use crate::union_find::DisjointSet;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("both input tables are empty")]
    EmptyInput,
    #[error("both tables use the id `{0}`")]
    SameTableId(String),
    #[error("similarity matrix is {got:?}, tables have {want:?} columns")]
    MatrixShape {
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("edge {u} -- {v} of kind {kind} connects {ku} and {kv}")]
    InvalidEdge {
        u: String,
        v: String,
        kind: &'static str,
        ku: &'static str,
        kv: &'static str,
    },
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("CID edge {0} -- {1} joins columns of the same table")]
    SameTableCidEdge(String, String),
    #[error("edge weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no importance given for column node `{0}`")]
    MissingImportance(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("graph dump line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid importance config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "RID")]
    Rid,
    #[serde(rename = "TOK")]
    Tok,
    #[serde(rename = "CID")]
    Cid,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Rid => "RID",
            NodeKind::Tok => "TOK",
            NodeKind::Cid => "CID",
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::Rid => "idx__",
            NodeKind::Tok => "tt__",
            NodeKind::Cid => "cid__",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RID" => Some(NodeKind::Rid),
            "TOK" => Some(NodeKind::Tok),
            "CID" => Some(NodeKind::Cid),
            _ => None,
        }
    }

    /// Kind encoded in a node key's prefix.
    pub fn from_key(key: &str) -> Option<Self> {
        [NodeKind::Rid, NodeKind::Tok, NodeKind::Cid]
            .into_iter()
            .find(|k| key.starts_with(k.prefix()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    RidTok,
    TokCid,
    CidCid,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::RidTok => "RID_TOK",
            EdgeKind::TokCid => "TOK_CID",
            EdgeKind::CidCid => "CID_CID",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RID_TOK" => Some(EdgeKind::RidTok),
            "TOK_CID" => Some(EdgeKind::TokCid),
            "CID_CID" => Some(EdgeKind::CidCid),
            _ => None,
        }
    }

    /// The only edge kind permitted between two node kinds, if any.
    pub fn between(a: NodeKind, b: NodeKind) -> Option<Self> {
        use NodeKind::*;
        match (a, b) {
            (Rid, Tok) | (Tok, Rid) => Some(EdgeKind::RidTok),
            (Tok, Cid) | (Cid, Tok) => Some(EdgeKind::TokCid),
            (Cid, Cid) => Some(EdgeKind::CidCid),
            _ => None,
        }
    }
}

/// Percent-encodes `%` and whitespace.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '%' || c.is_whitespace() {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn unescape(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

pub fn rid_key(table_id: &str, row_key: &str) -> String {
    format!("idx__{}_{}", table_id, escape(row_key))
}

pub fn cid_key(table_id: &str, column: &str) -> String {
    format!("cid__{}_{}", table_id, escape(column))
}

pub fn tok_key(token: &str) -> String {
    format!("tt__{}", escape(token))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub key: String,
    pub kind: NodeKind,
    pub label: String,
    pub weight: f64,
    /// Index of the source table (0 or 1); `None` for tokens.
    pub side: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub node: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
}

/// Undirected, simple, weighted RID/TOK/CID graph over two tables.
#[derive(Clone, Debug, PartialEq)]
pub struct FourPartiteGraph {
    table_ids: [String; 2],
    nodes: Vec<Node>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl FourPartiteGraph {
    pub fn table_ids(&self) -> &[String; 2] {
        &self.table_ids
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn id_of(&self, key: &str) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    /// Neighbors sorted by node id.
    pub fn neighbors(&self, id: NodeId) -> &[Neighbor] {
        &self.adjacency[id as usize]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id as usize].len()
    }

    pub fn is_isolated(&self, id: NodeId) -> bool {
        self.adjacency[id as usize].is_empty()
    }

    pub fn edge_weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let adj = &self.adjacency[u as usize];
        adj.binary_search_by_key(&v, |n| n.node)
            .ok()
            .map(|i| adj[i].weight)
    }

    pub fn ids_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| i as NodeId)
    }

    /// Nodes of one kind belonging to one side, in id order.
    pub fn ids_of_side(&self, kind: NodeKind, side: usize) -> Vec<NodeId> {
        self.ids_of_kind(kind)
            .filter(|&id| self.node(id).side == Some(side))
            .collect()
    }

    pub fn total_edge_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// SHA-256 of the text dump.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("in-memory write");
        fingerprint(&buf)
    }

    /// `G <table_a> <table_b>`, then `N <key> <kind> <label> <weight>` and
    /// `E <u> <v> <kind> <weight>` lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "G {} {}", self.table_ids[0], self.table_ids[1])?;
        for n in &self.nodes {
            writeln!(
                w,
                "N {} {} {} {}",
                n.key,
                n.kind.as_str(),
                escape(&n.label),
                n.weight
            )?;
        }
        for e in &self.edges {
            writeln!(
                w,
                "E {} {} {} {}",
                self.nodes[e.u as usize].key,
                self.nodes[e.v as usize].key,
                e.kind.as_str(),
                e.weight
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_dump(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_dump(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Self> {
        let mut builder: Option<GraphBuilder> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let err = |msg: &str| GraphError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            match (f[0], builder.as_mut()) {
                ("G", None) if f.len() == 3 => {
                    builder = Some(GraphBuilder::new([f[1].to_string(), f[2].to_string()]));
                }
                ("N", Some(b)) if f.len() == 5 => {
                    let kind = NodeKind::parse(f[2]).ok_or_else(|| err("unknown node kind"))?;
                    if NodeKind::from_key(f[1]) != Some(kind) {
                        return Err(err("key prefix does not match node kind"));
                    }
                    let label = unescape(f[3]).ok_or_else(|| err("bad label escape"))?;
                    let weight: f64 = f[4].parse().map_err(|_| err("bad weight"))?;
                    let side = b.side_from_key(f[1], kind);
                    if kind != NodeKind::Tok && side.is_none() {
                        return Err(err("key names neither table"));
                    }
                    let id = b.add_node(kind, f[1].to_string(), label, side);
                    b.nodes[id as usize].weight = weight;
                }
                ("E", Some(b)) if f.len() == 5 => {
                    let u = b.lookup(f[1]).ok_or_else(|| err("unknown edge endpoint"))?;
                    let v = b.lookup(f[2]).ok_or_else(|| err("unknown edge endpoint"))?;
                    let kind = EdgeKind::parse(f[3]).ok_or_else(|| err("unknown edge kind"))?;
                    let weight: f64 = f[4].parse().map_err(|_| err("bad weight"))?;
                    if EdgeKind::between(b.nodes[u as usize].kind, b.nodes[v as usize].kind)
                        != Some(kind)
                    {
                        return Err(err("edge kind does not match endpoint kinds"));
                    }
                    b.add_edge(u, v, weight)?;
                }
                _ => return Err(err("unexpected record")),
            }
        }
        builder.map(GraphBuilder::finish).ok_or(GraphError::Parse {
            line: 0,
            msg: "missing `G` header".into(),
        })
    }
}

/// Accumulates nodes and edges; parallel edges fold into summed weights.
#[derive(Debug)]
struct GraphBuilder {
    table_ids: [String; 2],
    nodes: Vec<Node>,
    index: HashMap<String, NodeId>,
    edges: HashMap<(NodeId, NodeId), f64>,
}

impl GraphBuilder {
    fn new(table_ids: [String; 2]) -> Self {
        Self {
            table_ids,
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: HashMap::new(),
        }
    }

    fn lookup(&self, key: &str) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    fn side_from_key(&self, key: &str, kind: NodeKind) -> Option<usize> {
        if kind == NodeKind::Tok {
            return None;
        }
        let rest = &key[kind.prefix().len()..];
        (0..2).find(|&s| {
            rest.strip_prefix(self.table_ids[s].as_str())
                .is_some_and(|r| r.starts_with('_'))
        })
    }

    /// Returns the existing id when the key is already present.
    fn add_node(
        &mut self,
        kind: NodeKind,
        key: String,
        label: String,
        side: Option<usize>,
    ) -> NodeId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.index.insert(key.clone(), id);
        self.nodes.push(Node {
            key,
            kind,
            label,
            weight: 0.0,
            side,
        });
        id
    }

    fn add_edge(&mut self, u: NodeId, v: NodeId, weight: f64) -> Result<()> {
        let (nu, nv) = (&self.nodes[u as usize], &self.nodes[v as usize]);
        if u == v {
            return Err(GraphError::SelfLoop(nu.key.clone()));
        }
        if !(weight > 0.0) {
            return Err(GraphError::NonPositiveWeight(weight));
        }
        let kind = EdgeKind::between(nu.kind, nv.kind).ok_or_else(|| GraphError::InvalidEdge {
            u: nu.key.clone(),
            v: nv.key.clone(),
            kind: "none",
            ku: nu.kind.as_str(),
            kv: nv.kind.as_str(),
        })?;
        if kind == EdgeKind::CidCid && nu.side == nv.side {
            return Err(GraphError::SameTableCidEdge(nu.key.clone(), nv.key.clone()));
        }
        *self.edges.entry((u.min(v), u.max(v))).or_insert(0.0) += weight;
        Ok(())
    }

    fn finish(self) -> FourPartiteGraph {
        let mut edges: Vec<Edge> = self
            .edges
            .into_iter()
            .map(|((u, v), weight)| Edge {
                u,
                v,
                kind: EdgeKind::between(self.nodes[u as usize].kind, self.nodes[v as usize].kind)
                    .expect("validated on insert"),
                weight,
            })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for e in &edges {
            adjacency[e.u as usize].push(Neighbor {
                node: e.v,
                kind: e.kind,
                weight: e.weight,
            });
            adjacency[e.v as usize].push(Neighbor {
                node: e.u,
                kind: e.kind,
                weight: e.weight,
            });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|n| n.node);
        }
        FourPartiteGraph {
            table_ids: self.table_ids,
            nodes: self.nodes,
            index: self.index,
            edges,
            adjacency,
        }
    }
}

/// Builds the graph: one CID per column, one RID per row, one shared TOK per
/// distinct token, RID–TOK and TOK–CID edges weighted by co-occurrence, and a
/// CID–CID edge for every cross-table pair with `S_total >= tau_cid`.
pub fn build_four_partite(
    table_a: &TableData,
    table_b: &TableData,
    sim: &SimilarityMatrix,
    cfg: &MergeConfig,
    tokenize: TokenizeOptions,
) -> Result<FourPartiteGraph> {
    if table_a.n_rows() == 0 && table_b.n_rows() == 0 {
        return Err(GraphError::EmptyInput);
    }
    if table_a.table_id() == table_b.table_id() {
        return Err(GraphError::SameTableId(table_a.table_id().to_string()));
    }
    let want = (table_a.n_cols(), table_b.n_cols());
    let got = (sim.columns_a.len(), sim.columns_b.len());
    if want != got {
        return Err(GraphError::MatrixShape { got, want });
    }
    let tables = [table_a, table_b];
    let mut b = GraphBuilder::new([
        table_a.table_id().to_string(),
        table_b.table_id().to_string(),
    ]);

    let mut cids: [Vec<NodeId>; 2] = [Vec::new(), Vec::new()];
    for (side, t) in tables.iter().enumerate() {
        for col in t.columns() {
            let id = b.add_node(
                NodeKind::Cid,
                cid_key(t.table_id(), &col.name),
                format!("{}_{}", t.table_id(), col.name),
                Some(side),
            );
            cids[side].push(id);
        }
    }
    for (side, t) in tables.iter().enumerate() {
        for (r, row) in t.rows().iter().enumerate() {
            let row_key = &t.row_keys()[r];
            let rid = b.add_node(
                NodeKind::Rid,
                rid_key(t.table_id(), row_key),
                format!("{}_{}", t.table_id(), row_key),
                Some(side),
            );
            for (c, cell) in row.iter().enumerate() {
                let Some(value) = cell else { continue };
                for token in tokenize_cell(value, tokenize) {
                    let tok = b.add_node(NodeKind::Tok, tok_key(&token), token, None);
                    b.add_edge(rid, tok, 1.0)?;
                    b.add_edge(tok, cids[side][c], 1.0)?;
                }
            }
        }
    }
    for (i, j, score) in sim.iter() {
        if score.s_total >= cfg.tau_cid && score.s_total > 0.0 {
            b.add_edge(cids[0][i], cids[1][j], score.s_total)?;
        }
    }
    Ok(b.finish())
}

/// One absorbed token in a merge.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeRecord {
    pub kept: String,
    pub absorbed: String,
    pub cosine: f64,
}

pub fn write_merge_log<W: Write>(log: &[MergeRecord], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in log {
        w.serialize(rec)?;
    }
    if log.is_empty() {
        w.write_record(["kept", "absorbed", "cosine"])?;
    }
    w.flush()?;
    Ok(())
}

fn char_trigrams(label: &str) -> Vec<String> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() < 3 {
        return vec![label.to_string()];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Merges near-duplicate non-numeric tokens whose token-vector cosine reaches
/// `tau_tok`. Classes are closed transitively; each class keeps its most
/// frequent member and the edges of absorbed members are summed onto it.
pub fn merge_tokens(
    g: &FourPartiteGraph,
    embedder: &TextEmbedder,
    tau_tok: f64,
    blocking: bool,
) -> (FourPartiteGraph, Vec<MergeRecord>) {
    let candidates: Vec<NodeId> = g
        .ids_of_kind(NodeKind::Tok)
        .filter(|&id| parse_number(&g.node(id).label).is_none())
        .collect();
    let vectors: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|&id| embedder.embed_token(&g.node(id).label).values)
        .collect();

    let mut pairs: Vec<(usize, usize)> = if blocking {
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, &id) in candidates.iter().enumerate() {
            let grams: HashSet<String> = char_trigrams(&g.node(id).label).into_iter().collect();
            for gram in grams {
                postings.entry(gram).or_default().push(i);
            }
        }
        let mut set = HashSet::new();
        for list in postings.values() {
            for (x, &a) in list.iter().enumerate() {
                for &b in &list[x + 1..] {
                    set.insert((a.min(b), a.max(b)));
                }
            }
        }
        set.into_iter().collect()
    } else {
        (0..candidates.len())
            .flat_map(|a| (a + 1..candidates.len()).map(move |b| (a, b)))
            .collect()
    };
    pairs.sort_unstable();

    let similar: Vec<(usize, usize)> = pairs
        .par_iter()
        .filter(|&&(a, b)| cosine(&vectors[a], &vectors[b]).unwrap_or(0.0) >= tau_tok)
        .copied()
        .collect();
    if similar.is_empty() {
        return (g.clone(), Vec::new());
    }
    let mut ds = DisjointSet::new(candidates.len());
    for &(a, b) in &similar {
        ds.union(a, b);
    }

    let frequency = |id: NodeId| -> f64 {
        g.neighbors(id)
            .iter()
            .filter(|n| n.kind == EdgeKind::TokCid)
            .map(|n| n.weight)
            .sum()
    };
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..candidates.len() {
        classes.entry(ds.find(i)).or_default().push(i);
    }
    let mut target: HashMap<NodeId, NodeId> = HashMap::new();
    let mut log = Vec::new();
    for members in classes.values().filter(|m| m.len() > 1) {
        let &keep = members
            .iter()
            .max_by(|&&x, &&y| {
                let (nx, ny) = (g.node(candidates[x]), g.node(candidates[y]));
                frequency(candidates[x])
                    .total_cmp(&frequency(candidates[y]))
                    .then_with(|| ny.label.cmp(&nx.label))
            })
            .expect("non-empty class");
        for &m in members.iter().filter(|&&m| m != keep) {
            target.insert(candidates[m], candidates[keep]);
            log.push(MergeRecord {
                kept: g.node(candidates[keep]).label.clone(),
                absorbed: g.node(candidates[m]).label.clone(),
                cosine: cosine(&vectors[keep], &vectors[m]).unwrap_or(0.0),
            });
        }
    }
    log.sort_by(|x, y| (&x.kept, &x.absorbed).cmp(&(&y.kept, &y.absorbed)));

    let mut b = GraphBuilder::new(g.table_ids.clone());
    let mut remap = vec![0 as NodeId; g.node_count()];
    for (id, node) in g.nodes.iter().enumerate() {
        if target.contains_key(&(id as NodeId)) {
            continue;
        }
        let new_id = b.add_node(node.kind, node.key.clone(), node.label.clone(), node.side);
        b.nodes[new_id as usize].weight = node.weight;
        remap[id] = new_id;
    }
    for (&absorbed, &kept) in &target {
        remap[absorbed as usize] = remap[kept as usize];
    }
    for e in &g.edges {
        b.add_edge(remap[e.u as usize], remap[e.v as usize], e.weight)
            .expect("token merge cannot create invalid edges");
    }
    (b.finish(), log)
}

/// Ranked list of common column names, most common first.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyList {
    names: Vec<String>,
}

const DEFAULT_COLUMN_NAMES: &str = include_str!("../data/column_names.txt");

impl Default for FrequencyList {
    fn default() -> Self {
        Self::parse(DEFAULT_COLUMN_NAMES)
    }
}

impl FrequencyList {
    /// One name per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(normalize_name)
            .collect();
        Self { names }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            names: names.iter().map(|n| normalize_name(n.as_ref())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn rank(&self, name: &str) -> Option<usize> {
        let norm = normalize_name(name);
        self.names.iter().position(|n| *n == norm)
    }

    /// `1 − rank / len` for listed names, else 0.
    pub fn score(&self, name: &str) -> f64 {
        match self.rank(name) {
            Some(r) => 1.0 - r as f64 / self.names.len() as f64,
            None => 0.0,
        }
    }
}

/// Weights of the four column-importance indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub c_m: f64,
    pub c_l: f64,
    pub c_v: f64,
    pub c_f: f64,
    /// Ranked column-name file; the shipped list is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_list_file: Option<std::path::PathBuf>,
    #[serde(skip)]
    pub freq_list: FrequencyList,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            c_m: 0.25,
            c_l: 0.25,
            c_v: 0.25,
            c_f: 0.25,
            freq_list_file: None,
            freq_list: FrequencyList::default(),
        }
    }
}

impl ImportanceConfig {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.c_m, self.c_l, self.c_v, self.c_f];
        if ws.iter().any(|w| !(*w >= 0.0)) {
            return Err(GraphError::InvalidConfig(
                "weights must be non-negative".into(),
            ));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GraphError::InvalidConfig(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// Loads `freq_list_file` into `freq_list` when set.
    pub fn resolve_freq_list(&mut self) -> Result<()> {
        if let Some(path) = &self.freq_list_file {
            self.freq_list = FrequencyList::load(path)?;
        }
        Ok(())
    }
}

/// Column importance: weighted sum of completeness, linguistic share,
/// value variety and name generality.
pub fn column_importance(
    profile: &ColumnProfile,
    meta: &ColumnMeta,
    cfg: &ImportanceConfig,
) -> f64 {
    let s_miss = 1.0 - profile.missing_rate;
    let s_ling = profile.linguistic_fraction;
    let s_variety = profile.distinct_ratio;
    let s_freq = cfg.freq_list.score(&meta.name);
    cfg.c_m * s_miss + cfg.c_l * s_ling + cfg.c_v * s_variety + cfg.c_f * s_freq
}

/// Sets CID weights from `importances` (keyed by CID node key), TOK weights
/// to the mean of their adjacent CIDs, and RID weights to 1.
pub fn assign_node_weights(
    g: &mut FourPartiteGraph,
    importances: &HashMap<String, f64>,
) -> Result<()> {
    for node in g.nodes.iter_mut().filter(|n| n.kind == NodeKind::Cid) {
        node.weight = *importances
            .get(&node.key)
            .ok_or_else(|| GraphError::MissingImportance(node.key.clone()))?;
    }
    for id in 0..g.nodes.len() {
        match g.nodes[id].kind {
            NodeKind::Rid => g.nodes[id].weight = 1.0,
            NodeKind::Cid => {}
            NodeKind::Tok => {
                let cid_weights: Vec<f64> = g.adjacency[id]
                    .iter()
                    .filter(|n| n.kind == EdgeKind::TokCid)
                    .map(|n| g.nodes[n.node as usize].weight)
                    .collect();
                if cid_weights.is_empty() {
                    return Err(GraphError::Invariant(format!(
                        "token {} has no column neighbor",
                        g.nodes[id].key
                    )));
                }
                g.nodes[id].weight = cid_weights.iter().sum::<f64>() / cid_weights.len() as f64;
            }
        }
    }
    Ok(())
}

/// Read-only summary of a graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes_by_kind: BTreeMap<String, usize>,
    pub edges_by_kind: BTreeMap<String, usize>,
    pub isolated_nodes: usize,
    pub components: usize,
    pub total_edge_weight: f64,
    /// Degree → number of nodes with that degree; keys are decimal strings.
    pub degree_histogram: BTreeMap<String, usize>,
}

impl GraphStats {
    pub fn cid_cid_edges(&self) -> usize {
        self.edges_by_kind
            .get(EdgeKind::CidCid.as_str())
            .copied()
            .unwrap_or(0)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stats serialize")
    }
}

pub fn graph_stats(g: &FourPartiteGraph) -> GraphStats {
    let mut stats = GraphStats::default();
    for kind in [NodeKind::Rid, NodeKind::Tok, NodeKind::Cid] {
        stats
            .nodes_by_kind
            .insert(kind.as_str().into(), g.ids_of_kind(kind).count());
    }
    for kind in [EdgeKind::RidTok, EdgeKind::TokCid, EdgeKind::CidCid] {
        stats.edges_by_kind.insert(
            kind.as_str().into(),
            g.edges.iter().filter(|e| e.kind == kind).count(),
        );
    }
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for adj in &g.adjacency {
        *hist.entry(adj.len()).or_default() += 1;
    }
    // Zero-padded so that lexical order of the keys matches numeric order.
    stats.degree_histogram = hist
        .into_iter()
        .map(|(d, c)| (format!("{d:06}"), c))
        .collect();
    stats.isolated_nodes = g.adjacency.iter().filter(|a| a.is_empty()).count();
    let mut ds = DisjointSet::new(g.node_count());
    for e in &g.edges {
        ds.union(e.u as usize, e.v as usize);
    }
    stats.components = ds.count_sets();
    stats.total_edge_weight = g.total_edge_weight();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::column_similarity_matrix;
    use crate::tabular::{profile_table, read_table, CsvOptions};
    use crate::textvec::HashEmbedConfig;

    fn table(id: &str, csv: &str) -> TableData {
        read_table(csv.as_bytes(), id, &CsvOptions::default()).unwrap()
    }

    fn embedder() -> TextEmbedder {
        TextEmbedder::hashed(HashEmbedConfig::default()).unwrap()
    }

    fn toy() -> (TableData, TableData) {
        (
            table("A", "Title,Year\nHarry Potter,2001\nIron Man,2008\n"),
            table("B", "Title,Year\nHarry Potter,2001\nIron Man,2008\n"),
        )
    }

    fn build(a: &TableData, b: &TableData, cfg: &MergeConfig) -> FourPartiteGraph {
        let sim =
            column_similarity_matrix(a, &profile_table(a), b, &profile_table(b), &embedder(), cfg)
                .unwrap();
        build_four_partite(a, b, &sim, cfg, TokenizeOptions::default()).unwrap()
    }

    #[test]
    fn toy_graph_structure() {
        let (a, b) = toy();
        let g = build(&a, &b, &MergeConfig::default());
        let stats = graph_stats(&g);
        assert_eq!(stats.nodes_by_kind["RID"], 4);
        assert_eq!(stats.nodes_by_kind["CID"], 4);
        assert_eq!(stats.nodes_by_kind["TOK"], 4);
        let cid_pairs: Vec<(String, String)> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::CidCid)
            .map(|e| (g.node(e.u).label.clone(), g.node(e.v).label.clone()))
            .collect();
        assert_eq!(
            cid_pairs,
            vec![
                ("A_Title".into(), "B_Title".into()),
                ("A_Year".into(), "B_Year".into())
            ]
        );
        assert!(stats.edges_by_kind.values().all(|&c| c > 0));
        // Shared token links both tables.
        let hp = g.id_of("tt__harry_potter").unwrap();
        assert_eq!(g.degree(hp), 4);
        assert_eq!(
            g.edge_weight(hp, g.id_of("cid__A_Title").unwrap()),
            Some(1.0)
        );
    }

    #[test]
    fn threshold_above_one_disables_cid_edges() {
        let (a, b) = toy();
        let cfg = MergeConfig {
            tau_cid: 1.01,
            ..Default::default()
        };
        assert_eq!(graph_stats(&build(&a, &b, &cfg)).cid_cid_edges(), 0);
    }

    #[test]
    fn missing_row_is_isolated() {
        let a = crate::tabular::normalize_missing_default(&table("A", "x,y\n,\n1,2\n"), &[]);
        let b = table("B", "x,y\n1,2\n");
        let g = build(&a, &b, &MergeConfig::default());
        let rid = g.id_of("idx__A_0").unwrap();
        assert!(g.is_isolated(rid));
        assert_eq!(graph_stats(&g).isolated_nodes, 1);
    }

    #[test]
    fn repeated_tokens_fold_into_weights() {
        let a = table("A", "x\nfoo\nfoo\n");
        let b = table("B", "y\nbar\n");
        let g = build(&a, &b, &MergeConfig::default());
        let foo = g.id_of("tt__foo").unwrap();
        assert_eq!(g.edge_weight(foo, g.id_of("cid__A_x").unwrap()), Some(2.0));
    }

    #[test]
    fn empty_input_and_same_ids() {
        let a = table("A", "x\n");
        let b = table("B", "x\n");
        let cfg = MergeConfig::default();
        let sim = column_similarity_matrix(
            &a,
            &profile_table(&a),
            &b,
            &profile_table(&b),
            &embedder(),
            &cfg,
        )
        .unwrap();
        assert!(matches!(
            build_four_partite(&a, &b, &sim, &cfg, TokenizeOptions::default()),
            Err(GraphError::EmptyInput)
        ));
        let (a, _) = toy();
        let sim = column_similarity_matrix(
            &a,
            &profile_table(&a),
            &a,
            &profile_table(&a),
            &embedder(),
            &cfg,
        )
        .unwrap();
        assert!(matches!(
            build_four_partite(&a, &a, &sim, &cfg, TokenizeOptions::default()),
            Err(GraphError::SameTableId(_))
        ));
    }

    #[test]
    fn dump_round_trip() {
        let a = table("A", "Full Name,Year\nHarry Potter,2001\n100%,2008\n");
        let b = table("B", "Title,Year\nHarry Potter,2001\n");
        let g = build(&a, &b, &MergeConfig::default());
        let mut buf = Vec::new();
        g.write_dump(&mut buf).unwrap();
        let back = FourPartiteGraph::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(g.id_of("cid__A_Full%20Name").is_some());
        assert!(g.id_of("tt__100%25").is_some());
    }

    #[test]
    fn dump_rejects_bad_edges() {
        let text =
            "G A B\nN idx__A_0 RID A_0 1\nN cid__A_x CID A_x 1\nE idx__A_0 cid__A_x RID_TOK 1\n";
        assert!(matches!(
            FourPartiteGraph::read_dump(text.as_bytes()),
            Err(GraphError::Parse { line: 4, .. })
        ));
        let text =
            "G A B\nN cid__A_x CID A_x 1\nN cid__A_y CID A_y 1\nE cid__A_x cid__A_y CID_CID 0.9\n";
        assert!(matches!(
            FourPartiteGraph::read_dump(text.as_bytes()),
            Err(GraphError::SameTableCidEdge(..))
        ));
    }

    #[test]
    fn escape_round_trip() {
        for s in ["plain", "two words", "100%", "tab\there", "ü ß"] {
            assert_eq!(unescape(&escape(s)).as_deref(), Some(s));
            assert!(!escape(s).contains(char::is_whitespace));
        }
    }

    #[test]
    fn radcliffe_variants_merge_at_their_cosine() {
        let a = table("A", "actor\nDaniel Jacob Radcliffe\nEmma Watson\n");
        let b = table("B", "actor\nDaniel Radcliffe\nEmma Watson\n");
        let g = build(&a, &b, &MergeConfig::default());
        let e = embedder();
        let c = cosine(
            &e.embed_token("daniel_jacob_radcliffe").values,
            &e.embed_token("daniel_radcliffe").values,
        )
        .unwrap();
        let (merged, log) = merge_tokens(&g, &e, c, true);
        assert_eq!(log.len(), 1);
        assert_eq!(
            (log[0].kept.as_str(), log[0].absorbed.as_str()),
            ("daniel_jacob_radcliffe", "daniel_radcliffe")
        );
        assert_eq!(merged.ids_of_kind(NodeKind::Tok).count(), 2);
        let (unmerged, log) = merge_tokens(&g, &e, c + 1e-9, true);
        assert!(log.is_empty());
        assert_eq!(unmerged, g);
    }

    #[test]
    fn no_merges_at_threshold_one() {
        let a = table("A", "x\nalpha\nalphb\n");
        let b = table("B", "x\nalphc\n");
        let g = build(&a, &b, &MergeConfig::default());
        let (m, log) = merge_tokens(&g, &embedder(), 1.0, false);
        assert!(log.is_empty());
        assert_eq!(m, g);
    }

    #[test]
    fn numeric_tokens_never_merge() {
        let a = table("A", "x\n2001\n");
        let b = table("B", "x\n2001.0\n");
        let g = build(&a, &b, &MergeConfig::default());
        let (_, log) = merge_tokens(&g, &embedder(), -1.0, false);
        assert!(log.is_empty());
    }

    #[test]
    fn importance_cases() {
        let cfg = ImportanceConfig::default();
        let perfect = ColumnProfile {
            v_num: None,
            v_char: Some([0.0; 4]),
            missing_rate: 0.0,
            distinct_ratio: 1.0,
            linguistic_fraction: 1.0,
            n_valid: 10,
        };
        assert!((column_importance(&perfect, &ColumnMeta::new("id"), &cfg) - 1.0).abs() < 1e-15);
        let numeric = ColumnProfile {
            missing_rate: 0.5,
            distinct_ratio: 0.5,
            linguistic_fraction: 0.0,
            ..perfect.clone()
        };
        let absent = ColumnMeta::new("zz_not_listed");
        assert!((column_importance(&numeric, &absent, &cfg) - 0.25).abs() < 1e-15);
        let only_freq = ImportanceConfig {
            c_m: 0.0,
            c_l: 0.0,
            c_v: 0.0,
            c_f: 1.0,
            ..Default::default()
        };
        assert_eq!(column_importance(&perfect, &absent, &only_freq), 0.0);
        assert_eq!(cfg.freq_list.len(), 100);
        assert!(ImportanceConfig {
            c_m: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn token_weights_are_mean_of_columns() {
        let (a, b) = toy();
        let mut g = build(&a, &b, &MergeConfig::default());
        let imps: HashMap<String, f64> = [
            ("cid__A_Title", 0.8),
            ("cid__B_Title", 0.6),
            ("cid__A_Year", 0.3),
            ("cid__B_Year", 0.3),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        assert_weights(&mut g, &imps);
        let single = table("A", "x\nsolo\n");
        let other = table("B", "y\nelse\n");
        let mut g2 = build(&single, &other, &MergeConfig::default());
        let imps2 = [
            ("cid__A_x".to_string(), 0.42),
            ("cid__B_y".to_string(), 0.1),
        ]
        .into_iter()
        .collect();
        assign_node_weights(&mut g2, &imps2).unwrap();
        assert_eq!(g2.node(g2.id_of("tt__solo").unwrap()).weight, 0.42);
        assert!(matches!(
            assign_node_weights(&mut g2, &HashMap::new()),
            Err(GraphError::MissingImportance(_))
        ));
    }

    fn assert_weights(g: &mut FourPartiteGraph, imps: &HashMap<String, f64>) {
        let before = g.edges().to_vec();
        assign_node_weights(g, imps).unwrap();
        assert_eq!(g.edges(), &before[..]);
        let hp = g.node(g.id_of("tt__harry_potter").unwrap()).weight;
        assert!((hp - 0.7).abs() < 1e-15);
        assert_eq!(g.node(g.id_of("idx__A_0").unwrap()).weight, 1.0);
        assert_eq!(g.node(g.id_of("cid__A_Title").unwrap()).weight, 0.8);
    }

    #[test]
    fn empty_graph_stats() {
        let g = GraphBuilder::new(["A".into(), "B".into()]).finish();
        let s = graph_stats(&g);
        assert!(s.nodes_by_kind.values().all(|&c| c == 0));
        assert!(s.edges_by_kind.values().all(|&c| c == 0));
        assert_eq!(s.components, 0);
        assert_eq!(s.total_edge_weight, 0.0);
    }
}
