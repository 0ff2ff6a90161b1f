//! Schema matching and entity resolution decisions over an embedding space,
//! plus scoring against ground truth.
//!
//! Pairs are always written as `(name in table A, name in table B)`: column
//! names for schema matching, row keys for entity resolution. Ground-truth
//! files and prediction files share the CSV layout `side_a,side_b,kind`
//! (predictions add a `score` column).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_f32, EmbeddingSpace};
use crate::graph::{unescape, EdgeKind, FourPartiteGraph, NodeId, NodeKind};
use crate::tabular::TableData;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{kind} pair ({a}, {b}) does not reference one item in each table")]
    UnknownReference {
        kind: PairKind,
        a: String,
        b: String,
    },
    #[error("table `{0}` has no columns or no rows")]
    DegenerateTable(String),
}

pub type Result<T> = std::result::Result<T, MatchError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Column,
    Row,
}

impl std::fmt::Display for PairKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairKind::Column => "column",
            PairKind::Row => "row",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "SM")]
    SchemaMatching,
    #[serde(rename = "ER")]
    EntityResolution,
}

impl Task {
    pub fn pair_kind(self) -> PairKind {
        match self {
            Task::SchemaMatching => PairKind::Column,
            Task::EntityResolution => PairKind::Row,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Keep a pair only when each side is the other's best match.
    #[default]
    MutualNearest,
    /// Take pairs in descending score order while both sides are unused.
    GreedyTop1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Row pairs sharing at least one token.
    #[default]
    Blocking,
    /// Every cross-table row pair.
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub tau_match: f64,
    pub tau_er: f64,
    pub rule: DecisionRule,
    pub candidates: CandidateMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tau_match: 0.5,
            tau_er: 0.5,
            rule: DecisionRule::MutualNearest,
            candidates: CandidateMode::Blocking,
        }
    }
}

/// Known correspondences between two tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub column_pairs: BTreeSet<(String, String)>,
    pub row_pairs: BTreeSet<(String, String)>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PairRecord {
    side_a: String,
    side_b: String,
    kind: PairKind,
}

impl GroundTruth {
    pub fn t_sm(&self) -> usize {
        self.column_pairs.len()
    }

    pub fn t_er(&self) -> usize {
        self.row_pairs.len()
    }

    pub fn pairs(&self, kind: PairKind) -> &BTreeSet<(String, String)> {
        match kind {
            PairKind::Column => &self.column_pairs,
            PairKind::Row => &self.row_pairs,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut truth = Self::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (i, rec) in rdr.deserialize::<PairRecord>().enumerate() {
            let rec = rec.map_err(|e| MatchError::Parse {
                line: i + 2,
                msg: e.to_string(),
            })?;
            let pair = (rec.side_a, rec.side_b);
            match rec.kind {
                PairKind::Column => truth.column_pairs.insert(pair),
                PairKind::Row => truth.row_pairs.insert(pair),
            };
        }
        Ok(truth)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (kind, set) in [
            (PairKind::Column, &self.column_pairs),
            (PairKind::Row, &self.row_pairs),
        ] {
            for (a, b) in set {
                w.serialize(PairRecord {
                    side_a: a.clone(),
                    side_b: b.clone(),
                    kind,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Checks every pair against the tables. A pair written in B-then-A
    /// order is flipped, since pairs are unordered across tables.
    pub fn validated(&self, table_a: &TableData, table_b: &TableData) -> Result<Self> {
        let cols = |t: &TableData| -> HashSet<String> {
            t.columns().iter().map(|c| c.name.clone()).collect()
        };
        let rows = |t: &TableData| -> HashSet<String> { t.row_keys().iter().cloned().collect() };
        let orient =
            |kind, set: &BTreeSet<(String, String)>, a: &HashSet<String>, b: &HashSet<String>| {
                set.iter()
                    .map(|(x, y)| {
                        if a.contains(x) && b.contains(y) {
                            Ok((x.clone(), y.clone()))
                        } else if a.contains(y) && b.contains(x) {
                            Ok((y.clone(), x.clone()))
                        } else {
                            Err(MatchError::UnknownReference {
                                kind,
                                a: x.clone(),
                                b: y.clone(),
                            })
                        }
                    })
                    .collect::<Result<BTreeSet<_>>>()
            };
        Ok(Self {
            column_pairs: orient(
                PairKind::Column,
                &self.column_pairs,
                &cols(table_a),
                &cols(table_b),
            )?,
            row_pairs: orient(
                PairKind::Row,
                &self.row_pairs,
                &rows(table_a),
                &rows(table_b),
            )?,
        })
    }
}

/// One predicted cross-table pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub side_a: String,
    pub side_b: String,
    pub score: f64,
}

/// Splits a RID or CID node key into `(table id, name)`.
pub fn split_node_key(key: &str) -> Option<(String, String)> {
    let kind = NodeKind::from_key(key)?;
    if kind == NodeKind::Tok {
        return None;
    }
    let rest = &key[kind.prefix().len()..];
    let (table, name) = rest.split_once('_')?;
    Some((table.to_string(), unescape(name)?))
}

fn node_name(g: &FourPartiteGraph, id: NodeId) -> String {
    let key = &g.node(id).key;
    split_node_key(key)
        .map(|(_, n)| n)
        .unwrap_or_else(|| key.clone())
}

/// Applies a decision rule to scored candidate pairs `(i, j, score)` where
/// `i` indexes side A and `j` side B. Ties go to the smaller index. The
/// threshold is applied after the rule, so raising it only drops pairs.
pub fn decide(
    scored: &[(usize, usize, f64)],
    rule: DecisionRule,
    tau: f64,
) -> Vec<(usize, usize, f64)> {
    let better = |s: f64, idx: usize, cur: Option<(f64, usize)>| match cur {
        None => true,
        Some((cs, ci)) => s > cs || (s == cs && idx < ci),
    };
    let mut picked: Vec<(usize, usize, f64)> = match rule {
        DecisionRule::MutualNearest => {
            let mut best_a: HashMap<usize, (f64, usize)> = HashMap::new();
            let mut best_b: HashMap<usize, (f64, usize)> = HashMap::new();
            for &(i, j, s) in scored {
                if better(s, j, best_a.get(&i).copied()) {
                    best_a.insert(i, (s, j));
                }
                if better(s, i, best_b.get(&j).copied()) {
                    best_b.insert(j, (s, i));
                }
            }
            best_a
                .iter()
                .filter(|(&i, &(_, j))| best_b.get(&j).map(|&(_, bi)| bi) == Some(i))
                .map(|(&i, &(s, j))| (i, j, s))
                .collect()
        }
        DecisionRule::GreedyTop1 => {
            let mut order: Vec<&(usize, usize, f64)> = scored.iter().collect();
            order.sort_by(|x, y| {
                y.2.total_cmp(&x.2)
                    .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
            });
            let (mut used_a, mut used_b) = (HashSet::new(), HashSet::new());
            let mut out = Vec::new();
            for &&(i, j, s) in &order {
                if !used_a.contains(&i) && !used_b.contains(&j) {
                    used_a.insert(i);
                    used_b.insert(j);
                    out.push((i, j, s));
                }
            }
            out
        }
    };
    picked.retain(|p| p.2 >= tau);
    picked.sort_by_key(|p| (p.0, p.1));
    picked
}

fn embedded<'s>(
    space: &'s EmbeddingSpace,
    g: &FourPartiteGraph,
    ids: Vec<NodeId>,
) -> Vec<(NodeId, &'s [f32])> {
    ids.into_iter()
        .filter_map(|id| match space.vector(&g.node(id).key) {
            Some(v) => Some((id, v)),
            None => {
                log::warn!("{} has no embedding; skipped", g.node(id).key);
                None
            }
        })
        .collect()
}

/// Column pairs decided from cosine between cross-table CID vectors.
pub fn schema_match(
    space: &EmbeddingSpace,
    g: &FourPartiteGraph,
    tau: f64,
    rule: DecisionRule,
) -> Vec<Prediction> {
    let a = embedded(space, g, g.ids_of_side(NodeKind::Cid, 0));
    let b = embedded(space, g, g.ids_of_side(NodeKind::Cid, 1));
    let scored: Vec<(usize, usize, f64)> = (0..a.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let b = &b;
            let va = a[i].1;
            (0..b.len()).map(move |j| (i, j, cosine_f32(va, b[j].1)))
        })
        .collect();
    decide(&scored, rule, tau)
        .into_iter()
        .map(|(i, j, s)| Prediction {
            side_a: node_name(g, a[i].0),
            side_b: node_name(g, b[j].0),
            score: s,
        })
        .collect()
}

/// Cross-table RID pairs `(side A, side B)`, sorted.
pub fn entity_candidates(g: &FourPartiteGraph, mode: CandidateMode) -> Vec<(NodeId, NodeId)> {
    let mut pairs: Vec<(NodeId, NodeId)> = match mode {
        CandidateMode::Complete => {
            let b = g.ids_of_side(NodeKind::Rid, 1);
            g.ids_of_side(NodeKind::Rid, 0)
                .into_iter()
                .flat_map(|x| b.iter().map(move |&y| (x, y)))
                .collect()
        }
        CandidateMode::Blocking => {
            let mut set = HashSet::new();
            for tok in g.ids_of_kind(NodeKind::Tok) {
                let mut sides: [Vec<NodeId>; 2] = [Vec::new(), Vec::new()];
                for n in g
                    .neighbors(tok)
                    .iter()
                    .filter(|n| n.kind == EdgeKind::RidTok)
                {
                    if let Some(side) = g.node(n.node).side {
                        sides[side].push(n.node);
                    }
                }
                for &x in &sides[0] {
                    for &y in &sides[1] {
                        set.insert((x, y));
                    }
                }
            }
            set.into_iter().collect()
        }
    };
    pairs.sort_unstable();
    pairs
}

/// Row pairs decided from cosine between candidate RID vectors.
pub fn entity_resolve(
    space: &EmbeddingSpace,
    g: &FourPartiteGraph,
    candidates: &[(NodeId, NodeId)],
    tau: f64,
    rule: DecisionRule,
) -> Vec<Prediction> {
    let scored: Vec<(usize, usize, f64)> = candidates
        .par_iter()
        .filter_map(|&(x, y)| {
            let vx = space.vector(&g.node(x).key)?;
            let vy = space.vector(&g.node(y).key)?;
            Some((x as usize, y as usize, cosine_f32(vx, vy)))
        })
        .collect();
    decide(&scored, rule, tau)
        .into_iter()
        .map(|(i, j, s)| Prediction {
            side_a: node_name(g, i as NodeId),
            side_b: node_name(g, j as NodeId),
            score: s,
        })
        .collect()
}

/// Precision, recall and F1 for a prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub rule: DecisionRule,
    pub threshold: f64,
    pub n_predicted: usize,
    pub n_truth: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Scores `predicted` against the truth pairs for `task`; pair orientation
/// is ignored.
pub fn evaluate(predicted: &[Prediction], truth: &GroundTruth, task: Task) -> MatchReport {
    let truth_set: HashSet<(String, String)> = truth
        .pairs(task.pair_kind())
        .iter()
        .map(|(a, b)| unordered(a, b))
        .collect();
    let pred_set: HashSet<(String, String)> = predicted
        .iter()
        .map(|p| unordered(&p.side_a, &p.side_b))
        .collect();
    let tp = pred_set.intersection(&truth_set).count();
    let (np, nt) = (pred_set.len(), truth_set.len());
    let precision = match (np, nt) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => tp as f64 / np as f64,
    };
    let recall = if nt == 0 { 1.0 } else { tp as f64 / nt as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchReport {
        task,
        mode: None,
        rule: DecisionRule::default(),
        threshold: f64::NAN,
        n_predicted: np,
        n_truth: nt,
        true_positives: tp,
        precision,
        recall,
        f1,
        predictions: predicted.to_vec(),
    }
}

impl MatchReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn write_predictions<W: Write>(&self, writer: W) -> Result<()> {
        write_predictions(&self.predictions, self.task.pair_kind(), writer)
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    side_a: String,
    side_b: String,
    kind: PairKind,
    score: f64,
}

pub fn write_predictions<W: Write>(
    predictions: &[Prediction],
    kind: PairKind,
    writer: W,
) -> Result<()> {
    write_prediction_sets(&[(predictions, kind)], writer)
}

/// Writes several prediction sets into one CSV.
pub fn write_prediction_sets<W: Write>(
    sets: &[(&[Prediction], PairKind)],
    writer: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(["side_a", "side_b", "kind", "score"])?;
    for &(predictions, kind) in sets {
        for p in predictions {
            w.serialize(PredictionRecord {
                side_a: p.side_a.clone(),
                side_b: p.side_b.clone(),
                kind,
                score: p.score,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a predictions CSV, split by pair kind.
pub fn read_predictions<R: Read>(reader: R) -> Result<(Vec<Prediction>, Vec<Prediction>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let (mut cols, mut rows) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.deserialize::<PredictionRecord>().enumerate() {
        let rec = rec.map_err(|e| MatchError::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        let p = Prediction {
            side_a: rec.side_a,
            side_b: rec.side_b,
            score: rec.score,
        };
        match rec.kind {
            PairKind::Column => cols.push(p),
            PairKind::Row => rows.push(p),
        }
    }
    Ok((cols, rows))
}

/// `(t_SM / n_column, t_ER / n_row)` with counts taken from the smaller table.
pub fn overlap_rates(
    truth: &GroundTruth,
    table_a: &TableData,
    table_b: &TableData,
) -> Result<(f64, f64)> {
    for t in [table_a, table_b] {
        if t.n_cols() == 0 || t.n_rows() == 0 {
            return Err(MatchError::DegenerateTable(t.table_id().to_string()));
        }
    }
    let n_column = table_a.n_cols().min(table_b.n_cols());
    let n_row = table_a.n_rows().min(table_b.n_rows());
    Ok((
        truth.t_sm() as f64 / n_column as f64,
        truth.t_er() as f64 / n_row as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(a: &str, b: &str) -> Prediction {
        Prediction {
            side_a: a.into(),
            side_b: b.into(),
            score: 1.0,
        }
    }

    fn truth_cols(pairs: &[(&str, &str)]) -> GroundTruth {
        GroundTruth {
            column_pairs: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn perfect_and_empty_scores() {
        let t = truth_cols(&[("a", "b")]);
        let r = evaluate(&[pred("a", "b")], &t, Task::SchemaMatching);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = evaluate(&[], &t, Task::SchemaMatching);
        assert_eq!(r.f1, 0.0);
        let r = evaluate(&[], &GroundTruth::default(), Task::SchemaMatching);
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn half_precision_quarter_recall() {
        let t = truth_cols(&[("a", "w"), ("b", "x"), ("c", "y"), ("d", "z")]);
        let r = evaluate(&[pred("a", "w"), pred("b", "y")], &t, Task::SchemaMatching);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.25);
        // 2·0.5·0.25 / 0.75
        assert!((r.f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn orientation_ignored() {
        let t = truth_cols(&[("a", "b")]);
        assert_eq!(
            evaluate(&[pred("b", "a")], &t, Task::SchemaMatching).f1,
            1.0
        );
    }

    #[test]
    fn mutual_rule_rejects_one_sided_best() {
        // a0's best is b0, but b0 prefers a1.
        let scored = vec![(0, 0, 0.9), (0, 1, 0.1), (1, 0, 0.95), (1, 1, 0.2)];
        let got = decide(&scored, DecisionRule::MutualNearest, -1.0);
        assert_eq!(got, vec![(1, 0, 0.95)]);
        let greedy = decide(&scored, DecisionRule::GreedyTop1, -1.0);
        assert_eq!(greedy, vec![(0, 1, 0.1), (1, 0, 0.95)]);
        assert!(decide(&scored, DecisionRule::MutualNearest, 1.01).is_empty());
    }

    #[test]
    fn truth_csv_round_trip_and_orientation() {
        let text = "side_a,side_b,kind\ntitle,name,column\nr1,r9,row\n";
        let t = GroundTruth::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.t_sm(), 1);
        assert_eq!(t.t_er(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);

        use crate::tabular::ColumnMeta;
        let a = TableData::new("A", vec![ColumnMeta::new("title")], vec![vec![None]]).unwrap();
        let b = TableData::new("B", vec![ColumnMeta::new("name")], vec![vec![None]]).unwrap();
        let flipped = truth_cols(&[("name", "title")]);
        let v = flipped.validated(&a, &b).unwrap();
        assert!(v.column_pairs.contains(&("title".into(), "name".into())));
        assert!(matches!(
            truth_cols(&[("x", "name")]).validated(&a, &b),
            Err(MatchError::UnknownReference { .. })
        ));
    }

    #[test]
    fn overlap_rate_cases() {
        use crate::tabular::ColumnMeta;
        let table = |id: &str, cols: usize, rows: usize| {
            TableData::new(
                id,
                (0..cols)
                    .map(|c| ColumnMeta::new(format!("c{c}")))
                    .collect(),
                vec![vec![None; cols]; rows],
            )
            .unwrap()
        };
        let pairs: Vec<(String, String)> =
            (0..5).map(|i| (format!("c{i}"), format!("c{i}"))).collect();
        let t = GroundTruth {
            column_pairs: pairs.into_iter().collect(),
            ..Default::default()
        };
        let (oc, or) = overlap_rates(&t, &table("A", 10, 4), &table("B", 12, 6)).unwrap();
        assert_eq!((oc, or), (0.5, 0.0));
        assert!(matches!(
            overlap_rates(&t, &table("A", 0, 4), &table("B", 3, 3)),
            Err(MatchError::DegenerateTable(_))
        ));
    }

    #[test]
    fn node_keys_split() {
        assert_eq!(
            split_node_key("cid__A_first%20name"),
            Some(("A".into(), "first name".into()))
        );
        assert_eq!(
            split_node_key("idx__B_r_7"),
            Some(("B".into(), "r_7".into()))
        );
        assert_eq!(split_node_key("tt__x"), None);
    }

    proptest! {
        #[test]
        fn decisions_form_partial_matching(
            scores in proptest::collection::vec(-1.0f64..1.0, 1..60),
            width in 1usize..8,
            greedy in any::<bool>(),
        ) {
            let scored: Vec<(usize, usize, f64)> =
                scores.iter().enumerate().map(|(k, &s)| (k / width, k % width, s)).collect();
            let rule = if greedy { DecisionRule::GreedyTop1 } else { DecisionRule::MutualNearest };
            let got = decide(&scored, rule, -1.0);
            let a: HashSet<usize> = got.iter().map(|p| p.0).collect();
            let b: HashSet<usize> = got.iter().map(|p| p.1).collect();
            prop_assert_eq!(a.len(), got.len());
            prop_assert_eq!(b.len(), got.len());
        }

        #[test]
        fn raising_threshold_only_removes(
            scores in proptest::collection::vec(-1.0f64..1.0, 1..60),
            width in 1usize..8,
            lo in -1.0f64..1.0,
            delta in 0.0f64..1.0,
        ) {
            let scored: Vec<(usize, usize, f64)> =
                scores.iter().enumerate().map(|(k, &s)| (k / width, k % width, s)).collect();
            for rule in [DecisionRule::MutualNearest, DecisionRule::GreedyTop1] {
                let low: HashSet<(usize, usize)> = decide(&scored, rule, lo).iter().map(|p| (p.0, p.1)).collect();
                let high: HashSet<(usize, usize)> =
                    decide(&scored, rule, lo + delta).iter().map(|p| (p.0, p.1)).collect();
                prop_assert!(high.is_subset(&low));
            }
        }

        #[test]
        fn evaluate_symmetric_in_orientation(flip in proptest::collection::vec(any::<bool>(), 4)) {
            let t = truth_cols(&[("a", "w"), ("b", "x"), ("c", "y"), ("d", "q")]);
            let base = [("a", "w"), ("b", "x"), ("c", "z"), ("e", "q")];
            let straight: Vec<Prediction> = base.iter().map(|(a, b)| pred(a, b)).collect();
            let mixed: Vec<Prediction> = base
                .iter()
                .zip(&flip)
                .map(|((a, b), &f)| if f { pred(b, a) } else { pred(a, b) })
                .collect();
            let r1 = evaluate(&straight, &t, Task::SchemaMatching);
            let r2 = evaluate(&mixed, &t, Task::SchemaMatching);
            prop_assert_eq!(r1.f1, r2.f1);
        }
    }
}
