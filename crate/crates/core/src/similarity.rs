//! Column-pair similarity: schema evidence (name/description), instance
//! evidence (value statistics) and their confidence-weighted blend.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{normalize_name, ColumnMeta, ColumnProfile, TableData, FEATURE_LEN};
use crate::textvec::{cosine, sentence_key, TextEmbedder};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("invalid merge config: {0}")]
    InvalidConfig(String),
    #[error("{side} has {profiles} profiles for {columns} columns")]
    ProfileCount {
        side: &'static str,
        profiles: usize,
        columns: usize,
    },
}

/// Parameters of the similarity blend and CID-edge threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Exponent applied to absolute feature gaps; below 1 to damp outliers.
    pub beta: f64,
    pub epsilon: f64,
    /// Minimum total similarity for a CID–CID edge.
    pub tau_cid: f64,
    /// Row count at which the size component of the confidence saturates.
    pub size_saturation_rows: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            alpha_min: 0.3,
            alpha_max: 0.9,
            beta: 0.5,
            epsilon: 1e-9,
            tau_cid: 0.6,
            size_saturation_rows: 1000,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let bad = |m: String| Err(SimilarityError::InvalidConfig(m));
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return bad(format!(
                "need 0 <= alpha_min <= alpha_max <= 1, got {} and {}",
                self.alpha_min, self.alpha_max
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.tau_cid.is_nan() {
            return bad("tau_cid is NaN".into());
        }
        Ok(())
    }
}

/// Edit distance with unit insert, delete and substitute costs, over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − lev / max(len)` over case-folded names; 1 when both are empty.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// Maps a cosine in [−1, 1] onto [0, 1].
fn rescale_cosine(c: f64) -> f64 {
    ((c + 1.0) / 2.0).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemaSimilarity {
    pub s_cos: f64,
    pub s_lev: f64,
    pub s_schema: f64,
}

pub fn schema_similarity(
    meta_i: &ColumnMeta,
    meta_j: &ColumnMeta,
    embedder: &TextEmbedder,
) -> SchemaSimilarity {
    let si = embedder.embed_sentence(&sentence_key(&meta_i.name, meta_i.description.as_deref()));
    let sj = embedder.embed_sentence(&sentence_key(&meta_j.name, meta_j.description.as_deref()));
    schema_from_vectors(&si.values, &sj.values, &meta_i.name, &meta_j.name)
}

fn schema_from_vectors(si: &[f64], sj: &[f64], name_i: &str, name_j: &str) -> SchemaSimilarity {
    let s_cos = rescale_cosine(cosine(si, sj).unwrap_or(0.0));
    let s_lev = levenshtein_similarity(name_i, name_j);
    SchemaSimilarity {
        s_cos,
        s_lev,
        s_schema: (s_cos + s_lev) / 2.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceSimilarity {
    pub v_cos: f64,
    pub s_diff: f64,
    pub s_instance: f64,
    /// No feature was applicable on both sides, so `s_diff` carries no evidence.
    pub low_confidence: bool,
}

/// Relative gap of one feature: `|a − b|^β / (|a| + |b| + ε)`.
///
/// Magnitudes in the denominator keep the gap non-negative for features that
/// can be negative (means, minima); for non-negative features this is the
/// plain `a + b + ε` form.
pub fn relative_gap(a: f64, b: f64, beta: f64, epsilon: f64) -> f64 {
    (a - b).abs().powf(beta) / (a.abs() + b.abs() + epsilon)
}

pub fn instance_similarity(
    p_i: &ColumnProfile,
    p_j: &ColumnProfile,
    cfg: &MergeConfig,
) -> InstanceSimilarity {
    instance_from_features(
        &p_i.feature_vector(),
        &p_i.applicable_mask(),
        &p_j.feature_vector(),
        &p_j.applicable_mask(),
        cfg,
    )
}

fn instance_from_features(
    vi: &[f64; FEATURE_LEN],
    mi: &[bool; FEATURE_LEN],
    vj: &[f64; FEATURE_LEN],
    mj: &[bool; FEATURE_LEN],
    cfg: &MergeConfig,
) -> InstanceSimilarity {
    let v_cos = rescale_cosine(cosine(vi, vj).expect("fixed length"));
    let gaps: Vec<f64> = (0..FEATURE_LEN)
        .filter(|&k| mi[k] && mj[k])
        .map(|k| relative_gap(vi[k], vj[k], cfg.beta, cfg.epsilon))
        .collect();
    let (s_diff, low_confidence) = if gaps.is_empty() {
        (0.0, true)
    } else {
        let d = gaps.iter().sum::<f64>() / gaps.len() as f64;
        (1.0 - d.min(1.0), false)
    };
    InstanceSimilarity {
        v_cos,
        s_diff,
        s_instance: (v_cos + s_diff) / 2.0,
        low_confidence,
    }
}

/// Confidence in the instance evidence: completeness of both columns times a
/// size factor that saturates at `size_saturation_rows`.
pub fn confidence(
    p_i: &ColumnProfile,
    p_j: &ColumnProfile,
    n_rows_i: usize,
    n_rows_j: usize,
    cfg: &MergeConfig,
) -> f64 {
    let completeness = (1.0 - p_i.missing_rate) * (1.0 - p_j.missing_rate);
    let size_factor = if cfg.size_saturation_rows == 0 {
        1.0
    } else {
        (n_rows_i.min(n_rows_j) as f64 / cfg.size_saturation_rows as f64).min(1.0)
    };
    (completeness * size_factor).clamp(0.0, 1.0)
}

/// Returns `(alpha, total)`.
pub fn merge_similarity(schema: f64, instance: f64, r_value: f64, cfg: &MergeConfig) -> (f64, f64) {
    let alpha = cfg.alpha_max - (cfg.alpha_max - cfg.alpha_min) * r_value;
    (alpha, alpha * schema + (1.0 - alpha) * instance)
}

/// Every similarity component for one column pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub s_cos: f64,
    pub s_lev: f64,
    pub s_schema: f64,
    pub v_cos: f64,
    pub s_diff: f64,
    pub s_instance: f64,
    pub r_value: f64,
    pub alpha: f64,
    pub s_total: f64,
    pub low_confidence: bool,
}

/// Similarity of every cross-table column pair, row-major over table A's columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub columns_a: Vec<String>,
    pub columns_b: Vec<String>,
    scores: Vec<SimilarityScore>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> &SimilarityScore {
        &self.scores[i * self.columns_b.len() + j]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &SimilarityScore)> {
        let nb = self.columns_b.len();
        self.scores
            .iter()
            .enumerate()
            .map(move |(k, s)| (k / nb, k % nb, s))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "col_a",
            "col_b",
            "s_cos",
            "s_lev",
            "S_schema",
            "v_cos",
            "s_diff",
            "S_instance",
            "alpha",
            "S_total",
        ])?;
        for (i, j, s) in self.iter() {
            let nums = [
                s.s_cos,
                s.s_lev,
                s.s_schema,
                s.v_cos,
                s.s_diff,
                s.s_instance,
                s.alpha,
                s.s_total,
            ];
            let mut rec = vec![self.columns_a[i].clone(), self.columns_b[j].clone()];
            rec.extend(nums.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores all pairs `(i ∈ A, j ∈ B)`; pairs within one table are not scored.
pub fn column_similarity_matrix(
    table_a: &TableData,
    profiles_a: &[ColumnProfile],
    table_b: &TableData,
    profiles_b: &[ColumnProfile],
    embedder: &TextEmbedder,
    cfg: &MergeConfig,
) -> Result<SimilarityMatrix, SimilarityError> {
    cfg.validate()?;
    for (side, t, p) in [
        ("table A", table_a, profiles_a),
        ("table B", table_b, profiles_b),
    ] {
        if t.n_cols() != p.len() {
            return Err(SimilarityError::ProfileCount {
                side,
                profiles: p.len(),
                columns: t.n_cols(),
            });
        }
    }
    let sentence_vectors = |t: &TableData| -> Vec<Vec<f64>> {
        t.columns()
            .iter()
            .map(|c| {
                embedder
                    .embed_sentence(&sentence_key(&c.name, c.description.as_deref()))
                    .values
            })
            .collect()
    };
    let sa = sentence_vectors(table_a);
    let sb = sentence_vectors(table_b);
    let nb = table_b.n_cols();
    let scores = (0..table_a.n_cols() * nb)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nb, k % nb);
            let schema = schema_from_vectors(
                &sa[i],
                &sb[j],
                &table_a.columns()[i].name,
                &table_b.columns()[j].name,
            );
            let inst = instance_similarity(&profiles_a[i], &profiles_b[j], cfg);
            let r_value = confidence(
                &profiles_a[i],
                &profiles_b[j],
                table_a.n_rows(),
                table_b.n_rows(),
                cfg,
            );
            let (alpha, s_total) = merge_similarity(schema.s_schema, inst.s_instance, r_value, cfg);
            SimilarityScore {
                s_cos: schema.s_cos,
                s_lev: schema.s_lev,
                s_schema: schema.s_schema,
                v_cos: inst.v_cos,
                s_diff: inst.s_diff,
                s_instance: inst.s_instance,
                r_value,
                alpha,
                s_total,
                low_confidence: inst.low_confidence,
            }
        })
        .collect();
    Ok(SimilarityMatrix {
        columns_a: table_a.columns().iter().map(|c| c.name.clone()).collect(),
        columns_b: table_b.columns().iter().map(|c| c.name.clone()).collect(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{profile_table, CsvOptions};
    use crate::textvec::HashEmbedConfig;
    use proptest::prelude::*;

    fn embedder() -> TextEmbedder {
        TextEmbedder::hashed(HashEmbedConfig::default()).unwrap()
    }

    fn profile(
        v_num: Option<[f64; 5]>,
        v_char: Option<[f64; 4]>,
        missing_rate: f64,
    ) -> ColumnProfile {
        ColumnProfile {
            v_num,
            v_char,
            missing_rate,
            distinct_ratio: 1.0,
            linguistic_fraction: 0.0,
            n_valid: 10,
        }
    }

    #[test]
    fn levenshtein_cases() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("temperature", "temp"), 7);
        assert_eq!(levenshtein("", "ab"), 2);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("Max_Temp", "Min_Temp"), 2);
    }

    #[test]
    fn schema_identity_and_lev() {
        let e = embedder();
        let a =
            ColumnMeta::new("funding").with_description("the amount of financial support received");
        let s = schema_similarity(&a, &a.clone(), &e);
        assert!((s.s_cos - 1.0).abs() < 1e-12);
        assert_eq!(s.s_lev, 1.0);
        assert!((s.s_schema - 1.0).abs() < 1e-12);

        let s = schema_similarity(
            &ColumnMeta::new("temperature"),
            &ColumnMeta::new("temp"),
            &e,
        );
        assert!((s.s_lev - (1.0 - 7.0 / 11.0)).abs() < 1e-12);
        assert!((s.s_lev - 0.3636).abs() < 1e-4);
    }

    #[test]
    fn antipodal_sentences_give_zero_s_cos() {
        let s = schema_from_vectors(&[1.0, 0.0], &[-1.0, 0.0], "a", "b");
        assert_eq!(s.s_cos, 0.0);
    }

    #[test]
    fn case_folded_names_only() {
        assert_eq!(levenshtein_similarity("Title", "title"), 1.0);
        assert!(levenshtein_similarity("Max_Temp", "Min_Temp") < 1.0);
    }

    #[test]
    fn identical_profiles_are_fully_similar() {
        let p = profile(
            Some([2.0, 1.0, 3.0, 0.5, 0.7]),
            Some([0.1, 0.0, 0.0, 0.9]),
            0.0,
        );
        let s = instance_similarity(&p, &p, &MergeConfig::default());
        assert!((s.v_cos - 1.0).abs() < 1e-12);
        assert_eq!(s.s_diff, 1.0);
        assert!((s.s_instance - 1.0).abs() < 1e-12);
        assert!(!s.low_confidence);
    }

    #[test]
    fn single_feature_gap() {
        let d = relative_gap(1.0, 3.0, 0.5, 1e-9);
        assert!((d - 2f64.sqrt() / 4.0).abs() < 1e-9);
        assert!((1.0 - d - 0.64645).abs() < 1e-5);
        // Only the char block applies on both sides, so the numeric gap is ignored.
        let num = profile(Some([5.0; 5]), Some([0.0, 0.0, 0.0, 1.0]), 0.0);
        let text = profile(None, Some([0.0, 0.0, 0.0, 1.0]), 0.0);
        let s = instance_similarity(&num, &text, &MergeConfig::default());
        assert_eq!(s.s_diff, 1.0);
    }

    #[test]
    fn empty_applicability_is_low_confidence() {
        let a = profile(Some([1.0; 5]), None, 0.0);
        let b = profile(None, Some([0.5; 4]), 0.0);
        let s = instance_similarity(&a, &b, &MergeConfig::default());
        assert_eq!(s.s_diff, 0.0);
        assert!(s.low_confidence);
    }

    #[test]
    fn confidence_cases() {
        let cfg = MergeConfig::default();
        let full = profile(None, None, 0.0);
        let half = profile(None, None, 0.5);
        assert_eq!(confidence(&full, &full, 1000, 5000, &cfg), 1.0);
        assert_eq!(confidence(&half, &half, 1000, 1000, &cfg), 0.25);
        assert_eq!(confidence(&full, &full, 0, 1000, &cfg), 0.0);
        assert_eq!(confidence(&full, &full, 500, 1000, &cfg), 0.5);
    }

    #[test]
    fn merge_cases() {
        let cfg = MergeConfig::default();
        let (alpha, _) = merge_similarity(0.5, 0.5, 1.0, &cfg);
        assert!((alpha - 0.3).abs() < 1e-15);
        let (alpha, _) = merge_similarity(0.5, 0.5, 0.0, &cfg);
        assert_eq!(alpha, 0.9);
        let half = MergeConfig {
            alpha_min: 0.5,
            alpha_max: 0.5,
            ..cfg
        };
        let (_, total) = merge_similarity(0.8, 0.6, 0.3, &half);
        assert!((total - 0.7).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::default().validate().is_ok());
        for bad in [
            MergeConfig {
                alpha_min: 0.95,
                ..Default::default()
            },
            MergeConfig {
                beta: 1.0,
                ..Default::default()
            },
            MergeConfig {
                epsilon: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn scale_law_at_zero_epsilon() {
        for (a, b) in [(1.0, 3.0), (0.2, 0.9), (10.0, 4.0)] {
            let base = relative_gap(a, b, 0.5, 0.0);
            let doubled = relative_gap(2.0 * a, 2.0 * b, 0.5, 0.0);
            assert!((doubled - 2f64.powf(-0.5) * base).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_cardinality_and_copy() {
        let a = crate::tabular::read_table(
            "name,age,city\nann,31,tokyo\nbob,45,osaka\ncy,27,kyoto\n".as_bytes(),
            "A",
            &CsvOptions::default(),
        )
        .unwrap();
        let b = crate::tabular::read_table(
            "name,x,y,z\nann,1,2,3\nbob,4,5,6\ncy,7,8,9\n".as_bytes(),
            "B",
            &CsvOptions::default(),
        )
        .unwrap();
        let (pa, pb) = (profile_table(&a), profile_table(&b));
        let m = column_similarity_matrix(&a, &pa, &b, &pb, &embedder(), &MergeConfig::default())
            .unwrap();
        assert_eq!(m.len(), 12);
        for (_, _, s) in m.iter() {
            for v in [
                s.s_cos,
                s.s_lev,
                s.s_schema,
                s.v_cos,
                s.s_diff,
                s.s_instance,
                s.alpha,
                s.s_total,
            ] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!((m.get(0, 0).s_total - 1.0).abs() < 1e-12);

        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(
            "col_a,col_b,s_cos,s_lev,S_schema,v_cos,s_diff,S_instance,alpha,S_total\n"
        ));
        assert_eq!(text.lines().count(), 13);
    }

    fn arb_profile() -> impl Strategy<Value = ColumnProfile> {
        (
            prop::option::of(prop::array::uniform5(-100.0f64..100.0)),
            prop::option::of(prop::array::uniform4(0.0f64..1.0)),
            0.0f64..1.0,
        )
            .prop_map(|(n, c, m)| profile(n, c, m))
    }

    proptest! {
        #[test]
        fn pair_scores_are_symmetric(p in arb_profile(), q in arb_profile(), na in 0usize..3000, nb in 0usize..3000) {
            let cfg = MergeConfig::default();
            let (x, y) = (instance_similarity(&p, &q, &cfg), instance_similarity(&q, &p, &cfg));
            prop_assert!((x.v_cos - y.v_cos).abs() < 1e-15);
            prop_assert!((x.s_diff - y.s_diff).abs() < 1e-15);
            let (rx, ry) = (confidence(&p, &q, na, nb, &cfg), confidence(&q, &p, nb, na, &cfg));
            prop_assert_eq!(rx, ry);
            prop_assert!((0.0..=1.0).contains(&x.s_instance));
        }

        #[test]
        fn alpha_is_non_increasing_in_confidence(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
            let cfg = MergeConfig::default();
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(merge_similarity(0.5, 0.5, hi, &cfg).0 <= merge_similarity(0.5, 0.5, lo, &cfg).0);
        }

        #[test]
        fn name_similarity_is_symmetric(a in "[a-zA-Z_]{0,12}", b in "[a-zA-Z_]{0,12}") {
            prop_assert_eq!(levenshtein_similarity(&a, &b), levenshtein_similarity(&b, &a));
        }
    }
}
