//! Property-controlled variants of a table: injected missingness, row
//! subsampling, and overlapping table pairs with known correspondences.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::noisy_name;
use super::HarnessError;
use crate::graph::{column_importance, ImportanceConfig};
use crate::matching::GroundTruth;
use crate::tabular::{profile_table, TableData};

/// Column importances under the default importance weights.
pub fn default_importances(t: &TableData) -> Vec<f64> {
    let cfg = ImportanceConfig::default();
    profile_table(t)
        .iter()
        .zip(t.columns())
        .map(|(p, m)| column_importance(p, m, &cfg))
        .collect()
}

/// Blanks cells until the table's missing rate reaches `target_rate`,
/// preferring low-importance columns as `importance_bias` grows.
pub fn inject_missing(
    t: &TableData,
    target_rate: f64,
    importance_bias: f64,
    seed: u64,
) -> Result<TableData, HarnessError> {
    inject_missing_weighted(
        t,
        target_rate,
        importance_bias,
        seed,
        &default_importances(t),
    )
}

/// [`inject_missing`] with explicit per-column importances in `[0, 1]`.
///
/// The number of new blanks is `round(target · n_cells) − current`. Cells are
/// drawn without replacement by weighted reservoir keys `ln(u) / w`, with the
/// column weight `w = (1 − bias) + bias · (1 − importance)`.
pub fn inject_missing_weighted(
    t: &TableData,
    target_rate: f64,
    importance_bias: f64,
    seed: u64,
    importances: &[f64],
) -> Result<TableData, HarnessError> {
    if !(0.0..=1.0).contains(&target_rate) || !(0.0..=1.0).contains(&importance_bias) {
        return Err(HarnessError::InvalidConfig(format!(
            "rate {target_rate} and bias {importance_bias} must lie in [0, 1]"
        )));
    }
    assert_eq!(importances.len(), t.n_cols(), "one importance per column");
    let n_cells = t.n_cells();
    let current = t.missing_count();
    let target = (target_rate * n_cells as f64).round() as usize;
    if target < current {
        return Err(HarnessError::RateBelowCurrent {
            target: target_rate,
            current: t.missing_rate(),
        });
    }
    let need = target - current;
    if need == 0 {
        return Ok(t.clone());
    }
    let weights: Vec<f64> = importances
        .iter()
        .map(|w| (1.0 - importance_bias) + importance_bias * (1.0 - w.clamp(0.0, 1.0)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n_cells - current);
    for r in 0..t.n_rows() {
        for (c, &w) in weights.iter().enumerate() {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            if t.cell(r, c).is_some() {
                let key = if w > 0.0 {
                    u.ln() / w
                } else {
                    f64::NEG_INFINITY
                };
                keyed.push((key, r, c));
            }
        }
    }
    keyed.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
    });
    let mut out = t.clone();
    for &(_, r, c) in keyed.iter().take(need) {
        out.set_cell(r, c, None);
    }
    Ok(out)
}

/// Keeps `⌈target_cells / n_cols⌉` rows drawn uniformly without replacement,
/// in their original order.
pub fn subsample(t: &TableData, target_cells: usize, seed: u64) -> Result<TableData, HarnessError> {
    if t.n_cols() == 0 || target_cells < t.n_cols() {
        return Err(HarnessError::TooSmall {
            target_cells,
            n_cols: t.n_cols(),
        });
    }
    if target_cells > t.n_cells() {
        return Err(HarnessError::InvalidConfig(format!(
            "target of {target_cells} cells exceeds the table's {}",
            t.n_cells()
        )));
    }
    let keep = target_cells.div_ceil(t.n_cols()).min(t.n_rows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, t.n_rows(), keep).into_vec();
    rows.sort_unstable();
    Ok(t.select_rows(&rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlapOptions {
    /// Rename shared columns in the second table with synonyms or abbreviations.
    pub rename_noise: bool,
    /// Shuffle the second table's rows (its columns are always shuffled).
    pub shuffle_rows: bool,
    /// Smallest acceptable column count for the smaller table.
    pub min_columns: usize,
    /// Smallest acceptable row count for the smaller table.
    pub min_rows: usize,
    pub table_ids: [String; 2],
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self {
            rename_noise: false,
            shuffle_rows: true,
            min_columns: 2,
            min_rows: 2,
            table_ids: ["A".into(), "B".into()],
        }
    }
}

/// How one axis (columns or rows) of the base is split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisSplit {
    pub shared: usize,
    /// Items given to each table beyond the shared ones.
    pub exclusive: usize,
}

impl AxisSplit {
    pub fn per_table(&self) -> usize {
        self.shared + self.exclusive
    }

    pub fn rate(&self) -> f64 {
        self.shared as f64 / self.per_table() as f64
    }
}

/// Largest split of `total` items whose overlap `shared / (shared + exclusive)`
/// is closest to `target`. Both tables get the same size.
pub fn plan_axis(total: usize, target: f64) -> Option<AxisSplit> {
    let mut best: Option<(f64, AxisSplit)> = None;
    for n in 1..=total {
        let exact = target * n as f64;
        for shared in [exact.floor() as usize, exact.ceil() as usize] {
            if shared > n || (target > 0.0 && shared == 0) {
                continue;
            }
            let exclusive = n - shared;
            if shared + 2 * exclusive > total {
                continue;
            }
            let split = AxisSplit { shared, exclusive };
            let err = (split.rate() - target).abs();
            let better = match best {
                None => true,
                Some((e, s)) => err < e - 1e-12 || ((err - e).abs() <= 1e-12 && n > s.per_table()),
            };
            if better {
                best = Some((err, split));
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Two tables carved from `base` plus their correspondences.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapPair {
    pub a: TableData,
    pub b: TableData,
    pub truth: GroundTruth,
}

/// Carves two tables from `base` whose column and row overlap rates hit the
/// targets within one item of rounding. The first table keeps base order; the
/// second is shuffled. Both are re-keyed by position so they survive a CSV
/// round trip.
pub fn make_overlap_pair(
    base: &TableData,
    target_col_overlap: f64,
    target_row_overlap: f64,
    opts: &OverlapOptions,
    seed: u64,
) -> Result<OverlapPair, HarnessError> {
    for t in [target_col_overlap, target_row_overlap] {
        if !(0.0..=1.0).contains(&t) {
            return Err(HarnessError::InvalidConfig(format!(
                "overlap target {t} outside [0, 1]"
            )));
        }
    }
    let cols = plan_axis(base.n_cols(), target_col_overlap);
    let rows = plan_axis(base.n_rows(), target_row_overlap);
    let ok = |s: Option<AxisSplit>, target: f64, min: usize| {
        s.filter(|s| {
            s.per_table() >= min && (s.rate() - target).abs() <= 1.0 / s.per_table() as f64
        })
    };
    let (Some(cols), Some(rows)) = (
        ok(cols, target_col_overlap, opts.min_columns),
        ok(rows, target_row_overlap, opts.min_rows),
    ) else {
        return Err(HarnessError::InfeasibleOverlap {
            column: cols.map_or(0.0, |s| s.rate()),
            row: rows.map_or(0.0, |s| s.rate()),
        });
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let carve = |split: AxisSplit, total: usize, rng: &mut ChaCha8Rng| {
        let mut perm: Vec<usize> = (0..total).collect();
        perm.shuffle(rng);
        let (s, e) = (split.shared, split.exclusive);
        let shared = perm[..s].to_vec();
        let mut a: Vec<usize> = perm[..s + e].to_vec();
        let mut b: Vec<usize> = perm[..s]
            .iter()
            .chain(&perm[s + e..s + 2 * e])
            .copied()
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        (shared, a, b)
    };
    let (shared_cols, a_cols, mut b_cols) = carve(cols, base.n_cols(), &mut rng);
    let (shared_rows, a_rows, mut b_rows) = carve(rows, base.n_rows(), &mut rng);
    b_cols.shuffle(&mut rng);
    if opts.shuffle_rows {
        b_rows.shuffle(&mut rng);
    }

    let mut a = base
        .select_rows(&a_rows)
        .select_columns(&a_cols)
        .with_table_id(opts.table_ids[0].clone())?;
    let mut b = base
        .select_rows(&b_rows)
        .select_columns(&b_cols)
        .with_table_id(opts.table_ids[1].clone())?;
    let keys_a = a.rekey_rows();
    let keys_b = b.rekey_rows();

    let shared_col_set: HashSet<usize> = shared_cols.iter().copied().collect();
    let mut taken: HashSet<String> = b.columns().iter().map(|c| c.name.to_lowercase()).collect();
    let mut truth = GroundTruth::default();
    for (pos, &base_col) in b_cols.iter().enumerate() {
        if !shared_col_set.contains(&base_col) {
            continue;
        }
        let original = base.columns()[base_col].name.clone();
        let mut name = original.clone();
        if opts.rename_noise {
            let candidate = noisy_name(&original, &mut rng);
            let mut unique = candidate.clone();
            let mut k = 2;
            while taken.contains(&unique.to_lowercase()) && unique != original {
                unique = format!("{candidate}_{k}");
                k += 1;
            }
            taken.remove(&original.to_lowercase());
            taken.insert(unique.to_lowercase());
            name = unique;
            b.columns_mut()[pos].name = name.clone();
        }
        truth.column_pairs.insert((original, name));
    }
    for &r in &shared_rows {
        let key = &base.row_keys()[r];
        truth
            .row_pairs
            .insert((keys_a[key].clone(), keys_b[key].clone()));
    }
    Ok(OverlapPair { a, b, truth })
}

/// Drops truth pairs whose column or row no longer exists in either table.
pub fn restrict_truth(truth: &GroundTruth, a: &TableData, b: &TableData) -> GroundTruth {
    let names =
        |t: &TableData| -> HashSet<String> { t.columns().iter().map(|c| c.name.clone()).collect() };
    let keys = |t: &TableData| -> HashSet<String> { t.row_keys().iter().cloned().collect() };
    let (ca, cb, ra, rb) = (names(a), names(b), keys(a), keys(b));
    GroundTruth {
        column_pairs: truth
            .column_pairs
            .iter()
            .filter(|(x, y)| ca.contains(x) && cb.contains(y))
            .cloned()
            .collect(),
        row_pairs: truth
            .row_pairs
            .iter()
            .filter(|(x, y)| ra.contains(x) && rb.contains(y))
            .cloned()
            .collect(),
    }
}
