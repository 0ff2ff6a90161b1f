//! Grid sweeps over one data property, in both pipeline modes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturb::{
    inject_missing, make_overlap_pair, restrict_truth, subsample, OverlapOptions,
};
use super::synth::{synth_table, SynthConfig};
use super::{run_on_tables, HarnessError, Mode, PipelineConfig, PreparedTable, Result};
use crate::hashing::mix64;
use crate::matching::GroundTruth;
use crate::tabular::TableData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    MissingRate,
    /// Total cells per table.
    DataSize,
    OverlapColumn,
    OverlapRow,
}

impl Property {
    pub fn as_str(self) -> &'static str {
        match self {
            Property::MissingRate => "missing_rate",
            Property::DataSize => "data_size",
            Property::OverlapColumn => "overlap_column",
            Property::OverlapRow => "overlap_row",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub property: Property,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub modes: Vec<Mode>,
    /// Base table every variant is carved from.
    pub base: SynthConfig,
    /// Overlaps used when the swept property is not an overlap.
    pub column_overlap: f64,
    pub row_overlap: f64,
    pub overlap: OverlapOptions,
    pub importance_bias: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            property: Property::MissingRate,
            grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            replicates: 3,
            base_seed: 0,
            modes: vec![Mode::Proposed, Mode::Baseline],
            base: SynthConfig::default(),
            column_overlap: 1.0,
            row_overlap: 1.0,
            overlap: OverlapOptions {
                rename_noise: true,
                ..Default::default()
            },
            importance_bias: 0.7,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.grid.is_empty() || self.replicates == 0 || self.modes.is_empty() {
            return bad("grid, replicates and modes must be non-empty".into());
        }
        for &v in &self.grid {
            let ok = match self.property {
                Property::DataSize => v >= 1.0 && v.fract() == 0.0,
                _ => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return bad(format!(
                    "grid value {v} invalid for {}",
                    self.property.as_str()
                ));
            }
        }
        Ok(())
    }

    fn variant_seed(&self, point: usize, replicate: usize) -> u64 {
        mix64(self.base_seed ^ mix64((point as u64) << 32 | replicate as u64))
    }

    /// The table pair for one grid point and replicate.
    pub fn variant(
        &self,
        base: &TableData,
        value: f64,
        seed: u64,
    ) -> Result<(TableData, TableData, GroundTruth)> {
        let (col, row) = match self.property {
            Property::OverlapColumn => (value, self.row_overlap),
            Property::OverlapRow => (self.column_overlap, value),
            _ => (self.column_overlap, self.row_overlap),
        };
        let pair = make_overlap_pair(base, col, row, &self.overlap, seed)?;
        match self.property {
            Property::MissingRate => {
                let a = inject_missing(&pair.a, value, self.importance_bias, mix64(seed ^ 1))?;
                let b = inject_missing(&pair.b, value, self.importance_bias, mix64(seed ^ 2))?;
                Ok((a, b, pair.truth))
            }
            Property::DataSize => {
                let cells = value as usize;
                let a = subsample(&pair.a, cells, mix64(seed ^ 1))?;
                let b = subsample(&pair.b, cells, mix64(seed ^ 2))?;
                let truth = restrict_truth(&pair.truth, &a, &b);
                Ok((a, b, truth))
            }
            Property::OverlapColumn | Property::OverlapRow => Ok((pair.a, pair.b, pair.truth)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub property: Property,
    pub value: f64,
    pub replicate: usize,
    pub mode: Mode,
    pub sm_f1: f64,
    pub er_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub property: Property,
    pub value: f64,
    pub mode: Mode,
    pub runs: usize,
    pub failures: usize,
    pub sm_f1_mean: f64,
    pub sm_f1_std: f64,
    pub er_f1_mean: f64,
    pub er_f1_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

/// Mean and sample standard deviation over finite values.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl SweepResult {
    /// Summary row for one grid value and mode.
    pub fn point(&self, value: f64, mode: Mode) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.value == value && s.mode == mode)
    }

    pub fn write_rows<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every grid point × replicate × mode. Both modes see the same table
/// pair. Failed runs become NaN rows; rows come back in grid order.
pub fn sweep(spec: &SweepSpec, base_cfg: &PipelineConfig) -> Result<SweepResult> {
    spec.validate()?;
    let base = synth_table(&SynthConfig {
        seed: spec.base_seed,
        ..spec.base.clone()
    })?;
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|p| (0..spec.replicates).map(move |r| (p, r)))
        .collect();
    let per_job: Vec<Vec<SweepRow>> =
        jobs.par_iter()
            .map(|&(p, r)| {
                let value = spec.grid[p];
                let seed = spec.variant_seed(p, r);
                let variant = spec.variant(&base, value, seed);
                spec.modes
                    .iter()
                    .map(|&mode| {
                        let outcome = variant.as_ref().map_err(|e| e.to_string()).and_then(
                            |(a, b, truth)| {
                                let cfg = PipelineConfig {
                                    mode,
                                    seed,
                                    out_dir: None,
                                    ..base_cfg.clone()
                                };
                                let (a, b) = (
                                    PreparedTable::from(a.clone()),
                                    PreparedTable::from(b.clone()),
                                );
                                run_on_tables(&a, &b, truth, &cfg, None).map_err(|e| e.to_string())
                            },
                        );
                        let (sm_f1, er_f1) = match outcome {
                            Ok(out) => (out.sm.f1, out.er.f1),
                            Err(e) => {
                                log::warn!(
                                    "{} = {value}, replicate {r}, {}: {e}",
                                    spec.property.as_str(),
                                    mode.as_str()
                                );
                                (f64::NAN, f64::NAN)
                            }
                        };
                        SweepRow {
                            property: spec.property,
                            value,
                            replicate: r,
                            mode,
                            sm_f1,
                            er_f1,
                        }
                    })
                    .collect()
            })
            .collect();
    let rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for &value in &spec.grid {
        for &mode in &spec.modes {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && r.mode == mode)
                .collect();
            let sm: Vec<f64> = sel.iter().map(|r| r.sm_f1).collect();
            let er: Vec<f64> = sel.iter().map(|r| r.er_f1).collect();
            let (sm_f1_mean, sm_f1_std) = mean_std(&sm);
            let (er_f1_mean, er_f1_std) = mean_std(&er);
            summary.push(SummaryRow {
                property: spec.property,
                value,
                mode,
                runs: sel.len(),
                failures: sel.iter().filter(|r| r.sm_f1.is_nan()).count(),
                sm_f1_mean,
                sm_f1_std,
                er_f1_mean,
                er_f1_std,
            });
        }
    }
    Ok(SweepResult { rows, summary })
}
