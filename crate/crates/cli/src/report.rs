//! Per-seed traces, seed aggregates and their on-disk forms.

use std::path::Path;

use anyhow::{Context, Result};
use explorecon::stats::ci90;
use serde::{Deserialize, Serialize};

/// One checkpoint row; the CSV column order is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    /// Behaviour policy (greedy on `q`, mixed at α) from the start state.
    pub train_value_exact: f64,
    /// Returned policy with no exploration.
    pub eval_value_beta0: f64,
    /// Returned policy mixed at α.
    pub eval_value_beta_alpha: f64,
    pub q_error: f64,
    pub qalpha_error: Option<f64>,
}

pub const METRICS: [&str; 5] = [
    "train_value_exact",
    "eval_value_beta0",
    "eval_value_beta_alpha",
    "q_error",
    "qalpha_error",
];

impl TraceRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "train_value_exact" => Some(self.train_value_exact),
            "eval_value_beta0" => Some(self.eval_value_beta0),
            "eval_value_beta_alpha" => Some(self.eval_value_beta_alpha),
            "q_error" => Some(self.q_error),
            "qalpha_error" => self.qalpha_error,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// `(β, value)` of the final returned policy for each configured β.
    pub final_eval: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// 90% Student-t half-width; absent with fewer than two seeds.
    pub ci90_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: u64,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub env: String,
    pub algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub seeds: Vec<SeedTrace>,
    pub aggregate: Vec<AggregateRow>,
}

/// Mean and CI per checkpoint and metric. Seeds must share checkpoint steps.
pub fn aggregate(seeds: &[SeedTrace]) -> Result<Vec<AggregateRow>> {
    let Some(first) = seeds.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(first.rows.len());
    for (i, row) in first.rows.iter().enumerate() {
        let mut metrics = Vec::new();
        for name in METRICS {
            let xs: Vec<f64> = seeds
                .iter()
                .map(|s| {
                    let r = s.rows.get(i).filter(|r| r.step == row.step).with_context(|| {
                        format!("seed {} has no checkpoint at step {}", s.seed, row.step)
                    })?;
                    Ok(r.metric(name))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if xs.is_empty() {
                continue;
            }
            let s = ci90(&xs)?;
            metrics.push(MetricSummary {
                metric: name.into(),
                mean: s.mean,
                ci90_half_width: (xs.len() >= 2).then_some(s.half_width),
            });
        }
        out.push(AggregateRow { step: row.step, metrics });
    }
    Ok(out)
}

pub fn write_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

impl RunReport {
    /// Writes `seed_<k>.csv` per seed and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for s in &self.seeds {
            write_csv(&dir.join(format!("seed_{}.csv", s.seed)), &s.rows)?;
        }
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}
