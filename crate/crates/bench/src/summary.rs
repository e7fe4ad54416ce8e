//! Per-bucket aggregates (mean and interquartile range) of sweep records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sweep::{Algorithm, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketBy {
    /// `⌊D∞⌋` of the task, in bits.
    DinfBits,
    /// `⌊KL⌋` of the task, in bits.
    KlBits,
    /// `⌊Σ I_d⌋` of the task, in bits.
    MiBits,
    /// Candidate budget.
    NCandidates,
}

impl BucketBy {
    fn key(self, r: &RunRecord) -> i64 {
        match self {
            BucketBy::DinfBits => r.dinf_bits.floor() as i64,
            BucketBy::KlBits => r.kl_bits.floor() as i64,
            BucketBy::MiBits => r.mi_bits.floor() as i64,
            BucketBy::NCandidates => r.n_candidates.unwrap_or(0) as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q25: quantile_sorted(&v, 0.25),
            q75: quantile_sorted(&v, 0.75),
        })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub algorithm: Algorithm,
    pub bucket_by: BucketBy,
    pub bucket: i64,
    pub records: usize,
    pub tasks: usize,
    pub censored: usize,
    pub steps: Spread,
    pub code_bits: Option<Spread>,
    pub mmd: Option<Spread>,
}

pub fn summarize(records: &[RunRecord], by: BucketBy) -> Vec<BucketSummary> {
    let mut groups: BTreeMap<(Algorithm, i64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.algorithm, by.key(r))).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((algorithm, bucket), rs)| {
            let steps: Vec<f64> = rs.iter().map(|r| r.steps as f64).collect();
            let bits: Vec<f64> = rs.iter().filter_map(|r| r.code_bits).collect();
            let mmd: Vec<f64> = rs.iter().filter_map(|r| r.mmd).collect();
            let mut task_ids: Vec<u64> = rs.iter().map(|r| r.task_id).collect();
            task_ids.dedup();
            task_ids.sort_unstable();
            task_ids.dedup();
            BucketSummary {
                algorithm,
                bucket_by: by,
                bucket,
                records: rs.len(),
                tasks: task_ids.len(),
                censored: rs.iter().filter(|r| r.censored).count(),
                steps: Spread::of(&steps).expect("non-empty group"),
                code_bits: Spread::of(&bits),
                mmd: Spread::of(&mmd),
            }
        })
        .collect()
}
