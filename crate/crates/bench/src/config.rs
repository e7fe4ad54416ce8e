//! Sweep configuration, read from JSON. Every field has a default.

use serde::{Deserialize, Serialize};

/// Scores driving the interval allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    /// The task's own per-axis KL, budget `⌊KL⌋`.
    #[default]
    DimKl,
    /// Per-axis mutual information, budget `⌊KL⌋`.
    Mi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub tasks: usize,
    pub dim: usize,
    /// Encodes per task (PFR sweep) or per (task, N, algorithm) cell (ORC sweep).
    pub repeats: usize,
    pub step_cap: u64,
    pub allocation: Allocation,
    /// Candidate budgets for the ORC sweep.
    pub sample_sizes: Vec<u64>,
    /// Direct target samples used as the MMD reference in the ORC sweep.
    pub reference_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tasks: 200,
            dim: 5,
            repeats: 50,
            step_cap: 1 << 24,
            allocation: Allocation::DimKl,
            sample_sizes: (1..=10).map(|k| 1u64 << k).collect(),
            reference_samples: 500,
        }
    }
}

impl SweepConfig {
    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
