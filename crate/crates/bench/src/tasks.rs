//! Toy Gaussian tasks: `x ~ N(0, σ²)`, target `N(x, ρ²)`, prior `N(0, σ² + ρ²)`
//! per axis, with `σ, ρ ~ U(0, 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use sprec::distributions::{dimwise_kl_bits, kl_bits, renyi_inf_bits};
use sprec::{allocate_intervals, Dim1Law, RecTask};

use crate::config::Allocation;
use crate::seeds::{derive_seed, TASK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskSpec {
    pub id: u64,
    pub seed: u64,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    /// Realized source sample.
    pub x: Vec<f64>,
}

impl ToyTaskSpec {
    /// Draw one task from its own seed.
    pub fn generate(id: u64, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma: Vec<f64> = (0..dim).map(|_| rng.sample(Open01)).collect();
        let rho: Vec<f64> = (0..dim).map(|_| rng.sample(Open01)).collect();
        let x = sigma.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        Self {
            id,
            seed,
            sigma,
            rho,
            x,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn task(&self) -> RecTask {
        RecTask::from_pairs(self.sigma.iter().zip(&self.rho).zip(&self.x).map(|((&s, &r), &x)| {
            (
                Dim1Law::gaussian(x, r).expect("positive scale"),
                Dim1Law::gaussian(0.0, (s * s + r * r).sqrt()).expect("positive scale"),
            )
        }))
        .expect("prior strictly wider than target")
    }

    /// Per-axis mutual information `½·log2((σ² + ρ²) / ρ²)`.
    pub fn mi_bits(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(&self.rho)
            .map(|(s, r)| 0.5 * ((s * s + r * r) / (r * r)).log2())
            .collect()
    }

    /// Interval counts for the partition, with total budget `⌊KL⌋`. Axes are
    /// ranked by their own KL, or by `I_d` under [`Allocation::Mi`]; the
    /// latter can leave budget unspent once every `I_d` is used up.
    pub fn counts(&self, rule: Allocation) -> Vec<u32> {
        let t = self.task();
        let scores = match rule {
            Allocation::DimKl => dimwise_kl_bits(&t),
            Allocation::Mi => self.mi_bits(),
        };
        allocate_intervals(&scores, kl_bits(&t).max(0.0).floor() as u32).expect("finite scores")
    }

    pub fn kl_bits(&self) -> f64 {
        kl_bits(&self.task())
    }

    pub fn dinf_bits(&self) -> f64 {
        renyi_inf_bits(&self.task()).finite().unwrap_or(f64::INFINITY)
    }
}

/// `count` tasks of dimension `dim`, each with a seed derived from `seed`.
pub fn gen_tasks(count: usize, dim: usize, seed: u64) -> Vec<ToyTaskSpec> {
    (0..count as u64)
        .map(|i| ToyTaskSpec::generate(i, dim, derive_seed(seed, &[TASK, i])))
        .collect()
}
