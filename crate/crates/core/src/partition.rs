//! Axis-aligned grid partitions with equal prior mass per bin.

use serde::{Deserialize, Serialize};

use crate::distributions::{ln_sup_ratio_on_interval, Dim1Law, Extended, FactorizedDistribution, RecTask};
use crate::error::{Error, Result};

/// Flat index of a grid cell, dimension 1 most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinIndex(pub u64);

/// Per-dimension equal-mass intervals. Boundaries include the outer support
/// endpoints, so dimension `d` has `counts[d] + 1` boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    counts: Vec<u32>,
    boundaries: Vec<Vec<f64>>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct PartitionJson {
    counts: Vec<u32>,
    boundaries: Vec<Vec<f64>>,
}

/// Doubling allocation of interval counts: repeatedly double the axis with
/// the largest remaining information, charging one bit to that axis and to
/// the budget, until the budget is spent or no axis has information left.
pub fn allocate_intervals(dim_mi_bits: &[f64], kl_budget_bits: u32) -> Result<Vec<u32>> {
    if dim_mi_bits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut working: Vec<f64> = dim_mi_bits
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { v.max(0.0) })
        .collect();
    let mut counts = vec![1u32; working.len()];
    let mut budget = kl_budget_bits;
    while budget > 0 {
        // lowest index wins ties
        let mut best = 0;
        for d in 1..working.len() {
            if working[d] > working[best] {
                best = d;
            }
        }
        if working[best] <= 0.0 {
            break;
        }
        counts[best] = counts[best]
            .checked_mul(2)
            .filter(|&c| c <= 1 << 30)
            .ok_or_else(|| Error::InvalidPartition("per-axis interval count overflow".into()))?;
        working[best] -= 1.0;
        budget -= 1;
    }
    Ok(counts)
}

/// Boundaries at the prior quantiles `i / J^[d]`.
pub fn build_partition(prior: &FactorizedDistribution, per_dim_counts: &[u32]) -> Result<GridPartition> {
    if per_dim_counts.len() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            got: per_dim_counts.len(),
        });
    }
    let boundaries = prior
        .dims()
        .iter()
        .zip(per_dim_counts)
        .map(|(law, &count)| axis_boundaries(law, count))
        .collect::<Result<Vec<_>>>()?;
    GridPartition::from_parts(per_dim_counts.to_vec(), boundaries)
}

fn axis_boundaries(law: &Dim1Law, count: u32) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidPartition("interval counts must be >= 1".into()));
    }
    let (lo, hi) = law.support();
    let n = count as u64;
    let mut b = Vec::with_capacity(count as usize + 1);
    b.push(lo);
    for i in 1..n {
        // stay on the side of the median where the probability is small
        let z = if 2 * i <= n {
            law.quantile_unchecked(i as f64 / n as f64)
        } else {
            law.inverse_sf((n - i) as f64 / n as f64)
        };
        b.push(z);
    }
    b.push(hi);
    Ok(b)
}

impl GridPartition {
    fn from_parts(counts: Vec<u32>, boundaries: Vec<Vec<f64>>) -> Result<Self> {
        let mut total: u64 = 1;
        for (d, (&c, b)) in counts.iter().zip(&boundaries).enumerate() {
            if c == 0 {
                return Err(Error::InvalidPartition("interval counts must be >= 1".into()));
            }
            if b.len() != c as usize + 1 {
                return Err(Error::InvalidPartition(format!(
                    "dimension {d}: expected {} boundaries, got {}",
                    c + 1,
                    b.len()
                )));
            }
            if b.windows(2).any(|w| w[0].is_nan() || w[1].is_nan() || w[0] >= w[1]) {
                return Err(Error::InvalidPartition(format!(
                    "dimension {d}: boundaries not strictly increasing"
                )));
            }
            total = total
                .checked_mul(c as u64)
                .ok_or_else(|| Error::InvalidPartition("total bin count overflows u64".into()))?;
        }
        Ok(Self {
            counts,
            boundaries,
            total,
        })
    }

    /// The single-bin partition covering the whole prior support.
    pub fn trivial(prior: &FactorizedDistribution) -> Self {
        build_partition(prior, &vec![1; prior.dim()]).expect("single-interval partition is valid")
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total_bins(&self) -> u64 {
        self.total
    }

    pub fn log2_total(&self) -> f64 {
        self.counts.iter().map(|&c| (c as f64).log2()).sum()
    }

    /// All boundaries of dimension `d`, including the support endpoints.
    pub fn boundaries(&self, d: usize) -> &[f64] {
        &self.boundaries[d]
    }

    pub fn interval(&self, d: usize, k: usize) -> (f64, f64) {
        (self.boundaries[d][k], self.boundaries[d][k + 1])
    }

    pub fn compose(&self, ks: &[usize]) -> BinIndex {
        let mut j = 0u64;
        for (&k, &c) in ks.iter().zip(&self.counts) {
            j = j * c as u64 + k as u64;
        }
        BinIndex(j)
    }

    pub fn decompose(&self, j: BinIndex) -> Result<Vec<usize>> {
        self.check_bin(j)?;
        let mut ks = vec![0usize; self.counts.len()];
        let mut rest = j.0;
        for d in (0..self.counts.len()).rev() {
            let c = self.counts[d] as u64;
            ks[d] = (rest % c) as usize;
            rest /= c;
        }
        Ok(ks)
    }

    pub fn check_bin(&self, j: BinIndex) -> Result<()> {
        if j.0 >= self.total {
            return Err(Error::BinOutOfRange {
                bin: j.0,
                total: self.total,
            });
        }
        Ok(())
    }

    /// Interval index along each axis; interior boundary points belong to
    /// the interval on their right.
    pub fn locate_intervals(&self, z: &[f64]) -> Result<Vec<usize>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        z.iter()
            .zip(&self.boundaries)
            .enumerate()
            .map(|(d, (&zd, b))| {
                let last = b.len() - 1;
                if !(zd >= b[0] && zd <= b[last]) {
                    return Err(Error::OutsideSupport { dim: d });
                }
                Ok(b[1..last].partition_point(|&x| x <= zd))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let interior = self.boundaries.iter().map(|b| b[1..b.len() - 1].to_vec()).collect();
        serde_json::to_string(&PartitionJson {
            counts: self.counts.clone(),
            boundaries: interior,
        })
        .expect("partition serializes")
    }

    /// Restores a partition; the outer endpoints come from `prior`'s support.
    pub fn from_json(prior: &FactorizedDistribution, s: &str) -> Result<Self> {
        let raw: PartitionJson = serde_json::from_str(s)?;
        if raw.counts.len() != prior.dim() || raw.boundaries.len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: raw.counts.len(),
            });
        }
        let boundaries = raw
            .boundaries
            .into_iter()
            .zip(prior.dims())
            .map(|(interior, law)| {
                let (lo, hi) = law.support();
                let mut b = Vec::with_capacity(interior.len() + 2);
                b.push(lo);
                b.extend(interior);
                b.push(hi);
                b
            })
            .collect();
        GridPartition::from_parts(raw.counts, boundaries)
    }

    /// Target mass of every interval, per dimension.
    pub fn target_interval_masses(&self, task: &RecTask) -> Vec<Vec<f64>> {
        task.target()
            .dims()
            .iter()
            .enumerate()
            .map(|(d, q)| {
                (0..self.counts[d] as usize)
                    .map(|k| {
                        let (a, b) = self.interval(d, k);
                        q.interval_mass(a, b)
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn locate_bin(part: &GridPartition, z: &[f64]) -> Result<BinIndex> {
    let ks = part.locate_intervals(z)?;
    Ok(part.compose(&ks))
}

/// `Q(B_j)` as a product of per-axis CDF differences.
pub fn bin_target_mass(task: &RecTask, part: &GridPartition, j: BinIndex) -> Result<f64> {
    let ks = part.decompose(j)?;
    Ok(task
        .target()
        .dims()
        .iter()
        .zip(ks)
        .enumerate()
        .map(|(d, (q, k))| {
            let (a, b) = part.interval(d, k);
            q.interval_mass(a, b)
        })
        .product())
}

/// Exact supremum of `q/p` over `[a, b]`.
pub fn sup_ratio_on_interval(q: &Dim1Law, p: &Dim1Law, a: f64, b: f64) -> Extended {
    match ln_sup_ratio_on_interval(q, p, a, b) {
        Extended::Finite(v) => Extended::Finite(libm::exp(v)),
        Extended::Unbounded => Extended::Unbounded,
    }
}
