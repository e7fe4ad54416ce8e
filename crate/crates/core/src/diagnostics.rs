//! Coding-cost and bias diagnostics: ε-cost, codelength bound, TV bounds for
//! ORC, MMD, and a few goodness-of-fit statistics used by the tests.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::distributions::{kl_bits, Dim1Law, FactorizedDistribution, RecTask};
use crate::error::{Error, Result};
use crate::streams::{open_unit_f64, private_rng};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_mc: usize,
    pub seed: u64,
}

/// One line of diagnostic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_mc: Option<usize>,
    pub seed: Option<u64>,
}

impl DiagnosticRecord {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: None,
            n_mc: None,
            seed: None,
        }
    }

    pub fn estimate(name: impl Into<String>, est: McEstimate) -> Self {
        Self {
            name: name.into(),
            value: est.value,
            stderr: Some(est.stderr),
            n_mc: Some(est.n_mc),
            seed: Some(est.seed),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kl_bits: f64,
    #[serde(rename = "log2_J")]
    pub log2_j: f64,
    pub epsilon_hat: f64,
    pub codelength_bound_bits: f64,
    /// Closed-form cap on ε where one is known.
    pub epsilon_gaussian_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBounds {
    pub upper_raw: f64,
    pub lower_raw: f64,
    pub upper: f64,
    pub lower: f64,
    /// `P(log2 r > KL + t/2)` under `Q`.
    pub upper_tail: f64,
    /// `P(log2 r <= KL + t/2)` under `Q`.
    pub lower_tail: f64,
    pub n_mc: usize,
    pub seed: u64,
}

/// Draw `n` points from a factorized distribution by per-axis inversion.
pub fn sample_factorized(dist: &FactorizedDistribution, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = private_rng(seed, 11);
    (0..n).map(|_| draw(dist, &mut rng)).collect()
}

fn draw(dist: &FactorizedDistribution, rng: &mut impl RngCore) -> Vec<f64> {
    dist.dims()
        .iter()
        .map(|law| law.quantile_unchecked(open_unit_f64(rng)))
        .collect()
}

/// `log2 q(z)/p(z)` for `n_mc` draws `z ~ Q`, from a fixed stream so that
/// calls with the same seed see the same draws.
fn log_ratio_draws(task: &RecTask, n_mc: usize, seed: u64) -> Vec<f64> {
    let mut rng = private_rng(seed, 12);
    (0..n_mc)
        .map(|_| task.log2_ratio_unchecked(&draw(task.target(), &mut rng)))
        .collect()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E_{z~Q}[max(0, log2 J - log2 q(z)/p(z))]`.
pub fn epsilon_cost(task: &RecTask, j: u64, n_mc: usize, seed: u64) -> Result<McEstimate> {
    if j == 0 || n_mc == 0 {
        return Err(Error::EmptyInput);
    }
    let log2_j = (j as f64).log2();
    let eps: Vec<f64> = log_ratio_draws(task, n_mc, seed)
        .into_iter()
        .map(|r| (log2_j - r).max(0.0))
        .collect();
    let (value, stderr) = mean_and_stderr(&eps);
    Ok(McEstimate {
        value,
        stderr,
        n_mc,
        seed,
    })
}

/// `KL + ε + log2(KL - log2 J + ε + 1) + 4`.
pub fn codelength_bound(task: &RecTask, j: u64, epsilon_hat: f64) -> Result<BoundReport> {
    if j == 0 {
        return Err(Error::EmptyInput);
    }
    let kl = kl_bits(task);
    let log2_j = (j as f64).log2();
    let arg = kl - log2_j + epsilon_hat + 1.0;
    if arg.is_nan() || arg <= 0.0 {
        return Err(Error::NonPositiveLogArgument(arg));
    }
    let within_budget = log2_j <= kl;
    let all_uniform = task
        .pairs()
        .all(|pair| matches!(pair, (Dim1Law::Uniform { .. }, Dim1Law::Uniform { .. })));
    let all_narrow_gaussian = task.pairs().all(|pair| match pair {
        (Dim1Law::Gaussian { std: sq, .. }, Dim1Law::Gaussian { std: sp, .. }) => sq <= sp,
        _ => false,
    });
    let epsilon_gaussian_cap = if !within_budget {
        None
    } else if all_uniform {
        Some(0.0)
    } else if all_narrow_gaussian {
        Some((std::f64::consts::LOG2_E / 2.0 * kl).sqrt())
    } else {
        None
    };
    Ok(BoundReport {
        kl_bits: kl,
        log2_j,
        epsilon_hat,
        codelength_bound_bits: kl + epsilon_hat + arg.log2() + 4.0,
        epsilon_gaussian_cap,
    })
}

/// Upper and lower bounds on the TV bias of ORC run with `N = 2^{KL + t}`
/// candidates. `t` may be negative; the upper bound is informative for
/// `t >= 0` and the lower bound for `t < 0`. Tail probabilities are estimated
/// from `n_mc` draws of `Q`.
pub fn tv_bounds(task: &RecTask, t: f64, n_mc: usize, seed: u64) -> Result<TvBounds> {
    if !t.is_finite() {
        return Err(Error::InvalidLaw(format!("t must be finite, got {t}")));
    }
    if n_mc == 0 {
        return Err(Error::EmptyInput);
    }
    let kl = kl_bits(task);
    let draws = log_ratio_draws(task, n_mc, seed);
    let n = n_mc as f64;
    let upper_tail = draws.iter().filter(|&&r| r > kl + t / 2.0).count() as f64 / n;
    // the lower bound is stated for N = 2^{KL - t'}, here t' = -t
    let lower_tail = draws.iter().filter(|&&r| r <= kl + t / 2.0).count() as f64 / n;
    let upper_raw = 4.0 * (libm::exp2(-t / 4.0) + 2.0 * upper_tail.sqrt()).sqrt();
    let lower_raw = 1.0 - libm::exp2(t / 2.0) - lower_tail;
    Ok(TvBounds {
        upper_raw,
        lower_raw,
        upper: upper_raw.clamp(0.0, 1.0),
        lower: lower_raw.clamp(0.0, 1.0),
        upper_tail,
        lower_tail,
        n_mc,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled sample.
    #[default]
    Median,
    Fixed(f64),
}

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = a[0].len();
    for z in a.iter().chain(b) {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
    }
    Ok(d)
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of pairwise distances; for large pools only an evenly strided
/// subset of at most 2000 points is used.
pub fn median_heuristic(points: &[&[f64]]) -> f64 {
    let stride = points.len().div_ceil(2000).max(1);
    let sub: Vec<&[f64]> = points.iter().step_by(stride).copied().collect();
    let mut d2 = Vec::with_capacity(sub.len() * sub.len().saturating_sub(1) / 2);
    for i in 0..sub.len() {
        for j in i + 1..sub.len() {
            d2.push(sq_dist(sub[i], sub[j]));
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    let mid = d2.len() / 2;
    let (_, m, _) = d2.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let h = m.sqrt();
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

fn resolve_bandwidth(a: &[Vec<f64>], b: &[Vec<f64>], bw: Bandwidth) -> f64 {
    match bw {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Median => {
            let pooled: Vec<&[f64]> = a.iter().chain(b).map(|v| v.as_slice()).collect();
            median_heuristic(&pooled)
        }
    }
}

/// Unbiased MMD² with kernel `exp(-|x - y|² / (2h²))`.
pub fn mmd_rbf(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: Bandwidth) -> Result<f64> {
    check_sets(a, b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let h = resolve_bandwidth(a, b, bandwidth);
    let gamma = 1.0 / (2.0 * h * h);
    let k = |x: &[f64], y: &[f64]| (-gamma * sq_dist(x, y)).exp();
    let within = |s: &[Vec<f64>]| {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                acc += k(&s[i], &s[j]);
            }
        }
        2.0 * acc / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a {
        for y in b {
            cross += k(x, y);
        }
    }
    Ok(within(a) + within(b) - 2.0 * cross / (a.len() * b.len()) as f64)
}

/// Per-axis standardization by the target's mean and standard deviation.
pub fn standardize(samples: &[Vec<f64>], target: &FactorizedDistribution) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|z| {
            z.iter()
                .zip(target.dims())
                .map(|(&x, law)| (x - law.mean()) / law.std_dev())
                .collect()
        })
        .collect()
}

/// Permutation test for `MMD² = 0`. Each set is capped at `max_per_set`
/// points (evenly strided). Returns the p-value `(1 + #{perm ≥ obs}) / (1 + n_perm)`.
pub fn mmd_permutation_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    n_perm: usize,
    max_per_set: usize,
    seed: u64,
) -> Result<f64> {
    check_sets(a, b)?;
    let sub = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let stride = s.len().div_ceil(max_per_set.max(2)).max(1);
        s.iter().step_by(stride).cloned().collect()
    };
    let (a, b) = (sub(a), sub(b));
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let h = resolve_bandwidth(&a, &b, Bandwidth::Median);
    let gamma = 1.0 / (2.0 * h * h);
    let pooled: Vec<&[f64]> = a.iter().chain(&b).map(|v| v.as_slice()).collect();
    let n = pooled.len();
    let mut kern = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (-gamma * sq_dist(pooled[i], pooled[j])).exp();
            kern[i * n + j] = v;
            kern[j * n + i] = v;
        }
    }
    let na = a.len();
    let stat = |labels: &[bool]| -> f64 {
        let nb = n - na;
        let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let v = kern[i * n + j];
                match (labels[i], labels[j]) {
                    (true, true) => saa += v,
                    (false, false) => sbb += v,
                    _ => sab += v,
                }
            }
        }
        2.0 * saa / (na * (na - 1)) as f64 + 2.0 * sbb / (nb * (nb - 1)) as f64 - 2.0 * sab / (na * nb) as f64
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let observed = stat(&labels);
    let mut rng = private_rng(seed, 13);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        labels.shuffle(&mut rng);
        if stat(&labels) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (1 + n_perm) as f64)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance. Both inputs must be sorted ascending.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// TV distance between the empirical histogram of `samples` and `law`,
/// using 100 equal-width bins over the law's central 99.9% plus one
/// overflow bin on each side.
pub fn histogram_tv(samples: &[f64], law: &Dim1Law) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    const BINS: usize = 100;
    let lo = law.quantile(0.0005)?;
    let hi = law.quantile(0.9995)?;
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS + 2];
    for &x in samples {
        let slot = if x < lo {
            0
        } else if x >= hi {
            BINS + 1
        } else {
            1 + (((x - lo) / width) as usize).min(BINS - 1)
        };
        counts[slot] += 1;
    }
    let n = samples.len() as f64;
    let edge = |k: usize| if k == BINS { hi } else { lo + k as f64 * width };
    let mut tv = (counts[0] as f64 / n - law.cdf(lo)).abs() + (counts[BINS + 1] as f64 / n - law.sf(hi)).abs();
    for k in 0..BINS {
        let mass = law.interval_mass(edge(k), edge(k + 1));
        tv += (counts[k + 1] as f64 / n - mass).abs();
    }
    Ok(tv / 2.0)
}
