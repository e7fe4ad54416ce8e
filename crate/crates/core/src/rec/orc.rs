//! Ordered random coding: a fixed budget of `N` candidates.

use crate::distributions::{kl_bits, RecTask};
use crate::error::{Error, Result};
use crate::partition::{BinIndex, GridPartition};
use crate::streams::{open_unit_f64, private_rng, sample_in_cell, ArrivalMode, ArrivalProcess, MAX_LOCAL_INDEX};

use super::{check_shapes, heuristic_kl_from_axes, CodePoint, Counters, EncodeReport, Seeds};

fn check_budget(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > MAX_LOCAL_INDEX {
        return Err(Error::IndexOutOfRange(n));
    }
    Ok(())
}

/// ORC against the whole prior: keep the candidate minimizing `t·p/q` among
/// `n` candidates.
pub fn encode_orc(task: &RecTask, n: u64, seeds: Seeds) -> Result<EncodeReport> {
    check_budget(n)?;
    let part = GridPartition::trivial(task.prior());
    let cell = vec![0usize; task.dim()];
    let mut arrivals = ArrivalProcess::new(ArrivalMode::Orc { n }, seeds.private);
    let mut best: Option<(u64, f64, Vec<f64>)> = None;
    for i in 1..=n {
        let t = arrivals.next_arrival()?;
        let z = sample_in_cell(task.prior(), &part, BinIndex(0), &cell, i, seeds.shared);
        let tau = t * libm::exp2(-task.log2_ratio_unchecked(&z));
        if best.as_ref().is_none_or(|b| tau < b.1) {
            best = Some((i, tau, z));
        }
    }
    let (i, tau, z) = best.expect("n >= 1");
    let kl = kl_bits(task);
    Ok(EncodeReport {
        code: CodePoint {
            bin: BinIndex(0),
            local_index: i,
        },
        sample: z,
        steps: n,
        tau_star: tau,
        kl_bits_used: kl,
        heuristic_kl_bits: kl,
        censored: false,
    })
}

/// Space-partitioned ORC with `π(j) = Q(B_j)`: each candidate's bin is the
/// bin of a fresh draw from `Q`, and scores carry the factor `J·Q(B_j)`.
pub fn encode_sp_orc(task: &RecTask, part: &GridPartition, n: u64, seeds: Seeds) -> Result<EncodeReport> {
    check_shapes(task, part)?;
    check_budget(n)?;
    let masses = part.target_interval_masses(task);
    // J_d·Q_d(k) per axis; the bin weight J·Q(B_j) is their product
    let scaled: Vec<Vec<f64>> = masses
        .iter()
        .zip(part.counts())
        .map(|(m, &c)| m.iter().map(|&x| x * c as f64).collect())
        .collect();

    let mut arrivals = ArrivalProcess::new(ArrivalMode::Orc { n }, seeds.private);
    let mut proposals = private_rng(seeds.private, 1);
    let mut counters = Counters::new(part.total_bins());
    let q_dims = task.target().dims();
    let mut z_q = vec![0.0; task.dim()];

    struct Best {
        bin: BinIndex,
        local: u64,
        tau: f64,
        z: Vec<f64>,
    }
    let mut best: Option<Best> = None;
    for _ in 0..n {
        let t = arrivals.next_arrival()?;
        for (zd, q) in z_q.iter_mut().zip(q_dims) {
            *zd = q.quantile_unchecked(open_unit_f64(&mut proposals));
        }
        let ks = part.locate_intervals(&z_q)?;
        let j = part.compose(&ks);
        let local = counters.bump(j);
        let z = sample_in_cell(task.prior(), part, j, &ks, local, seeds.shared);
        let w: f64 = ks.iter().zip(&scaled).map(|(&k, s)| s[k]).product();
        let tau = w * (t * libm::exp2(-task.log2_ratio_unchecked(&z)));
        if best.as_ref().is_none_or(|b| tau < b.tau) {
            best = Some(Best { bin: j, local, tau, z });
        }
    }
    let best = best.expect("n >= 1");
    let log2_pi: Vec<Vec<f64>> = masses.iter().map(|m| m.iter().map(|x| x.log2()).collect()).collect();
    let kl = kl_bits(task);
    Ok(EncodeReport {
        code: CodePoint {
            bin: best.bin,
            local_index: best.local,
        },
        sample: best.z,
        steps: n,
        tau_star: best.tau,
        kl_bits_used: kl,
        heuristic_kl_bits: heuristic_kl_from_axes(kl, &masses, &log2_pi, part.log2_total()),
        censored: false,
    })
}
