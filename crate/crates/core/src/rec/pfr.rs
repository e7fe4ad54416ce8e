//! Exact samplers: PFR and its space-partitioned variant.

use crate::distributions::{kl_bits, renyi_inf_bits, Extended, RecTask};
use crate::error::{Error, Result};
use crate::partition::{BinIndex, GridPartition};
use crate::streams::{private_rng, sample_in_cell, ArrivalMode, ArrivalProcess, MAX_LOCAL_INDEX};

use super::{
    check_shapes, heuristic_kl_from_axes, log2_sum, AxisCategorical, CodePoint, Counters, EncodeReport, PiChoice, Seeds,
};

/// Greedy Poisson race against the full prior. Stops once no later arrival
/// can beat the current best, i.e. `t / r_max >= τ*`.
pub fn encode_pfr(task: &RecTask, seeds: Seeds, step_cap: Option<u64>) -> Result<EncodeReport> {
    let log2_rmax = match renyi_inf_bits(task) {
        Extended::Finite(v) => v,
        Extended::Unbounded => return Err(Error::InfiniteRatio),
    };
    let inv_rmax = libm::exp2(-log2_rmax);
    let part = GridPartition::trivial(task.prior());
    let cell = vec![0usize; task.dim()];
    let mut arrivals = ArrivalProcess::new(ArrivalMode::Pfr, seeds.private);

    let mut best: Option<(u64, f64, Vec<f64>)> = None;
    let mut tau_star = f64::INFINITY;
    let mut censored = false;
    loop {
        if step_cap.is_some_and(|cap| arrivals.count() >= cap) {
            censored = true;
            break;
        }
        let t = arrivals.next_arrival()?;
        let n = arrivals.count();
        if n > MAX_LOCAL_INDEX {
            return Err(Error::IndexOutOfRange(n));
        }
        let z = sample_in_cell(task.prior(), &part, BinIndex(0), &cell, n, seeds.shared);
        let tau = t * libm::exp2(-task.log2_ratio_unchecked(&z));
        if best.is_none() || tau < tau_star {
            tau_star = tau;
            best = Some((n, tau, z));
        }
        if t * inv_rmax >= tau_star {
            break;
        }
    }
    let (n, tau, z) = best.ok_or(Error::EmptyInput)?;
    let kl = kl_bits(task);
    Ok(EncodeReport {
        code: CodePoint {
            bin: BinIndex(0),
            local_index: n,
        },
        sample: z,
        steps: arrivals.count(),
        tau_star: tau,
        kl_bits_used: kl,
        heuristic_kl_bits: kl,
        censored,
    })
}

/// Exact sampling over a grid partition. Each step draws a bin from
/// `π = ⊗_d π_d`, takes the next sample of the prior restricted to that bin,
/// and scores it.
pub fn encode_sp_pfr(
    task: &RecTask,
    part: &GridPartition,
    pi: PiChoice,
    seeds: Seeds,
    step_cap: Option<u64>,
) -> Result<EncodeReport> {
    let mode = match pi {
        PiChoice::ExactSup => ScoreMode::Omitted,
        PiChoice::TargetMass => ScoreMode::Full,
    };
    run_sp_pfr(task, part, pi, mode, seeds, step_cap, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ScoreMode {
    /// Unnormalized sup weights, normalizer and `J` dropped from the score;
    /// stops at `t >= τ'*`. Only valid for [`PiChoice::ExactSup`].
    Omitted,
    /// Score `J·π(j)·t·p/q`, stop at `t / r'_max >= τ*`.
    Full,
}

#[derive(Debug, Clone)]
#[allow(dead_code)]
pub(crate) struct Candidate {
    pub n: u64,
    pub bin: BinIndex,
    pub local_index: u64,
    pub t: f64,
    pub log2_ratio: f64,
    /// Score as compared inside the loop.
    pub score: f64,
    /// Score in the un-omitted convention.
    pub full_score: f64,
}

struct Axis {
    log2_sup: Vec<f64>,
    log2_pi: Vec<f64>,
    cat: AxisCategorical,
}

fn build_axes(task: &RecTask, part: &GridPartition, pi: PiChoice, masses: &[Vec<f64>]) -> Result<Vec<Axis>> {
    task.pairs()
        .enumerate()
        .map(|(d, (q, p))| {
            let log2_sup = (0..part.counts()[d] as usize)
                .map(|k| {
                    let (a, b) = part.interval(d, k);
                    match crate::distributions::ln_sup_ratio_on_interval(q, p, a, b) {
                        Extended::Finite(v) => Ok(v * std::f64::consts::LOG2_E),
                        Extended::Unbounded => Err(Error::InfiniteRatio),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            let raw: Vec<f64> = match pi {
                PiChoice::ExactSup => log2_sup.clone(),
                PiChoice::TargetMass => masses[d].iter().map(|m| m.log2()).collect(),
            };
            let z = log2_sum(&raw);
            let log2_pi = raw.iter().map(|&w| w - z).collect();
            let cat = AxisCategorical::new(&raw)?;
            Ok(Axis { log2_sup, log2_pi, cat })
        })
        .collect()
}

pub(crate) fn run_sp_pfr(
    task: &RecTask,
    part: &GridPartition,
    pi: PiChoice,
    mode: ScoreMode,
    seeds: Seeds,
    step_cap: Option<u64>,
    mut trace: impl FnMut(&Candidate),
) -> Result<EncodeReport> {
    check_shapes(task, part)?;
    if mode == ScoreMode::Omitted && pi != PiChoice::ExactSup {
        return Err(Error::InvalidPartition(
            "omitted-normalizer scores need sup-ratio weights".into(),
        ));
    }
    let masses = part.target_interval_masses(task);
    let axes = build_axes(task, part, pi, &masses)?;
    let log2_j = part.log2_total();
    // log2 of Z = Π_d Σ_k sup_{d,k}; only needed for reporting in Omitted mode.
    let log2_z: f64 = axes.iter().map(|a| log2_sum(&a.log2_sup)).sum();

    // log2 r'_max = Σ_d max_k [log2 sup_{d,k} - log2 J_d - log2 π_d(k)]
    let mut log2_rmax = 0.0;
    for (d, ax) in axes.iter().enumerate() {
        let j_d = (part.counts()[d] as f64).log2();
        let mut m = f64::NEG_INFINITY;
        for (&s, &l) in ax.log2_sup.iter().zip(&ax.log2_pi) {
            if s == f64::NEG_INFINITY {
                continue;
            }
            if l == f64::NEG_INFINITY {
                // positive target density in a bin that is never proposed
                return Err(Error::InfiniteRatio);
            }
            m = m.max(s - j_d - l);
        }
        log2_rmax += m;
    }
    let inv_rmax = libm::exp2(-log2_rmax);

    let mut arrivals = ArrivalProcess::new(ArrivalMode::Pfr, seeds.private);
    let mut proposals = private_rng(seeds.private, 1);
    let mut counters = Counters::new(part.total_bins());
    let mut ks = vec![0usize; part.dim()];

    struct Best {
        bin: BinIndex,
        local: u64,
        full_score: f64,
        z: Vec<f64>,
    }
    let mut best: Option<Best> = None;
    let mut score_star = f64::INFINITY;
    let mut censored = false;
    loop {
        if step_cap.is_some_and(|cap| arrivals.count() >= cap) {
            censored = true;
            break;
        }
        let t = arrivals.next_arrival()?;
        let n = arrivals.count();
        for (k, ax) in ks.iter_mut().zip(&axes) {
            *k = ax.cat.sample(&mut proposals);
        }
        let j = part.compose(&ks);
        let local = counters.bump(j);
        if local > MAX_LOCAL_INDEX {
            return Err(Error::IndexOutOfRange(local));
        }
        let z = sample_in_cell(task.prior(), part, j, &ks, local, seeds.shared);
        let lr = task.log2_ratio_unchecked(&z);
        let base = t * libm::exp2(-lr);
        let log2_ell: f64 = ks.iter().zip(&axes).map(|(&k, a)| a.log2_sup[k]).sum();
        let log2_pi: f64 = ks.iter().zip(&axes).map(|(&k, a)| a.log2_pi[k]).sum();
        let (score, full_score) = match mode {
            ScoreMode::Omitted => (
                t * libm::exp2(log2_ell - lr),
                libm::exp2(log2_j + log2_ell - log2_z) * base,
            ),
            ScoreMode::Full => {
                let s = libm::exp2(log2_j + log2_pi) * base;
                (s, s)
            }
        };
        trace(&Candidate {
            n,
            bin: j,
            local_index: local,
            t,
            log2_ratio: lr,
            score,
            full_score,
        });
        if best.is_none() || score < score_star {
            score_star = score;
            best = Some(Best {
                bin: j,
                local,
                full_score,
                z,
            });
        }
        let stop = match mode {
            ScoreMode::Omitted => t >= score_star,
            ScoreMode::Full => t * inv_rmax >= score_star,
        };
        if stop {
            break;
        }
    }
    let best = best.ok_or(Error::EmptyInput)?;
    let log2_pi_axes: Vec<Vec<f64>> = axes.iter().map(|a| a.log2_pi.clone()).collect();
    let kl = kl_bits(task);
    Ok(EncodeReport {
        code: CodePoint {
            bin: best.bin,
            local_index: best.local,
        },
        sample: best.z,
        steps: arrivals.count(),
        tau_star: best.full_score,
        kl_bits_used: kl,
        heuristic_kl_bits: heuristic_kl_from_axes(kl, &masses, &log2_pi_axes, log2_j),
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Dim1Law, FactorizedDistribution};
    use crate::partition::build_partition;
    use crate::rec::decode;

    fn g(m: f64, s: f64) -> Dim1Law {
        Dim1Law::gaussian(m, s).unwrap()
    }

    fn task3() -> RecTask {
        RecTask::from_pairs([
            (g(0.5, 0.3), g(0.0, 1.0)),
            (g(-0.2, 0.4), g(0.0, 0.8)),
            (g(0.9, 0.5), g(0.0, 1.2)),
        ])
        .unwrap()
    }

    #[test]
    fn uniform_target_on_four_bins_stops_after_one_step() {
        let t = RecTask::from_pairs([(
            Dim1Law::uniform(0.0, 0.25).unwrap(),
            Dim1Law::uniform(0.0, 1.0).unwrap(),
        )])
        .unwrap();
        let part = build_partition(t.prior(), &[4]).unwrap();
        for s in 0..200u64 {
            let r = encode_sp_pfr(&t, &part, PiChoice::ExactSup, Seeds::new(s, s + 1), None).unwrap();
            assert_eq!(r.steps, 1);
            assert_eq!(r.code.bin, BinIndex(0));
            assert_eq!(r.code.local_index, 1);
            assert!(r.sample[0] >= 0.0 && r.sample[0] <= 0.25);
        }
    }

    #[test]
    fn same_distribution_needs_one_candidate() {
        let t = RecTask::from_pairs([(g(0.0, 1.0), g(0.0, 1.0)); 3]).unwrap();
        for s in 0..50 {
            let r = encode_pfr(&t, Seeds::new(s, 99 + s), None).unwrap();
            assert_eq!(r.code.local_index, 1);
            assert_eq!(r.steps, 1);
        }
    }

    #[test]
    fn wider_target_is_rejected() {
        let t = RecTask::from_pairs([(g(0.0, 2.0), g(0.0, 1.0))]).unwrap();
        assert_eq!(encode_pfr(&t, Seeds::new(0, 0), None), Err(Error::InfiniteRatio));
        let part = build_partition(t.prior(), &[4]).unwrap();
        assert_eq!(
            encode_sp_pfr(&t, &part, PiChoice::ExactSup, Seeds::new(0, 0), None),
            Err(Error::InfiniteRatio)
        );
    }

    #[test]
    fn one_bin_partition_reproduces_pfr_exactly() {
        let t = task3();
        let part = GridPartition::trivial(t.prior());
        for s in 0..100u64 {
            let seeds = Seeds::new(1000 + s, 7 * s);
            let a = encode_pfr(&t, seeds, None).unwrap();
            let b = encode_sp_pfr(&t, &part, PiChoice::ExactSup, seeds, None).unwrap();
            assert_eq!(a.code, b.code);
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.sample, b.sample);
            assert_eq!(a.tau_star.to_bits(), b.tau_star.to_bits());
        }
    }

    #[test]
    fn decode_roundtrip() {
        let t = task3();
        let part = build_partition(t.prior(), &[4, 2, 2]).unwrap();
        for s in 0..50u64 {
            let r = encode_sp_pfr(&t, &part, PiChoice::ExactSup, Seeds::new(s, s ^ 0xabc), None).unwrap();
            let z = decode(t.prior(), &part, r.code, s).unwrap();
            assert_eq!(z, r.sample);
        }
    }

    #[test]
    fn omitted_and_full_score_conventions_agree() {
        let t = task3();
        let part = build_partition(t.prior(), &[4, 4, 2]).unwrap();
        for s in 0..100u64 {
            let seeds = Seeds::new(s, 3 * s + 1);
            let mut ratios = Vec::new();
            let a = run_sp_pfr(&t, &part, PiChoice::ExactSup, ScoreMode::Omitted, seeds, None, |c| {
                ratios.push(c.full_score / c.score)
            })
            .unwrap();
            let b = run_sp_pfr(&t, &part, PiChoice::ExactSup, ScoreMode::Full, seeds, None, |_| {}).unwrap();
            assert_eq!(a.code, b.code);
            assert_eq!(a.steps, b.steps);
            assert!((a.tau_star / b.tau_star - 1.0).abs() < 1e-12);
            // the two scores differ by the constant J / Z
            for r in &ratios {
                assert!((r / ratios[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_ratio_equals_j_over_normalizer() {
        let t = task3();
        let part = build_partition(t.prior(), &[4, 2, 2]).unwrap();
        let mut z_prod = 1.0;
        for (d, (q, p)) in t.pairs().enumerate() {
            let mut zd = 0.0;
            for k in 0..part.counts()[d] as usize {
                let (a, b) = part.interval(d, k);
                zd += crate::partition::sup_ratio_on_interval(q, p, a, b).finite().unwrap();
            }
            z_prod *= zd;
        }
        let mut first = None;
        run_sp_pfr(
            &t,
            &part,
            PiChoice::ExactSup,
            ScoreMode::Omitted,
            Seeds::new(4, 4),
            None,
            |c| {
                first.get_or_insert(c.full_score / c.score);
            },
        )
        .unwrap();
        let want = part.total_bins() as f64 / z_prod;
        assert!((first.unwrap() / want - 1.0).abs() < 1e-9);
    }

    #[test]
    fn target_mass_choice_is_exact_and_decodes() {
        let t = task3();
        let part = build_partition(t.prior(), &[2, 2, 2]).unwrap();
        for s in 0..30u64 {
            let r = encode_sp_pfr(&t, &part, PiChoice::TargetMass, Seeds::new(s, s + 5), None).unwrap();
            assert_eq!(decode(t.prior(), &part, r.code, s).unwrap(), r.sample);
        }
    }

    #[test]
    fn step_cap_censors() {
        let t = RecTask::from_pairs([(g(0.0, 0.01), g(0.0, 1.0)); 2]).unwrap();
        let r = encode_pfr(&t, Seeds::new(1, 2), Some(10)).unwrap();
        assert!(r.censored);
        assert_eq!(r.steps, 10);
    }

    #[test]
    fn decoder_uses_only_shared_seed() {
        let t = task3();
        let part = build_partition(t.prior(), &[2, 4, 1]).unwrap();
        let r = encode_sp_pfr(&t, &part, PiChoice::ExactSup, Seeds::new(77, 1), None).unwrap();
        let prior_only = FactorizedDistribution::new(t.prior().dims().to_vec()).unwrap();
        assert_eq!(decode(&prior_only, &part, r.code, 77).unwrap(), r.sample);
    }
}
