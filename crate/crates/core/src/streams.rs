//! Shared and private randomness.
//!
//! Candidate samples come from a stateless keyed generator so that the
//! decoder can jump straight to sample `ñ` of bin `j`. Arrival times and
//! the sender's bin proposals use a separate, private ChaCha stream that the
//! receiver never needs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::FactorizedDistribution;
use crate::error::{Error, Result};
use crate::partition::{BinIndex, GridPartition};

/// Wire identifier of the shared generator (Philox4x32-10).
pub const GENERATOR_ID: u8 = 1;

/// Largest local index the counter layout can address.
pub const MAX_LOCAL_INDEX: u64 = (1 << 48) - 1;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Address of one shared uniform variate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub base_seed: u64,
    pub bin: BinIndex,
    pub local_index: u64,
    pub dim: u16,
}

impl StreamKey {
    fn counter(&self) -> [u32; 4] {
        let j = self.bin.0;
        let n = self.local_index;
        [
            j as u32,
            (j >> 32) as u32,
            n as u32,
            ((((n >> 32) & 0xFFFF) as u32) << 16) | self.dim as u32,
        ]
    }

    /// Uniform variate in the open interval (0, 1).
    pub fn uniform(&self) -> f64 {
        let key = [self.base_seed as u32, (self.base_seed >> 32) as u32];
        let out = philox4x32_10(self.counter(), key);
        let bits = ((out[0] as u64) << 32 | out[1] as u64) >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// The `local_index`-th sample of the prior restricted to bin `j`, drawn by
/// inverse-CDF sampling per axis.
pub fn sample_in_bin(
    prior: &FactorizedDistribution,
    part: &GridPartition,
    j: BinIndex,
    local_index: u64,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if local_index == 0 {
        return Err(Error::ZeroLocalIndex);
    }
    if local_index > MAX_LOCAL_INDEX {
        return Err(Error::IndexOutOfRange(local_index));
    }
    if part.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            got: part.dim(),
        });
    }
    let ks = part.decompose(j)?;
    Ok(sample_in_cell(prior, part, j, &ks, local_index, base_seed))
}

pub(crate) fn sample_in_cell(
    prior: &FactorizedDistribution,
    part: &GridPartition,
    j: BinIndex,
    ks: &[usize],
    local_index: u64,
    base_seed: u64,
) -> Vec<f64> {
    prior
        .dims()
        .iter()
        .zip(ks)
        .enumerate()
        .map(|(d, (law, &k))| {
            let v = StreamKey {
                base_seed,
                bin: j,
                local_index,
                dim: d as u16,
            }
            .uniform();
            let (a, b) = part.interval(d, k);
            let z = if a >= law.mean() {
                let (sa, sb) = (law.sf(a), law.sf(b));
                law.inverse_sf(sa - v * (sa - sb))
            } else {
                let (fa, fb) = (law.cdf(a), law.cdf(b));
                law.quantile_unchecked(fa + v * (fb - fa))
            };
            z.clamp(a, b)
        })
        .collect()
}

/// Sender-private generator for one purpose (`stream`) of one encode.
pub(crate) fn private_rng(private_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(private_seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in [0, 1) with 53 random bits.
#[inline]
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in the open interval (0, 1).
#[inline]
pub(crate) fn open_unit_f64(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub(crate) fn standard_exponential(rng: &mut impl RngCore) -> f64 {
    -libm::log1p(-unit_f64(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalMode {
    /// Homogeneous Poisson process: i.i.d. Exp(1) gaps.
    Pfr,
    /// Sorted times of `n` i.i.d. Exp(1) variates, generated in order.
    Orc { n: u64 },
}

/// Arrival times `t_1 < t_2 < ...` drawn from sender-private randomness.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    mode: ArrivalMode,
    count: u64,
    time: f64,
    rng: ChaCha8Rng,
}

impl ArrivalProcess {
    pub fn new(mode: ArrivalMode, private_seed: u64) -> Self {
        Self {
            mode,
            count: 0,
            time: 0.0,
            rng: private_rng(private_seed, 0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn next_arrival(&mut self) -> Result<f64> {
        let gap = match self.mode {
            ArrivalMode::Pfr => standard_exponential(&mut self.rng),
            ArrivalMode::Orc { n } => {
                if self.count >= n {
                    return Err(Error::ArrivalsExhausted(n));
                }
                let remaining = (n - self.count) as f64;
                n as f64 / remaining * standard_exponential(&mut self.rng)
            }
        };
        self.count += 1;
        self.time += gap;
        Ok(self.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Dim1Law;
    use crate::partition::build_partition;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    fn prior(d: usize) -> FactorizedDistribution {
        FactorizedDistribution::new(vec![Dim1Law::standard_normal(); d]).unwrap()
    }

    #[test]
    fn single_bin_is_unrestricted_sampling() {
        let p = prior(1);
        let part = GridPartition::trivial(&p);
        for n in 1..50 {
            let z = sample_in_bin(&p, &part, BinIndex(0), n, 42).unwrap();
            let v = StreamKey {
                base_seed: 42,
                bin: BinIndex(0),
                local_index: n,
                dim: 0,
            }
            .uniform();
            assert_eq!(z[0], Dim1Law::standard_normal().quantile(v).unwrap());
        }
    }

    #[test]
    fn deterministic_and_in_bin() {
        let p = prior(3);
        let part = build_partition(&p, &[4, 2, 8]).unwrap();
        for j in 0..part.total_bins() {
            for n in 1..5 {
                let a = sample_in_bin(&p, &part, BinIndex(j), n, 7).unwrap();
                let b = sample_in_bin(&p, &part, BinIndex(j), n, 7).unwrap();
                assert_eq!(
                    a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
                let ks = part.decompose(BinIndex(j)).unwrap();
                for (d, &k) in ks.iter().enumerate() {
                    let (lo, hi) = part.interval(d, k);
                    assert!(a[d] >= lo && a[d] <= hi);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_addresses() {
        let p = prior(1);
        let part = build_partition(&p, &[4]).unwrap();
        assert!(matches!(
            sample_in_bin(&p, &part, BinIndex(4), 1, 0),
            Err(Error::BinOutOfRange { .. })
        ));
        assert!(matches!(
            sample_in_bin(&p, &part, BinIndex(0), 0, 0),
            Err(Error::ZeroLocalIndex)
        ));
    }

    #[test]
    fn restricted_samples_follow_truncated_prior() {
        let law = Dim1Law::gaussian(0.5, 2.0).unwrap();
        let p = FactorizedDistribution::new(vec![law]).unwrap();
        let part = build_partition(&p, &[16]).unwrap();
        for k in [0usize, 5, 15] {
            let (a, b) = part.interval(0, k);
            let n = 100_000;
            let mut xs: Vec<f64> = (1..=n)
                .map(|i| sample_in_bin(&p, &part, BinIndex(k as u64), i, 3).unwrap()[0])
                .collect();
            xs.sort_by(f64::total_cmp);
            // truncated-CDF oracle
            let mass = law.interval_mass(a, b);
            let trunc_cdf = |x: f64| law.interval_mass(a, x) / mass;
            let mut ks = 0.0f64;
            for (i, &x) in xs.iter().enumerate() {
                let f = trunc_cdf(x);
                ks = ks
                    .max((f - i as f64 / n as f64).abs())
                    .max(((i + 1) as f64 / n as f64 - f).abs());
            }
            assert!(ks < 0.01, "bin {k}: ks {ks}");
        }
    }

    #[test]
    fn streams_of_different_bins_are_uncorrelated() {
        let n = 10_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 1..=n {
            let key = |bin| StreamKey {
                base_seed: 99,
                bin: BinIndex(bin),
                local_index: i,
                dim: 0,
            };
            let x = key(3).uniform();
            let y = key(4).uniform();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * sy / nf;
        let rho = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(rho.abs() < 0.02, "rho {rho}");
    }

    #[test]
    fn pfr_gaps_are_standard_exponential() {
        let mut proc = ArrivalProcess::new(ArrivalMode::Pfr, 1234);
        let n = 100_000;
        let mut prev = 0.0;
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n {
            let t = proc.next_arrival().unwrap();
            let gap = t - prev;
            assert!(gap > 0.0);
            s += gap;
            ss += gap * gap;
            prev = t;
        }
        let mean = s / n as f64;
        let var = ss / n as f64 - mean * mean;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02 * 2.0, "var {var}");
    }

    #[test]
    fn orc_single_arrival_and_exhaustion() {
        let mut a = ArrivalProcess::new(ArrivalMode::Orc { n: 1 }, 5);
        let mut b = ArrivalProcess::new(ArrivalMode::Pfr, 5);
        assert_eq!(a.next_arrival().unwrap(), b.next_arrival().unwrap());
        assert!(matches!(a.next_arrival(), Err(Error::ArrivalsExhausted(1))));
    }

    #[test]
    fn orc_max_matches_sorted_oracle() {
        use rand::Rng;
        let n = 100u64;
        let trials = 10_000;
        let mut ours: Vec<f64> = (0..trials)
            .map(|s| {
                let mut p = ArrivalProcess::new(ArrivalMode::Orc { n }, s);
                let mut last = 0.0;
                for _ in 0..n {
                    let t = p.next_arrival().unwrap();
                    assert!(t > last);
                    last = t;
                }
                last
            })
            .collect();
        // arrival times are n times the order statistics of n i.i.d. Exp(1)
        // variates; oracle: sort-based maximum from an unrelated generator
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let mut oracle: Vec<f64> = (0..trials)
            .map(|_| {
                let mut e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                e.sort_by(f64::total_cmp);
                n as f64 * e[n as usize - 1]
            })
            .collect();
        ours.sort_by(f64::total_cmp);
        oracle.sort_by(f64::total_cmp);
        let d = crate::diagnostics::ks_two_sample(&ours, &oracle);
        assert!(d < 0.02, "ks {d}");
        let exact = |x: f64| (1.0 - (-x / n as f64).exp()).powi(n as i32);
        let d1 = crate::diagnostics::ks_one_sample(&ours, exact);
        assert!(d1 < 0.02, "ks vs exact cdf {d1}");
    }
}
