//! Zipf model for local sample indices and a binary range coder for them.
//!
//! The pmf is `P(n) ∝ n^{-s}` with `s = 1 + 1/ζ`. Indices are coded as
//! `m = n - 1 ∈ [0, 2^32)` by 32 most-significant-first bisection decisions,
//! each driven by the model's mass on the left half of the current range.

use crate::error::{Error, Result};

/// Largest codable index.
pub const INDEX_CAP: u64 = 1 << 32;

pub const ZETA_MIN: f64 = 1e-3;
pub const ZETA_MAX: f64 = 1e3;

const PROB_BITS: u32 = 16;
const PROB_ONE: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;
const DIRECT_SUM_SPAN: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ZipfModel {
    zeta: f64,
    s: f64,
    /// `tail[n] = Σ_{k ≥ n} k^{-s}` for `1 ≤ n ≤ cut`; index 0 unused.
    tail: Vec<f64>,
    cut: u64,
}

impl ZipfModel {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::InvalidLaw(format!("zipf zeta must be positive, got {zeta}")));
        }
        let s = 1.0 + 1.0 / zeta;
        let cut = 32u64.max((2.0 * s).ceil() as u64);
        let mut tail = vec![0.0; cut as usize + 1];
        tail[cut as usize] = euler_maclaurin_tail(s, cut as f64);
        for n in (1..cut).rev() {
            tail[n as usize] = libm::pow(n as f64, -s) + tail[n as usize + 1];
        }
        Ok(Self { zeta, s, tail, cut })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// The exponent `s = 1 + 1/ζ`.
    pub fn exponent(&self) -> f64 {
        self.s
    }

    /// `Σ_{n ≥ 1} n^{-s}`.
    pub fn normalizer(&self) -> f64 {
        self.tail[1]
    }

    /// Unnormalized `Σ_{k ≥ n} k^{-s}`.
    fn tail_sum(&self, n: u64) -> f64 {
        if n <= self.cut {
            self.tail[n.max(1) as usize]
        } else {
            euler_maclaurin_tail(self.s, n as f64)
        }
    }

    /// Unnormalized mass of `[a, b)`.
    fn range_sum(&self, a: u64, b: u64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if b - a <= DIRECT_SUM_SPAN {
            (a..b).map(|n| libm::pow(n as f64, -self.s)).sum()
        } else {
            (self.tail_sum(a) - self.tail_sum(b)).max(0.0)
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        libm::pow(n as f64, -self.s) / self.normalizer()
    }

    /// `P(N ≥ n)`.
    pub fn tail_mass(&self, n: u64) -> f64 {
        if n <= 1 {
            return 1.0;
        }
        self.tail_sum(n) / self.normalizer()
    }

    /// Probability of the left half `[lo, mid)` within `[lo, hi)`, as a
    /// 16-bit fixed-point value in `[1, 65535]`.
    fn left_prob(&self, lo: u64, mid: u64, hi: u64) -> u32 {
        let whole = self.range_sum(lo, hi);
        let left = self.range_sum(lo, mid);
        let p = if whole > 0.0 && whole.is_finite() {
            left / whole
        } else {
            0.5
        };
        ((p * PROB_ONE as f64).round() as u32).clamp(1, PROB_ONE - 1)
    }
}

/// `Σ_{n ≥ k} n^{-s}` by Euler–Maclaurin with three Bernoulli corrections.
fn euler_maclaurin_tail(s: f64, k: f64) -> f64 {
    let ks = libm::pow(k, -s);
    let k2 = k * k;
    ks * k / (s - 1.0) + ks / 2.0 + s / 12.0 * ks / k - s * (s + 1.0) * (s + 2.0) / 720.0 * ks / (k2 * k)
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * ks / (k2 * k2 * k)
}

/// Negative log-likelihood in bits: `s·log2 n + log2 Z(s)`.
pub fn nll_bits(model: &ZipfModel, index: u64) -> Result<f64> {
    if index == 0 {
        return Err(Error::ZeroLocalIndex);
    }
    Ok(model.s * (index as f64).log2() + model.normalizer().log2())
}

/// Maximum-likelihood `ζ` by golden-section search on `ln ζ` over
/// `[1e-3, 1e3]`.
pub fn fit_zeta(indices: &[u64]) -> Result<ZipfModel> {
    if indices.is_empty() {
        return Err(Error::EmptyInput);
    }
    if indices.contains(&0) {
        return Err(Error::ZeroLocalIndex);
    }
    let sum_ln: f64 = indices.iter().map(|&n| (n as f64).ln()).sum();
    let count = indices.len() as f64;
    let nll = |x: f64| -> f64 {
        let m = ZipfModel::new(x.exp()).expect("zeta in range");
        m.s * sum_ln + count * m.normalizer().ln()
    };
    let (mut a, mut b) = (ZETA_MIN.ln(), ZETA_MAX.ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (nll(c), nll(d));
    while b - a > 1e-9 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    let x = if fc <= fd { c } else { d };
    ZipfModel::new(x.exp().clamp(ZETA_MIN, ZETA_MAX))
}

/// LZMA-style binary range encoder: 32-bit range, carry propagated through a
/// cached byte.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Encode `bit` where `p0` is the 16-bit probability of a zero.
    pub fn encode_bit(&mut self, p0: u32, bit: bool) {
        let bound = (self.range >> PROB_BITS) * p0;
        if bit {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        if input.len() < 5 {
            return Err(Error::MalformedBlock("range-coded stream shorter than 5 bytes".into()));
        }
        let mut code = 0u32;
        for &b in &input[..5] {
            code = (code << 8) | b as u32;
        }
        Ok(Self {
            code,
            range: u32::MAX,
            input,
            pos: 5,
        })
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    pub fn decode_bit(&mut self, p0: u32) -> bool {
        let bound = (self.range >> PROB_BITS) * p0;
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
        bit
    }

    /// Bytes consumed so far, including lookahead.
    pub fn position(&self) -> usize {
        self.pos
    }
}

pub fn encode_index(model: &ZipfModel, index: u64, enc: &mut RangeEncoder) -> Result<()> {
    if index == 0 || index > INDEX_CAP {
        return Err(Error::IndexOutOfRange(index));
    }
    // work in n-space: current candidate set is [lo, hi)
    let (mut lo, mut hi) = (1u64, INDEX_CAP + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p0 = model.left_prob(lo, mid, hi);
        let right = index >= mid;
        enc.encode_bit(p0, right);
        if right {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(())
}

pub fn decode_index(model: &ZipfModel, dec: &mut RangeDecoder<'_>) -> Result<u64> {
    let (mut lo, mut hi) = (1u64, INDEX_CAP + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p0 = model.left_prob(lo, mid, hi);
        if dec.decode_bit(p0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Range-code a sequence of indices into one byte stream.
pub fn encode_indices(model: &ZipfModel, indices: &[u64]) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for &n in indices {
        encode_index(model, n, &mut enc)?;
    }
    Ok(enc.finish())
}

pub fn decode_indices(model: &ZipfModel, bytes: &[u8], count: usize) -> Result<Vec<u64>> {
    let mut dec = RangeDecoder::new(bytes)?;
    (0..count).map(|_| decode_index(model, &mut dec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent tail oracle: brute-force sum up to `big` plus the integral
    /// bound midpoint for the remainder.
    fn tail_oracle(s: f64, n: u64) -> f64 {
        let big = n + 2_000_000;
        let mut acc = 0.0;
        for k in (n..big).rev() {
            acc += (k as f64).powf(-s);
        }
        let b = big as f64;
        acc + b.powf(1.0 - s) / (s - 1.0) + b.powf(-s) / 2.0
    }

    /// Inverse-CDF draw by bisection on the tail masses.
    fn sample(model: &ZipfModel, u: f64) -> u64 {
        // smallest n with P(N > n) <= 1 - u, i.e. tail_mass(n + 1) <= 1 - u
        let (mut lo, mut hi) = (1u64, INDEX_CAP);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if model.tail_mass(mid + 1) <= 1.0 - u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    #[test]
    fn riemann_zeta_two() {
        let m = ZipfModel::new(1.0).unwrap();
        let want = std::f64::consts::PI.powi(2) / 6.0;
        assert!((m.normalizer() - want).abs() < 1e-12);
        assert!((nll_bits(&m, 1).unwrap() - want.log2()).abs() < 1e-12);
        // log2(π²/6) = 0.71803...
        assert!((nll_bits(&m, 1).unwrap() - 0.71803).abs() < 1e-5);
    }

    #[test]
    fn tail_sums_match_brute_force() {
        for zeta in [0.1, 0.5, 1.0, 3.0] {
            let m = ZipfModel::new(zeta).unwrap();
            for n in [1u64, 5, 31, 33, 100, 1000] {
                let got = m.tail_sum(n);
                let want = tail_oracle(m.exponent(), n);
                assert!(
                    (got - want).abs() <= 1e-12 + 1e-10 * want,
                    "zeta={zeta} n={n}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn truncated_pmf_sums_to_one() {
        for zeta in [0.05, 0.2, 0.5, 1.0] {
            let m = ZipfModel::new(zeta).unwrap();
            let head: f64 = (1..=10_000u64).map(|n| m.pmf(n)).sum();
            let rest = m.tail_mass(10_001) - m.tail_mass(INDEX_CAP + 1);
            assert!((head + rest - 1.0).abs() < 1e-9, "zeta={zeta}");
            assert!(m.pmf(INDEX_CAP) > 0.0 || zeta < 0.1);
        }
    }

    #[test]
    fn nll_monotone_and_index_one() {
        let m = ZipfModel::new(0.7).unwrap();
        assert_eq!(nll_bits(&m, 1).unwrap(), m.normalizer().log2());
        let mut prev = nll_bits(&m, 1).unwrap();
        for n in 2..5000 {
            let cur = nll_bits(&m, n).unwrap();
            assert!(cur > prev);
            prev = cur;
        }
        assert_eq!(nll_bits(&m, 0), Err(Error::ZeroLocalIndex));
    }

    #[test]
    fn fit_all_ones_hits_lower_bound() {
        let m = fit_zeta(&[1; 50]).unwrap();
        assert!(m.zeta() < 1.01e-3, "{}", m.zeta());
    }

    #[test]
    fn fit_rejects_empty() {
        assert_eq!(fit_zeta(&[]), Err(Error::EmptyInput));
    }

    #[test]
    fn fit_recovers_generating_zeta() {
        let truth = ZipfModel::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<u64> = (0..10_000).map(|_| sample(&truth, rng.gen())).collect();
        let fit = fit_zeta(&data).unwrap();
        assert!((fit.zeta() - 0.5).abs() < 0.05, "{}", fit.zeta());

        let nll = |z: f64| -> f64 {
            let m = ZipfModel::new(z).unwrap();
            data.iter().map(|&n| nll_bits(&m, n).unwrap()).sum()
        };
        let at = nll(fit.zeta());
        assert!(at <= nll(0.5 * fit.zeta()));
        assert!(at <= nll(2.0 * fit.zeta()));

        // refit on data drawn from the fitted model
        let again: Vec<u64> = (0..10_000).map(|_| sample(&fit, rng.gen())).collect();
        let refit = fit_zeta(&again).unwrap();
        assert!((refit.zeta() / fit.zeta() - 1.0).abs() < 0.1);
        assert_eq!(fit_zeta(&data).unwrap().zeta().to_bits(), fit.zeta().to_bits());
    }

    #[test]
    fn roundtrip_fixed_indices() {
        for zeta in [0.01, 0.5, 2.0, 50.0] {
            let m = ZipfModel::new(zeta).unwrap();
            let idx = [1u64, 2, 17, 65535, INDEX_CAP, 1 << 31];
            let bytes = encode_indices(&m, &idx).unwrap();
            assert_eq!(decode_indices(&m, &bytes, idx.len()).unwrap(), idx);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let m = ZipfModel::new(1.0).unwrap();
        let mut enc = RangeEncoder::new();
        assert_eq!(encode_index(&m, 0, &mut enc), Err(Error::IndexOutOfRange(0)));
        assert_eq!(
            encode_index(&m, INDEX_CAP + 1, &mut enc),
            Err(Error::IndexOutOfRange(INDEX_CAP + 1))
        );
    }

    #[test]
    fn coded_length_close_to_model() {
        let m = ZipfModel::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<u64> = (0..1000).map(|_| sample(&m, rng.gen())).collect();
        let bits = 8.0 * encode_indices(&m, &data).unwrap().len() as f64;
        let nll: f64 = data.iter().map(|&n| nll_bits(&m, n).unwrap()).sum();
        assert!(bits <= nll + 2.0 * 1000.0);

        // entropy of the truncated pmf
        let mut h = 0.0;
        for n in 1..2_000_000u64 {
            let p = m.pmf(n);
            if p == 0.0 {
                break;
            }
            h -= p * p.log2();
        }
        let mean = bits / 1000.0;
        assert!((mean - h).abs() < 0.1, "mean {mean} vs entropy {h}");
    }

    #[test]
    fn lossless_on_random_indices() {
        let m = ZipfModel::new(1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<u64> = (0..10_000)
            .map(|i| {
                if i % 2 == 0 {
                    sample(&m, rng.gen())
                } else {
                    rng.gen_range(1..=INDEX_CAP)
                }
            })
            .collect();
        let bytes = encode_indices(&m, &data).unwrap();
        assert_eq!(decode_indices(&m, &bytes, data.len()).unwrap(), data);
    }

    proptest! {
        #[test]
        fn prop_roundtrip(zeta in 1e-3f64..1e3, idx in proptest::collection::vec(1u64..=INDEX_CAP, 1..20)) {
            let m = ZipfModel::new(zeta).unwrap();
            let bytes = encode_indices(&m, &idx).unwrap();
            prop_assert_eq!(decode_indices(&m, &bytes, idx.len()).unwrap(), idx);
        }
    }
}
