//! Factorized one-dimensional distribution families.
//!
//! Only Gaussian and Uniform laws are supported. Everything public is in bits;
//! the per-dimension helpers that work in nats are suffixed `_nats`.
//!
//! Numerics that the encoder and decoder must agree on (CDF, survival function
//! and their inverses) go through `libm` so results do not depend on the
//! platform's math library.

use std::f64::consts::{LN_2, LOG2_E};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A real value that may be unbounded above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Extended {
    Finite(f64),
    Unbounded,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Extended::Unbounded)
    }

    fn map(self, f: impl FnOnce(f64) -> f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(f(v)),
            Extended::Unbounded => Extended::Unbounded,
        }
    }

    fn add(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Unbounded,
        }
    }
}

/// A one-dimensional law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Dim1Law {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Dim1Law {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        let law = Dim1Law::Gaussian { mean, std };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let law = Dim1Law::Uniform { lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn standard_normal() -> Self {
        Dim1Law::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Dim1Law::Gaussian { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
                    return Err(Error::InvalidLaw(format!(
                        "gaussian needs finite mean and std > 0, got mean={mean} std={std}"
                    )));
                }
            }
            Dim1Law::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::InvalidLaw(format!(
                        "uniform needs finite lo < hi, got lo={lo} hi={hi}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closed support interval `(lo, hi)`, infinite for Gaussians.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dim1Law::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Dim1Law::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn in_support(&self, z: f64) -> bool {
        let (lo, hi) = self.support();
        z >= lo && z <= hi
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, .. } => mean,
            Dim1Law::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            Dim1Law::Gaussian { std, .. } => std,
            Dim1Law::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
        }
    }

    /// Natural-log density; `-inf` outside the support.
    pub fn ln_pdf(&self, z: f64) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, std } => {
                let u = (z - mean) / std;
                -LN_SQRT_2PI - libm::log(std) - 0.5 * u * u
            }
            Dim1Law::Uniform { lo, hi } => {
                if z >= lo && z <= hi {
                    -libm::log(hi - lo)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn log2_pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z) * LOG2_E
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, std } => std_normal_cdf((z - mean) / std),
            Dim1Law::Uniform { lo, hi } => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    /// Survival function `1 - cdf`, accurate in the upper tail.
    pub fn sf(&self, z: f64) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, std } => std_normal_cdf(-(z - mean) / std),
            Dim1Law::Uniform { lo, hi } => ((hi - z) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, std } => mean + std * std_normal_quantile(u),
            Dim1Law::Uniform { lo, hi } => {
                if u >= 1.0 {
                    hi
                } else {
                    lo + u * (hi - lo)
                }
            }
        }
    }

    /// Inverse survival function: the `z` with `sf(z) = s`.
    pub(crate) fn inverse_sf(&self, s: f64) -> f64 {
        match *self {
            Dim1Law::Gaussian { mean, std } => mean - std * std_normal_quantile(s),
            Dim1Law::Uniform { lo, hi } => {
                if s >= 1.0 {
                    lo
                } else {
                    hi - s * (hi - lo)
                }
            }
        }
    }

    /// Probability mass of `[a, b]`, computed on whichever side of the
    /// median keeps precision.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let m = if a >= self.mean() {
            self.sf(a) - self.sf(b)
        } else {
            self.cdf(b) - self.cdf(a)
        };
        m.max(0.0)
    }
}

/// Standard normal CDF via `erfc`.
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn std_normal_ln_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Standard normal quantile: Acklam's rational approximation followed by
/// one Newton step against the erfc-based CDF. Works on the lower half and
/// mirrors, so tail probabilities keep full relative precision.
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        -lower_half_quantile(1.0 - p)
    } else {
        lower_half_quantile(p)
    }
}

fn lower_half_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x0 = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Newton: x1 = x0 - (Phi(x0) - p) / phi(x0)
    let err = std_normal_cdf(x0) - p;
    let step = err * libm::exp(-std_normal_ln_pdf(x0));
    if step.is_finite() {
        x0 - step
    } else {
        x0
    }
}

/// Natural-log density ratio `ln q(z) - ln p(z)` for one dimension.
pub fn ln_ratio_1d(q: &Dim1Law, p: &Dim1Law, z: f64) -> f64 {
    q.ln_pdf(z) - p.ln_pdf(z)
}

/// `D_KL[q || p]` in nats for one dimension. Assumes `q << p`.
pub fn kl_nats_1d(q: &Dim1Law, p: &Dim1Law) -> f64 {
    match (*q, *p) {
        (Dim1Law::Gaussian { mean: mq, std: sq }, Dim1Law::Gaussian { mean: mp, std: sp }) => {
            let dm = mq - mp;
            libm::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5
        }
        (Dim1Law::Uniform { lo: lq, hi: hq }, Dim1Law::Uniform { lo: lp, hi: hp }) => libm::log((hp - lp) / (hq - lq)),
        (Dim1Law::Uniform { lo, hi }, Dim1Law::Gaussian { mean, std }) => {
            let w = hi - lo;
            let dm = 0.5 * (lo + hi) - mean;
            -libm::log(w) + LN_SQRT_2PI + libm::log(std) + (w * w / 12.0 + dm * dm) / (2.0 * std * std)
        }
        (Dim1Law::Gaussian { .. }, Dim1Law::Uniform { .. }) => f64::INFINITY,
    }
}

/// `D_inf[q || p]` (log of the supremum density ratio) in nats for one dimension.
pub fn dinf_nats_1d(q: &Dim1Law, p: &Dim1Law) -> Extended {
    let (lo, hi) = q.support();
    ln_sup_ratio_on_interval(q, p, lo, hi)
}

/// `ln sup_{z in [a, b]} q(z)/p(z)`. A zero ratio is reported as
/// `Finite(-inf)`.
pub fn ln_sup_ratio_on_interval(q: &Dim1Law, p: &Dim1Law, a: f64, b: f64) -> Extended {
    match (*q, *p) {
        (Dim1Law::Gaussian { mean: mq, std: sq }, Dim1Law::Gaussian { mean: mp, std: sp }) => {
            let lr = |z: f64| ln_ratio_1d(q, p, z);
            let iq = 1.0 / (sq * sq);
            let ip = 1.0 / (sp * sp);
            if sq < sp {
                // concave log-ratio with a unique stationary point
                let z_star = (mq * iq - mp * ip) / (iq - ip);
                Extended::Finite(lr(z_star.clamp(a, b)))
            } else if sq == sp {
                let slope = mq - mp;
                if slope > 0.0 {
                    if b.is_infinite() {
                        Extended::Unbounded
                    } else {
                        Extended::Finite(lr(b))
                    }
                } else if slope < 0.0 {
                    if a.is_infinite() {
                        Extended::Unbounded
                    } else {
                        Extended::Finite(lr(a))
                    }
                } else {
                    Extended::Finite(0.0)
                }
            } else if a.is_infinite() || b.is_infinite() {
                Extended::Unbounded
            } else {
                Extended::Finite(lr(a).max(lr(b)))
            }
        }
        (Dim1Law::Uniform { lo: lq, hi: hq }, _) => {
            let lo = a.max(lq);
            let hi = b.min(hq);
            if lo >= hi && !(lo == hi && a == b) {
                return Extended::Finite(f64::NEG_INFINITY);
            }
            match *p {
                Dim1Law::Uniform { lo: lp, hi: hp } => Extended::Finite(libm::log((hp - lp) / (hq - lq))),
                Dim1Law::Gaussian { mean, .. } => {
                    let far = if (lo - mean).abs() >= (hi - mean).abs() { lo } else { hi };
                    Extended::Finite(ln_ratio_1d(q, p, far))
                }
            }
        }
        (Dim1Law::Gaussian { mean, .. }, Dim1Law::Uniform { lo: lp, hi: hp }) => {
            let lo = a.max(lp);
            let hi = b.min(hp);
            if lo > hi {
                return Extended::Finite(f64::NEG_INFINITY);
            }
            Extended::Finite(ln_ratio_1d(q, p, mean.clamp(lo, hi)))
        }
    }
}

/// A fully factorized distribution over `R^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFactorized")]
pub struct FactorizedDistribution {
    dims: Vec<Dim1Law>,
}

#[derive(Deserialize)]
struct RawFactorized {
    dims: Vec<Dim1Law>,
}

impl TryFrom<RawFactorized> for FactorizedDistribution {
    type Error = Error;

    fn try_from(raw: RawFactorized) -> Result<Self> {
        FactorizedDistribution::new(raw.dims)
    }
}

impl FactorizedDistribution {
    pub fn new(dims: Vec<Dim1Law>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyInput);
        }
        for law in &dims {
            law.validate()?;
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[Dim1Law] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub(crate) fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                got: z.len(),
            });
        }
        Ok(())
    }
}

/// A target `Q` paired with a coding distribution `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct RecTask {
    target: FactorizedDistribution,
    prior: FactorizedDistribution,
}

#[derive(Deserialize)]
struct RawTask {
    target: FactorizedDistribution,
    prior: FactorizedDistribution,
}

impl TryFrom<RawTask> for RecTask {
    type Error = Error;

    fn try_from(raw: RawTask) -> Result<Self> {
        RecTask::new(raw.target, raw.prior)
    }
}

impl RecTask {
    pub fn new(target: FactorizedDistribution, prior: FactorizedDistribution) -> Result<Self> {
        if target.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: target.dim(),
            });
        }
        for (d, (q, p)) in target.dims.iter().zip(&prior.dims).enumerate() {
            let ok = match (*q, *p) {
                (Dim1Law::Gaussian { .. }, Dim1Law::Gaussian { .. }) => true,
                (Dim1Law::Uniform { lo: lq, hi: hq }, Dim1Law::Uniform { lo: lp, hi: hp }) => lp <= lq && hq <= hp,
                (Dim1Law::Uniform { .. }, Dim1Law::Gaussian { .. }) => true,
                (Dim1Law::Gaussian { .. }, Dim1Law::Uniform { .. }) => false,
            };
            if !ok {
                return Err(Error::NotAbsolutelyContinuous { dim: d });
            }
        }
        Ok(Self { target, prior })
    }

    /// Builds a task from per-dimension `(target, prior)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Dim1Law, Dim1Law)>) -> Result<Self> {
        let (q, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        RecTask::new(FactorizedDistribution::new(q)?, FactorizedDistribution::new(p)?)
    }

    pub fn target(&self) -> &FactorizedDistribution {
        &self.target
    }

    pub fn prior(&self) -> &FactorizedDistribution {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Dim1Law, &Dim1Law)> {
        self.target.dims.iter().zip(&self.prior.dims)
    }

    /// `log2 q(z) - log2 p(z)` without support checks; `-inf` where `q = 0`.
    pub(crate) fn log2_ratio_unchecked(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((q, p), &zd) in self.pairs().zip(z) {
            acc += ln_ratio_1d(q, p, zd);
        }
        acc * LOG2_E
    }
}

/// Sum over dimensions of `log2` of the one-dimensional densities.
pub fn log2_density(dist: &FactorizedDistribution, z: &[f64]) -> Result<f64> {
    dist.check_point(z)?;
    Ok(dist.dims.iter().zip(z).map(|(law, &zd)| law.ln_pdf(zd)).sum::<f64>() * LOG2_E)
}

/// `log2 q(z) - log2 p(z)`. Errors if `z` lies outside the prior support.
pub fn log2_ratio(task: &RecTask, z: &[f64]) -> Result<f64> {
    task.prior.check_point(z)?;
    for (d, (p, &zd)) in task.prior.dims.iter().zip(z).enumerate() {
        if !p.in_support(zd) {
            return Err(Error::OutsideSupport { dim: d });
        }
    }
    Ok(task.log2_ratio_unchecked(z))
}

pub fn dimwise_kl_bits(task: &RecTask) -> Vec<f64> {
    task.pairs().map(|(q, p)| kl_nats_1d(q, p) * LOG2_E).collect()
}

pub fn kl_bits(task: &RecTask) -> f64 {
    task.pairs().map(|(q, p)| kl_nats_1d(q, p)).sum::<f64>() * LOG2_E
}

pub fn renyi_inf_bits(task: &RecTask) -> Extended {
    task.pairs()
        .map(|(q, p)| dinf_nats_1d(q, p))
        .fold(Extended::Finite(0.0), Extended::add)
        .map(|v| v * LOG2_E)
}

pub fn quantile(law: &Dim1Law, u: f64) -> Result<f64> {
    law.quantile(u)
}

/// Convert nats to bits.
pub fn nats_to_bits(v: f64) -> f64 {
    v / LN_2
}
