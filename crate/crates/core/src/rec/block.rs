//! Wire format for one encoded block. All multi-byte fields are big-endian.
//!
//! ```text
//! version      u8   (= 1)
//! D            u16
//! counts       u16 × D
//! base_seed    u64
//! generator_id u8
//! zeta         f64  (IEEE-754 bits)
//! bin          ceil(log2 J) bits, MSB first, zero-padded to a byte
//! local index  range-coded against Zipf(zeta), to the end of the block
//! ```

use crate::error::{Error, Result};
use crate::index_codec::{decode_index, encode_index, RangeDecoder, RangeEncoder, ZipfModel};
use crate::partition::{BinIndex, GridPartition};
use crate::streams::GENERATOR_ID;

use super::CodePoint;

pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHeader {
    pub counts: Vec<u16>,
    pub base_seed: u64,
    pub generator_id: u8,
    pub zeta: f64,
}

impl BlockHeader {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total_bins(&self) -> Result<u64> {
        self.counts.iter().try_fold(1u64, |acc, &c| {
            if c == 0 {
                return Err(Error::MalformedBlock("zero interval count".into()));
            }
            acc.checked_mul(c as u64)
                .ok_or_else(|| Error::MalformedBlock("bin count overflows 64 bits".into()))
        })
    }

    pub fn counts_u32(&self) -> Vec<u32> {
        self.counts.iter().map(|&c| c as u32).collect()
    }
}

/// Bits needed for a bin index: `ceil(log2 J)`.
pub(crate) fn bin_bits(total: u64) -> u32 {
    if total <= 1 {
        0
    } else {
        64 - (total - 1).leading_zeros()
    }
}

pub fn write_block(part: &GridPartition, code: CodePoint, base_seed: u64, model: &ZipfModel) -> Result<Vec<u8>> {
    part.check_bin(code.bin)?;
    let dim = u16::try_from(part.dim())
        .map_err(|_| Error::MalformedBlock(format!("{} dimensions exceed u16", part.dim())))?;
    let mut out = vec![FORMAT_VERSION];
    out.extend_from_slice(&dim.to_be_bytes());
    for &c in part.counts() {
        let c = u16::try_from(c).map_err(|_| Error::MalformedBlock(format!("interval count {c} exceeds u16")))?;
        out.extend_from_slice(&c.to_be_bytes());
    }
    out.extend_from_slice(&base_seed.to_be_bytes());
    out.push(GENERATOR_ID);
    out.extend_from_slice(&model.zeta().to_be_bytes());

    let bits = bin_bits(part.total_bins());
    let nbytes = bits.div_ceil(8) as usize;
    if nbytes > 0 {
        let aligned = (code.bin.0 as u128) << (8 * nbytes as u32 - bits);
        out.extend_from_slice(&aligned.to_be_bytes()[16 - nbytes..]);
    }

    let mut enc = RangeEncoder::new();
    encode_index(model, code.local_index, &mut enc)?;
    out.extend(enc.finish());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedBlock(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Parse a block. The caller rebuilds the partition from `header.counts`
/// and its own copy of the prior.
pub fn read_block(bytes: &[u8]) -> Result<(BlockHeader, CodePoint)> {
    let mut r = Reader { bytes, pos: 0 };
    let [version] = r.array::<1>()?;
    if version != FORMAT_VERSION {
        return Err(Error::MalformedBlock(format!("unknown format version {version}")));
    }
    let dim = u16::from_be_bytes(r.array()?) as usize;
    let counts = (0..dim)
        .map(|_| Ok(u16::from_be_bytes(r.array()?)))
        .collect::<Result<Vec<u16>>>()?;
    let base_seed = u64::from_be_bytes(r.array()?);
    let [generator_id] = r.array::<1>()?;
    if generator_id != GENERATOR_ID {
        return Err(Error::MalformedBlock(format!("unknown generator id {generator_id}")));
    }
    let zeta = f64::from_be_bytes(r.array()?);
    let header = BlockHeader {
        counts,
        base_seed,
        generator_id,
        zeta,
    };
    let total = header.total_bins()?;
    let model = ZipfModel::new(zeta).map_err(|e| Error::MalformedBlock(e.to_string()))?;

    let bits = bin_bits(total);
    let nbytes = bits.div_ceil(8) as usize;
    let mut wide = [0u8; 16];
    wide[16 - nbytes..].copy_from_slice(r.take(nbytes)?);
    let aligned = u128::from_be_bytes(wide);
    let pad = 8 * nbytes as u32 - bits;
    if aligned & ((1u128 << pad) - 1) != 0 {
        return Err(Error::MalformedBlock("non-zero padding after bin index".into()));
    }
    let bin = (aligned >> pad) as u64;
    if bin >= total {
        return Err(Error::BinOutOfRange { bin, total });
    }

    let mut dec = RangeDecoder::new(&bytes[r.pos..])?;
    let local_index = decode_index(&model, &mut dec)?;
    Ok((
        header,
        CodePoint {
            bin: BinIndex(bin),
            local_index,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Dim1Law, FactorizedDistribution};
    use crate::partition::build_partition;

    fn prior(d: usize) -> FactorizedDistribution {
        FactorizedDistribution::new(vec![Dim1Law::standard_normal(); d]).unwrap()
    }

    #[test]
    fn bin_bit_widths() {
        assert_eq!(bin_bits(1), 0);
        assert_eq!(bin_bits(2), 1);
        assert_eq!(bin_bits(5), 3);
        assert_eq!(bin_bits(8), 3);
        assert_eq!(bin_bits(9), 4);
        assert_eq!(bin_bits(1 << 40), 40);
    }

    #[test]
    fn golden_header_layout() {
        // D = 2, counts (4, 2): J = 8, bin 5 -> 3 bits "101" padded to 0b1010_0000
        let part = build_partition(&prior(2), &[4, 2]).unwrap();
        let model = ZipfModel::new(0.5).unwrap();
        let code = CodePoint {
            bin: BinIndex(5),
            local_index: 1,
        };
        let bytes = write_block(&part, code, 0x0102_0304_0506_0708, &model).unwrap();
        let mut want = vec![
            0x01, // version
            0x00,
            0x02, // D
            0x00,
            0x04,
            0x00,
            0x02, // counts
            0x01,
            0x02,
            0x03,
            0x04,
            0x05,
            0x06,
            0x07,
            0x08, // seed
            0x01, // generator
            0x3F,
            0xE0,
            0x00,
            0x00,
            0x00,
            0x00,
            0x00,
            0x00, // 0.5
            0b1010_0000,
        ];
        assert_eq!(&bytes[..want.len()], &want[..]);
        // range coder always emits its zero cache byte first
        want.push(0x00);
        assert_eq!(bytes[want.len() - 1], 0x00);
        assert_eq!(read_block(&bytes).unwrap().1, code);
    }

    #[test]
    fn one_bin_has_no_bin_bytes() {
        let part = GridPartition::trivial(&prior(3));
        let model = ZipfModel::new(1.0).unwrap();
        let code = CodePoint {
            bin: BinIndex(0),
            local_index: 12345,
        };
        let bytes = write_block(&part, code, 9, &model).unwrap();
        // 1 + 2 + 6 + 8 + 1 + 8 = 26 header bytes, then the coded index
        assert_eq!(bytes[26], 0x00);
        let (h, c) = read_block(&bytes).unwrap();
        assert_eq!(c, code);
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert_eq!(h.base_seed, 9);
        assert_eq!(h.zeta, 1.0);
    }

    #[test]
    fn roundtrip_many() {
        let part = build_partition(&prior(3), &[16, 8, 3]).unwrap();
        let model = ZipfModel::new(0.8).unwrap();
        for j in (0..part.total_bins()).step_by(7) {
            for n in [1u64, 2, 100, 1 << 20] {
                let code = CodePoint {
                    bin: BinIndex(j),
                    local_index: n,
                };
                let bytes = write_block(&part, code, j * n, &model).unwrap();
                let (h, c) = read_block(&bytes).unwrap();
                assert_eq!(c, code);
                assert_eq!(h.base_seed, j * n);
            }
        }
    }

    #[test]
    fn rejects_corruption() {
        let part = build_partition(&prior(1), &[5]).unwrap();
        let model = ZipfModel::new(0.8).unwrap();
        let code = CodePoint {
            bin: BinIndex(4),
            local_index: 3,
        };
        let good = write_block(&part, code, 1, &model).unwrap();
        let mut bad = good.clone();
        bad[0] = 2;
        assert!(matches!(read_block(&bad), Err(Error::MalformedBlock(_))));
        let mut bad = good.clone();
        bad[13] = 7; // generator id
        assert!(matches!(read_block(&bad), Err(Error::MalformedBlock(_))));
        let mut bad = good.clone();
        bad[22] = 0b1110_0000; // bin 7 of 5
        assert!(matches!(
            read_block(&bad),
            Err(Error::BinOutOfRange { bin: 7, total: 5 })
        ));
        let mut bad = good.clone();
        bad[22] |= 1; // padding bit
        assert!(matches!(read_block(&bad), Err(Error::MalformedBlock(_))));
        assert!(read_block(&good[..10]).is_err());
    }

    #[test]
    fn wide_counts_rejected() {
        let part = build_partition(&prior(1), &[70_000]).unwrap();
        let model = ZipfModel::new(1.0).unwrap();
        let code = CodePoint {
            bin: BinIndex(0),
            local_index: 1,
        };
        assert!(matches!(
            write_block(&part, code, 0, &model),
            Err(Error::MalformedBlock(_))
        ));
    }
}
