use super::bits::{decompose, ldexp, shift_round};
use super::{DataFormat, Rounding};
use crate::error::{Error, Result};
use crate::real::Real;

pub const BLOCK_LEN: usize = 16;
/// Bias of the 8-bit shared exponent.
pub const BFP_BIAS: i32 = 127;
const MAX_BIASED: i32 = 254;
const MIN_BIASED: i32 = 1;

/// Sixteen sign-magnitude codes sharing one biased exponent.
///
/// Element value is `code * 2^(shared_exponent - bias - mantissa_bits + 1)`:
/// the code carries its leading bit explicitly, so elements smaller than the
/// block maximum simply have leading zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BfpBlock {
    pub shared_exponent: u8,
    /// Bit `mantissa_bits` is the sign, the low `mantissa_bits` the magnitude.
    pub codes: [u16; BLOCK_LEN],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Elements clamped to the largest code because the block exceeded the
    /// shared-exponent range.
    pub saturated: u32,
}

impl EncodeStats {
    pub fn merge(&mut self, other: EncodeStats) {
        self.saturated += other.saturated;
    }
}

impl BfpBlock {
    pub const ZERO: Self = Self { shared_exponent: 0, codes: [0; BLOCK_LEN] };

    pub fn from_parts(shared_exponent: u8, codes: [u16; BLOCK_LEN], fmt: DataFormat) -> Result<Self> {
        require_bfp(fmt)?;
        let limit = 1u32 << (fmt.mantissa_bits + 1);
        if let Some(c) = codes.iter().find(|&&c| c as u32 >= limit) {
            return Err(Error::Config(format!("code {c:#x} exceeds {} bits", fmt.mantissa_bits + 1)));
        }
        Ok(Self { shared_exponent, codes })
    }

    pub fn is_zero(&self) -> bool {
        self.codes.iter().all(|&c| c == 0)
    }

    pub fn magnitude(&self, i: usize, fmt: DataFormat) -> u32 {
        self.codes[i] as u32 & ((1u32 << fmt.mantissa_bits) - 1)
    }

    pub fn is_negative(&self, i: usize, fmt: DataFormat) -> bool {
        (self.codes[i] >> fmt.mantissa_bits) & 1 == 1
    }

    /// Exponent of one code unit.
    pub fn quantum_exponent(&self, fmt: DataFormat) -> i32 {
        self.shared_exponent as i32 - BFP_BIAS - fmt.mantissa_bits as i32 + 1
    }
}

fn require_bfp(fmt: DataFormat) -> Result<()> {
    if fmt.is_bfp() {
        Ok(())
    } else {
        Err(Error::Config(format!("{fmt} is not a block floating point format")))
    }
}

/// Encode one block with round-to-nearest-even.
pub fn encode_bfp<T: Real>(values: &[T; BLOCK_LEN], fmt: DataFormat) -> Result<BfpBlock> {
    encode_bfp_with(values, fmt, Rounding::NearestEven).map(|(b, _)| b)
}

pub fn encode_bfp_with<T: Real>(
    values: &[T; BLOCK_LEN],
    fmt: DataFormat,
    rounding: Rounding,
) -> Result<(BfpBlock, EncodeStats)> {
    require_bfp(fmt)?;
    let mut parts = [None; BLOCK_LEN];
    for (i, v) in values.iter().enumerate() {
        let x = v.to_f64_exact();
        if !x.is_finite() {
            return Err(Error::NonFinite { index: i, value: x });
        }
        parts[i] = decompose(x);
    }
    let Some(max_exp) = parts.iter().flatten().map(|d| d.exponent).max() else {
        return Ok((BfpBlock::ZERO, EncodeStats::default()));
    };

    let mb = fmt.mantissa_bits as i32;
    let code_limit = 1u64 << mb;
    let mut biased = (max_exp + BFP_BIAS).clamp(MIN_BIASED, MAX_BIASED);
    loop {
        let quantum = biased - BFP_BIAS - mb + 1;
        let mut stats = EncodeStats::default();
        let mut codes = [0u16; BLOCK_LEN];
        let mut carried = false;
        for (code, part) in codes.iter_mut().zip(&parts) {
            let Some(d) = part else { continue };
            let shift = quantum - (d.exponent - 52);
            let mut mag = if shift < 0 { u64::MAX } else { shift_round(d.significand, shift as u32, rounding) };
            if mag >= code_limit {
                if biased < MAX_BIASED && shift >= 0 {
                    carried = true;
                    break;
                }
                mag = code_limit - 1;
                stats.saturated += 1;
            }
            *code = mag as u16 | if d.negative { 1 << mb } else { 0 };
        }
        if carried {
            // rounding the block maximum up spilled into the next binade
            biased += 1;
            continue;
        }
        let block = BfpBlock { shared_exponent: biased as u8, codes };
        return Ok((if block.is_zero() { BfpBlock::ZERO } else { block }, stats));
    }
}

pub fn decode_bfp<T: Real>(block: &BfpBlock, fmt: DataFormat) -> [T; BLOCK_LEN] {
    let mut out = [T::zero(); BLOCK_LEN];
    if block.is_zero() {
        return out;
    }
    let quantum = block.quantum_exponent(fmt);
    for (i, o) in out.iter_mut().enumerate() {
        let mag = block.magnitude(i, fmt);
        if mag == 0 {
            continue;
        }
        let v = ldexp(mag as f64, quantum);
        *o = T::from_f64_lossy(if block.is_negative(i, fmt) { -v } else { v });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(vals: &[f64]) -> [f64; 16] {
        let mut b = [0.0; 16];
        b[..vals.len()].copy_from_slice(vals);
        b
    }

    #[test]
    fn zero_block_is_canonical() {
        let b = encode_bfp(&[0.0f64; 16], DataFormat::BFP8).unwrap();
        assert_eq!(b, BfpBlock::ZERO);
        assert_eq!(decode_bfp::<f64>(&b, DataFormat::BFP8), [0.0; 16]);
    }

    #[test]
    fn ones_are_lossless() {
        for fmt in [DataFormat::BFP16, DataFormat::BFP8, DataFormat::BFP4] {
            let b = encode_bfp(&[1.0f64; 16], fmt).unwrap();
            assert_eq!(b.shared_exponent as i32, BFP_BIAS);
            assert_eq!(decode_bfp::<f64>(&b, fmt), [1.0; 16]);
        }
    }

    #[test]
    fn small_element_flushes_in_bfp4() {
        let v = block(&[1.0, 2f64.powi(-20)]);
        let b = encode_bfp(&v, DataFormat::BFP4).unwrap();
        assert_eq!(decode_bfp::<f64>(&b, DataFormat::BFP4), block(&[1.0]));
    }

    #[test]
    fn shared_exponent_is_block_max() {
        let v = block(&[0.5, -3.0, 0.1, 1e-3]);
        let b = encode_bfp(&v, DataFormat::BFP8).unwrap();
        assert_eq!(b.shared_exponent as i32 - BFP_BIAS, 1);
        let d = decode_bfp::<f64>(&b, DataFormat::BFP8);
        assert_eq!(d[1], -3.0);
        assert_eq!(d[0], 0.5);
        // quantum is 2^(1-6) = 1/32
        assert_eq!(d[2], 0.09375);
        assert_eq!(d[3], 0.0);
        assert!(b.is_negative(1, DataFormat::BFP8));
    }

    #[test]
    fn carry_bumps_exponent() {
        // 1.1111111_1 in binary rounds up to 2.0 with seven mantissa bits
        let x = 2.0 - 2f64.powi(-8);
        let b = encode_bfp(&block(&[x, 0.75]), DataFormat::BFP8).unwrap();
        assert_eq!(b.shared_exponent as i32 - BFP_BIAS, 1);
        let d = decode_bfp::<f64>(&b, DataFormat::BFP8);
        assert_eq!(d[0], 2.0);
        assert_eq!(d[1], 0.75);
    }

    #[test]
    fn saturates_out_of_range() {
        let (b, stats) = encode_bfp_with(&block(&[1e300, 1.0]), DataFormat::BFP8, Rounding::NearestEven).unwrap();
        assert_eq!(stats.saturated, 1);
        assert_eq!(b.shared_exponent, 254);
        let d = decode_bfp::<f64>(&b, DataFormat::BFP8);
        assert_eq!(d[0], 127.0 * 2f64.powi(127 - 6));
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn tiny_blocks_flush() {
        let b = encode_bfp(&block(&[1e-300, 1e-301]), DataFormat::BFP8).unwrap();
        assert_eq!(b, BfpBlock::ZERO);
    }

    #[test]
    fn rejects_scalar_format_and_nan() {
        assert!(encode_bfp(&[1.0f64; 16], DataFormat::BF16).is_err());
        assert!(matches!(encode_bfp(&block(&[f64::NAN]), DataFormat::BFP8), Err(Error::NonFinite { index: 0, .. })));
    }

    #[test]
    fn from_parts_checks_width() {
        assert!(BfpBlock::from_parts(127, [0xff; 16], DataFormat::BFP8).is_ok());
        assert!(BfpBlock::from_parts(127, [0x100; 16], DataFormat::BFP8).is_err());
        assert!(BfpBlock::from_parts(127, [0x10; 16], DataFormat::BFP4).is_err());
    }
}
