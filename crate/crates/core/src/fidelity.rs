//! Math fidelity: multiplication that consumes only selected halves of the
//! operand significands, and the cycle multiplier each level costs.
//!
//! A significand with its leading bit explicit is split into an upper half
//! `hi` and lower half `lo`. Level N evaluates the first N cross-terms of
//! `[hi*hi, hi*lo, lo*hi, lo*lo]`, so LoFi keeps only the MSB product and
//! HiFi4 reproduces the exact product.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::bits::{decompose, ldexp};
use crate::formats::{DataFormat, BFP_BIAS, BLOCK_LEN};
use crate::matrix::Dense;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityLevel {
    LoFi,
    HiFi2,
    HiFi3,
    HiFi4,
}

impl FidelityLevel {
    pub const ALL: [Self; 4] = [Self::LoFi, Self::HiFi2, Self::HiFi3, Self::HiFi4];

    pub fn phases(self) -> u32 {
        match self {
            Self::LoFi => 1,
            Self::HiFi2 => 2,
            Self::HiFi3 => 3,
            Self::HiFi4 => 4,
        }
    }

    pub fn schedule(self) -> PhaseSchedule {
        PhaseSchedule(&CrossTerm::ORDER[..self.phases() as usize])
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LoFi => "lofi",
            Self::HiFi2 => "hifi2",
            Self::HiFi3 => "hifi3",
            Self::HiFi4 => "hifi4",
        }
    }
}

impl fmt::Display for FidelityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FidelityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lofi" | "m0" => Ok(Self::LoFi),
            "hifi2" | "m2" => Ok(Self::HiFi2),
            "hifi3" | "m3" => Ok(Self::HiFi3),
            "hifi4" | "m4" => Ok(Self::HiFi4),
            other => Err(Error::Parse(format!("unknown fidelity level {other:?}"))),
        }
    }
}

/// Cycle multiplier of a fidelity level.
pub fn phase_count(level: FidelityLevel) -> u32 {
    level.phases()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossTerm {
    HiHi,
    HiLo,
    LoHi,
    LoLo,
}

impl CrossTerm {
    pub const ORDER: [Self; 4] = [Self::HiHi, Self::HiLo, Self::LoHi, Self::LoLo];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSchedule(&'static [CrossTerm]);

impl PhaseSchedule {
    pub fn terms(&self) -> &'static [CrossTerm] {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `value = sign * (hi * 2^-(h-1) + lo * 2^-(2h-1)) * 2^exponent`, `h = half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSignificand {
    pub negative: bool,
    pub exponent: i32,
    pub hi: u32,
    pub lo: u32,
    pub half_width: u32,
}

impl SplitSignificand {
    pub fn zero(half_width: u32) -> Self {
        Self { negative: false, exponent: 0, hi: 0, lo: 0, half_width }
    }

    pub fn is_zero(&self) -> bool {
        self.hi == 0 && self.lo == 0
    }

    pub fn sign(&self) -> i32 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    pub fn value(&self) -> f64 {
        let h = self.half_width as i32;
        let s = ((self.hi as u64) << h) | self.lo as u64;
        let v = ldexp(s as f64, self.exponent - (2 * h - 1));
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Bits per half for `fmt`: the significand (leading bit explicit) is cut in
/// two equal halves, the upper one keeping the leading bit.
pub fn half_width(fmt: DataFormat) -> u32 {
    fmt.significand_bits().div_ceil(2)
}

pub fn split_significand<T: Real>(x: T, fmt: DataFormat) -> Result<SplitSignificand> {
    let h = half_width(fmt);
    let xf = x.to_f64_exact();
    let Some(d) = decompose(xf) else { return Ok(SplitSignificand::zero(h)) };
    // 2h significant bits, leading bit at position 2h-1
    let drop = 53 - 2 * h;
    if d.significand & ((1u64 << drop) - 1) != 0 {
        return Err(Error::NotRepresentable { value: xf, format: fmt.name() });
    }
    let s = d.significand >> drop;
    Ok(SplitSignificand {
        negative: d.negative,
        exponent: d.exponent,
        hi: (s >> h) as u32,
        lo: (s & ((1u64 << h) - 1)) as u32,
        half_width: h,
    })
}

/// Split a run of block floating point elements sharing one exponent.
///
/// Unlike [`split_significand`], elements are not renormalized: each code is
/// cut at fixed bit positions relative to the block's shared exponent, so a
/// small element keeps its leading zeros in `hi`. `values` holds at most one
/// block of decoded elements of `fmt`.
pub fn split_block(values: &[f64], fmt: DataFormat) -> Result<Vec<SplitSignificand>> {
    if !fmt.is_bfp() {
        return values.iter().map(|&v| split_significand(v, fmt)).collect();
    }
    let h = half_width(fmt);
    let mb = fmt.mantissa_bits as i32;
    let parts: Vec<_> = values.iter().map(|&v| decompose(v)).collect();
    let Some(shared) = parts.iter().flatten().map(|d| d.exponent).max() else {
        return Ok(vec![SplitSignificand::zero(h); values.len()]);
    };
    let shared = shared.max(1 - BFP_BIAS);
    let quantum = shared - mb + 1;
    values
        .iter()
        .zip(parts)
        .map(|(&v, part)| {
            let Some(d) = part else { return Ok(SplitSignificand::zero(h)) };
            let shift = (quantum - (d.exponent - 52)) as u32;
            if shift >= 64 || d.significand & ((1u64 << shift) - 1) != 0 {
                return Err(Error::NotRepresentable { value: v, format: fmt.name() });
            }
            // code widened to 2h bits
            let code = (d.significand >> shift) << (2 * h - fmt.mantissa_bits);
            Ok(SplitSignificand {
                negative: d.negative,
                exponent: shared,
                hi: (code >> h) as u32,
                lo: (code & ((1u64 << h) - 1)) as u32,
                half_width: h,
            })
        })
        .collect()
}

/// Split every element of a row-major matrix; block formats group 16
/// consecutive row elements from column 0.
pub fn split_matrix(m: &Dense<f64>, fmt: DataFormat) -> Result<Vec<SplitSignificand>> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        for chunk in m.row(r).chunks(BLOCK_LEN) {
            out.extend(split_block(chunk, fmt)?);
        }
    }
    Ok(out)
}

/// Product of two split operands restricted to the level's cross-terms.
pub fn multiply_split(a: &SplitSignificand, b: &SplitSignificand, level: FidelityLevel) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    debug_assert_eq!(a.half_width, b.half_width);
    let h = a.half_width;
    // all terms on the common scale 2^-(4h-2)
    let mut acc: u64 = 0;
    for term in level.schedule().terms() {
        acc += match term {
            CrossTerm::HiHi => ((a.hi as u64) * (b.hi as u64)) << (2 * h),
            CrossTerm::HiLo => ((a.hi as u64) * (b.lo as u64)) << h,
            CrossTerm::LoHi => ((a.lo as u64) * (b.hi as u64)) << h,
            CrossTerm::LoLo => (a.lo as u64) * (b.lo as u64),
        };
    }
    let v = ldexp(acc as f64, a.exponent + b.exponent - (4 * h as i32 - 2));
    if a.negative != b.negative {
        -v
    } else {
        v
    }
}

pub fn fidelity_multiply<T: Real>(a: T, b: T, fmt: DataFormat, level: FidelityLevel) -> Result<T> {
    let (sa, sb) = (split_significand(a, fmt)?, split_significand(b, fmt)?);
    Ok(T::from_f64_lossy(multiply_split(&sa, &sb, level)))
}

/// Left-to-right sum of fidelity products in the carrier, no intermediate
/// rounding to the element format.
pub fn fidelity_dot<T: Real>(a: &[T], b: &[T], fmt: DataFormat, level: FidelityLevel) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("dot of lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Dimension("dot of empty vectors".into()));
    }
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + fidelity_multiply(x, y, fmt, level)?;
    }
    Ok(acc)
}
