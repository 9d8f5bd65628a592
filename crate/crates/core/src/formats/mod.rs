//! Element encodings: FP32, BF16 and block floating point with 16-element
//! shared-exponent blocks.

mod bfp;
pub(crate) mod bits;
mod quantize;
mod scalar;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use bfp::{decode_bfp, encode_bfp, encode_bfp_with, BfpBlock, EncodeStats, BFP_BIAS, BLOCK_LEN};
pub use quantize::{quantize_matrix, quantize_matrix_with, quantize_values_with};
pub use scalar::{bf16_round, bf16_round_with, fp32_round, fp32_round_with, BF16_MAX};

/// Rounding applied when dropping significand bits.
///
/// Only `NearestEven` is used by the simulator; `TowardZero` exists so the
/// verifier can inject a known-bad quantizer as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    NearestEven,
    TowardZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Fp32,
    Bf16,
    Bfp16,
    Bfp8,
    Bfp4,
}

/// An element format with its storage budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "FormatKind", from = "FormatKind")]
pub struct DataFormat {
    pub kind: FormatKind,
    /// Storage bits per element; excludes the per-block shared exponent.
    pub bits_per_element: u32,
    /// Explicit mantissa bits. Scalar formats exclude the hidden bit; BFP
    /// codes carry their leading bit explicitly.
    pub mantissa_bits: u32,
    pub block_size: u32,
}

impl DataFormat {
    pub const FP32: Self = Self::of(FormatKind::Fp32);
    pub const BF16: Self = Self::of(FormatKind::Bf16);
    pub const BFP16: Self = Self::of(FormatKind::Bfp16);
    pub const BFP8: Self = Self::of(FormatKind::Bfp8);
    pub const BFP4: Self = Self::of(FormatKind::Bfp4);

    pub const ALL: [Self; 5] = [Self::FP32, Self::BF16, Self::BFP16, Self::BFP8, Self::BFP4];

    pub const fn of(kind: FormatKind) -> Self {
        let (bits_per_element, mantissa_bits, block_size) = match kind {
            FormatKind::Fp32 => (32, 23, 1),
            FormatKind::Bf16 => (16, 7, 1),
            FormatKind::Bfp16 => (16, 15, 16),
            FormatKind::Bfp8 => (8, 7, 16),
            FormatKind::Bfp4 => (4, 3, 16),
        };
        Self { kind, bits_per_element, mantissa_bits, block_size }
    }

    pub fn is_bfp(&self) -> bool {
        self.block_size > 1
    }

    /// Significant bits of a normalized value (hidden bit included for scalar
    /// formats).
    pub fn significand_bits(&self) -> u32 {
        if self.is_bfp() {
            self.mantissa_bits
        } else {
            self.mantissa_bits + 1
        }
    }

    /// Bytes needed for `elements` values, including one shared-exponent byte
    /// per started BFP block.
    pub fn bytes_for(&self, elements: u64) -> u64 {
        let payload = (elements * self.bits_per_element as u64).div_ceil(8);
        if self.is_bfp() {
            payload + elements.div_ceil(self.block_size as u64)
        } else {
            payload
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FormatKind::Fp32 => "fp32",
            FormatKind::Bf16 => "bf16",
            FormatKind::Bfp16 => "bfp16",
            FormatKind::Bfp8 => "bfp8",
            FormatKind::Bfp4 => "bfp4",
        }
    }
}

impl From<FormatKind> for DataFormat {
    fn from(kind: FormatKind) -> Self {
        Self::of(kind)
    }
}

impl From<DataFormat> for FormatKind {
    fn from(f: DataFormat) -> Self {
        f.kind
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim().to_ascii_lowercase().as_str() {
            "fp32" => FormatKind::Fp32,
            "bf16" => FormatKind::Bf16,
            "bfp16" => FormatKind::Bfp16,
            "bfp8" => FormatKind::Bfp8,
            "bfp4" => FormatKind::Bfp4,
            other => return Err(Error::Parse(format!("unknown data format {other:?}"))),
        };
        Ok(Self::of(kind))
    }
}
