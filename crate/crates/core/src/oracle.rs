//! Reference implementations used to cross-check the bit-level code paths.
//!
//! Everything here works on plain `f64` arithmetic (logarithms, power-of-two
//! scaling, `round_ties_even`) rather than on integer significands, so an
//! error in the bit manipulation of [`crate::formats`] or
//! [`crate::fidelity`] does not cancel out against the same error here.

use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::formats::{DataFormat, FormatKind, BF16_MAX};
use crate::matrix::Dense;
use crate::real::Real;

/// `floor(log2(|x|))` for nonzero finite `x`, corrected for `log2` rounding.
pub fn exponent_of(x: f64) -> i32 {
    let a = x.abs();
    let mut e = a.log2().floor() as i32;
    while 2f64.powi(e) > a {
        e -= 1;
    }
    while 2f64.powi(e + 1) <= a {
        e += 1;
    }
    e
}

fn round_to_grid(x: f64, significant_bits: i32, min_exp: i32, max_mag: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let e = exponent_of(x).max(min_exp);
    let q = 2f64.powi(e - significant_bits + 1);
    let r = (x / q).round_ties_even() * q;
    if r.abs() > max_mag {
        max_mag.copysign(x)
    } else {
        r
    }
}

pub fn bf16_round_ref(x: f64) -> f64 {
    round_to_grid(x, 8, -126, BF16_MAX)
}

pub fn fp32_round_ref(x: f64) -> f64 {
    round_to_grid(x, 24, -126, f32::MAX as f64)
}

/// Reference block encoding: returns the decoded values and the biased shared
/// exponent.
pub fn bfp_block_ref(values: &[f64], fmt: DataFormat) -> (Vec<f64>, i32) {
    assert!(fmt.is_bfp(), "{fmt} is not a block format");
    let mb = fmt.mantissa_bits as i32;
    let limit = 2f64.powi(mb);
    let Some(max_e) = values.iter().filter(|v| **v != 0.0).map(|v| exponent_of(*v)).max() else {
        return (vec![0.0; values.len()], 0);
    };
    let mut e = max_e.clamp(-126, 127);
    loop {
        let q = 2f64.powi(e - mb + 1);
        let codes: Vec<f64> = values.iter().map(|v| (v.abs() / q).round_ties_even()).collect();
        if e < 127 && codes.iter().any(|c| *c >= limit) {
            e += 1;
            continue;
        }
        let out = values
            .iter()
            .zip(codes)
            .map(|(v, c)| {
                let c = c.min(limit - 1.0);
                if c == 0.0 {
                    0.0
                } else {
                    (c * q).copysign(*v)
                }
            })
            .collect();
        return (out, e + 127);
    }
}

pub fn round_ref(x: f64, fmt: DataFormat) -> f64 {
    match fmt.kind {
        FormatKind::Fp32 => fp32_round_ref(x),
        FormatKind::Bf16 => bf16_round_ref(x),
        _ => bfp_block_ref(&[x], fmt).0[0],
    }
}

/// Reference quantizer: row-wise 16-element blocks from column 0.
pub fn quantize_ref(m: &Dense<f64>, fmt: DataFormat) -> Dense<f64> {
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        if fmt.is_bfp() {
            for chunk in row.chunks(16) {
                data.extend(bfp_block_ref(chunk, fmt).0);
            }
        } else {
            data.extend(row.iter().map(|&v| round_ref(v, fmt)));
        }
    }
    Dense::from_vec(m.rows(), m.cols(), data).expect("shape preserved")
}

/// Reference fidelity product: splits each significand in `[1, 2)` into an
/// upper part truncated to `h` bits and the remainder.
pub fn fidelity_multiply_ref(a: f64, b: f64, fmt: DataFormat, level: FidelityLevel) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let h = fmt.significand_bits().div_ceil(2) as i32;
    let split = |x: f64| {
        let e = exponent_of(x);
        let s = x.abs() / 2f64.powi(e);
        let scale = 2f64.powi(h - 1);
        let hi = (s * scale).floor() / scale;
        (hi, s - hi, e)
    };
    let (ah, al, ea) = split(a);
    let (bh, bl, eb) = split(b);
    let terms = [ah * bh, ah * bl, al * bh, al * bl];
    let sum: f64 = terms[..level.phases() as usize].iter().sum();
    let v = sum * 2f64.powi(ea + eb);
    if (a < 0.0) != (b < 0.0) {
        -v
    } else {
        v
    }
}

/// Plain double-precision product, `k` summed left to right.
pub fn matmul_reference<T: Real>(a: &Dense<T>, b: &Dense<T>) -> Result<Dense<T>> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let bt = b.transpose();
    Ok(Dense::from_fn(m, n, |i, j| {
        let (ra, cb) = (a.row(i), bt.row(j));
        let mut acc = 0.0f64;
        for p in 0..k {
            acc += ra[p].to_f64_exact() * cb[p].to_f64_exact();
        }
        T::from_f64_lossy(acc)
    }))
}
