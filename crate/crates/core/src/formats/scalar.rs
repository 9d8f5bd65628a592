use super::bits::round_to_precision;
use super::Rounding;
use crate::real::Real;

/// Largest finite BF16 magnitude, `(2 - 2^-7) * 2^127`.
pub const BF16_MAX: f64 = 3.389_531_389_251_535_5e38;

fn saturate(r: f64, max: f64) -> f64 {
    if r.abs() > max {
        max.copysign(r)
    } else {
        r
    }
}

/// Round to BF16 (8 exponent bits, 7 explicit mantissa bits), ties to even.
/// Overflow saturates to the largest finite BF16 magnitude.
pub fn bf16_round<T: Real>(x: T) -> T {
    bf16_round_with(x, Rounding::NearestEven)
}

pub fn bf16_round_with<T: Real>(x: T, rounding: Rounding) -> T {
    let r = round_to_precision(x.to_f64_exact(), 8, -126, rounding);
    T::from_f64_lossy(saturate(r, BF16_MAX))
}

/// Round to IEEE binary32, ties to even, saturating on overflow.
pub fn fp32_round<T: Real>(x: T) -> T {
    fp32_round_with(x, Rounding::NearestEven)
}

pub fn fp32_round_with<T: Real>(x: T, rounding: Rounding) -> T {
    let r = round_to_precision(x.to_f64_exact(), 24, -126, rounding);
    T::from_f64_lossy(saturate(r, f32::MAX as f64))
}
