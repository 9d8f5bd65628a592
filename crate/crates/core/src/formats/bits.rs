use super::Rounding;

/// `|x| = significand * 2^(exponent - 52)` with `significand` in `[2^52, 2^53)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Decomposed {
    pub negative: bool,
    pub exponent: i32,
    pub significand: u64,
}

pub(crate) fn decompose(x: f64) -> Option<Decomposed> {
    if x == 0.0 {
        return None;
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let field = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (exponent, significand) = if field == 0 {
        let lz = frac.leading_zeros() as i32 - 11;
        (-1022 - lz, frac << lz)
    } else {
        (field - 1023, frac | (1u64 << 52))
    };
    Some(Decomposed { negative, exponent, significand })
}

/// Exact `2^n` for any `n` an `f64` can hold.
pub(crate) fn pow2(n: i32) -> f64 {
    if n >= -1022 {
        assert!(n <= 1023, "2^{n} overflows f64");
        f64::from_bits(((n + 1023) as u64) << 52)
    } else {
        assert!(n >= -1074, "2^{n} underflows f64");
        f64::from_bits(1u64 << (n + 1074))
    }
}

/// `x * 2^n` without intermediate overflow or underflow for in-range results.
pub(crate) fn ldexp(x: f64, n: i32) -> f64 {
    let mut x = x;
    let mut n = n;
    while n > 1000 {
        x *= pow2(1000);
        n -= 1000;
    }
    while n < -1000 {
        x *= pow2(-1000);
        n += 1000;
    }
    x * pow2(n)
}

/// Drop the low `shift` bits of `m`.
pub(crate) fn shift_round(m: u64, shift: u32, rounding: Rounding) -> u64 {
    if shift == 0 {
        return m;
    }
    if shift >= 64 {
        // m < 2^53, so the kept part is zero and the remainder is below half.
        return 0;
    }
    let q = m >> shift;
    match rounding {
        Rounding::TowardZero => q,
        Rounding::NearestEven => {
            let rem = m & ((1u64 << shift) - 1);
            let half = 1u64 << (shift - 1);
            if rem > half || (rem == half && q & 1 == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

/// Round to `sig_bits` significant bits with a floor of `min_exp` on the
/// exponent of the leading bit (gradual underflow below it).
pub(crate) fn round_to_precision(x: f64, sig_bits: u32, min_exp: i32, rounding: Rounding) -> f64 {
    let Some(d) = decompose(x) else { return x };
    let quantum = d.exponent.max(min_exp) - (sig_bits as i32 - 1);
    let shift = quantum - (d.exponent - 52);
    if shift <= 0 {
        return x;
    }
    let q = shift_round(d.significand, shift as u32, rounding);
    let mag = ldexp(q as f64, quantum);
    if d.negative {
        -mag
    } else {
        mag
    }
}
