use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Carrier float for decoded elements and accumulation.
///
/// Exactness guarantees (HiFi4 products, wide accumulation) hold for `f64`.
/// With an `f32` carrier the FP32 cross-term sums can exceed the 24-bit
/// significand and are rounded.
pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    const NAME: &'static str;

    /// Distance in units of least precision between two finite values of
    /// this carrier.
    fn ulp_distance(self, other: Self) -> u64;

    fn to_f64_exact(self) -> f64 {
        self.to_f64().expect("float to f64")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 to carrier")
    }
}

fn ordered_bits_f64(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b < 0 {
        i64::MIN - b
    } else {
        b
    }
}

fn ordered_bits_f32(x: f32) -> i32 {
    let b = x.to_bits() as i32;
    if b < 0 {
        i32::MIN - b
    } else {
        b
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn ulp_distance(self, other: Self) -> u64 {
        let (a, b) = (ordered_bits_f64(self), ordered_bits_f64(other));
        (a as i128 - b as i128).unsigned_abs() as u64
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn ulp_distance(self, other: Self) -> u64 {
        let (a, b) = (ordered_bits_f32(self), ordered_bits_f32(other));
        (a as i64 - b as i64).unsigned_abs()
    }
}
