mod common;

use gridmm::formats::{bf16_round, decode_bfp, encode_bfp, fp32_round, quantize_matrix, BFP_BIAS};
use gridmm::oracle::{bf16_round_ref, bfp_block_ref, fp32_round_ref, quantize_ref};
use gridmm::{DataFormat, Matrix};
use proptest::prelude::*;

fn block() -> impl Strategy<Value = [f64; 16]> {
    prop::array::uniform16(common::spread_value())
}

fn any_format() -> impl Strategy<Value = DataFormat> {
    prop::sample::select(DataFormat::ALL.to_vec())
}

fn bfp_format() -> impl Strategy<Value = DataFormat> {
    prop::sample::select(vec![DataFormat::BFP16, DataFormat::BFP8, DataFormat::BFP4])
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.as_slice().len() as f64
}

proptest! {
    #[test]
    fn scalar_rounding_matches_reference(x in common::spread_value()) {
        prop_assert_eq!(bf16_round(x), bf16_round_ref(x));
        prop_assert_eq!(fp32_round(x), fp32_round_ref(x));
    }

    #[test]
    fn bfp_matches_reference(v in block(), fmt in bfp_format()) {
        let b = encode_bfp(&v, fmt).unwrap();
        let (expect, exp) = bfp_block_ref(&v, fmt);
        prop_assert_eq!(decode_bfp::<f64>(&b, fmt).to_vec(), expect);
        prop_assert_eq!(b.shared_exponent as i32, exp);
    }

    #[test]
    fn per_block_error_bound(v in block(), fmt in bfp_format()) {
        let b = encode_bfp(&v, fmt).unwrap();
        let d = decode_bfp::<f64>(&b, fmt);
        let bound = 2f64.powi(b.shared_exponent as i32 - BFP_BIAS - fmt.mantissa_bits as i32);
        for (x, y) in v.iter().zip(&d) {
            prop_assert!((x - y).abs() <= bound, "{x} -> {y}, bound {bound}");
        }
    }

    #[test]
    fn sign_preserved(v in block(), fmt in bfp_format()) {
        let d = decode_bfp::<f64>(&encode_bfp(&v, fmt).unwrap(), fmt);
        for (x, y) in v.iter().zip(&d) {
            prop_assert!(*y == 0.0 || x.signum() == y.signum());
        }
    }

    #[test]
    fn decode_encode_idempotent(v in block(), fmt in bfp_format()) {
        let d = decode_bfp::<f64>(&encode_bfp(&v, fmt).unwrap(), fmt);
        let again = decode_bfp::<f64>(&encode_bfp(&d, fmt).unwrap(), fmt);
        prop_assert_eq!(d, again);
    }

    #[test]
    fn quantize_idempotent(m in common::matrix(40, 40), fmt in any_format()) {
        let q = quantize_matrix(&m, fmt).unwrap();
        prop_assert_eq!(&quantize_matrix(&q, fmt).unwrap(), &q);
        prop_assert_eq!(&q, &quantize_ref(&m, fmt));
    }

    #[test]
    fn format_error_ordering(m in common::matrix(24, 48)) {
        let m = quantize_matrix(&m, DataFormat::FP32).unwrap();
        let errs: Vec<f64> = [DataFormat::FP32, DataFormat::BF16, DataFormat::BFP8, DataFormat::BFP4]
            .iter()
            .map(|f| mse(&m, &quantize_matrix(&m, *f).unwrap()))
            .collect();
        prop_assert_eq!(errs[0], 0.0);
        prop_assert!(errs.windows(2).all(|w| w[0] <= w[1]), "{errs:?}");
    }

    #[test]
    fn block_locality(m in common::matrix(4, 64), r in 0usize..4, c in 0usize..64, v in common::spread_value(), fmt in bfp_format()) {
        let (r, c) = (r % m.rows(), c % m.cols());
        let mut changed = m.clone();
        changed.set(r, c, v);
        let (q0, q1) = (quantize_matrix(&m, fmt).unwrap(), quantize_matrix(&changed, fmt).unwrap());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if i != r || j / 16 != c / 16 {
                    prop_assert_eq!(q0.get(i, j), q1.get(i, j));
                }
            }
        }
    }
}

#[test]
fn bf16_to_bfp8_relative_error_on_narrow_blocks() {
    // every 16-element block spans at most two octaves: [2^e, 2^(e+2))
    let raw = common::uniform(32, 32, 11);
    let m = Matrix::from_fn(32, 32, |r, c| {
        let e = ((r * 2 + c / 16) % 9) as i32 - 4;
        let v = raw.get(r, c);
        (1.0 + 1.5 * v.abs()) * v.signum() * 2f64.powi(e)
    });
    let m = quantize_matrix(&m, DataFormat::BF16).unwrap();
    let q = quantize_matrix(&m, DataFormat::BFP8).unwrap();
    for (x, y) in m.as_slice().iter().zip(q.as_slice()) {
        assert!((x - y).abs() <= x.abs() * 2f64.powi(-6), "{x} vs {y}");
    }
}
