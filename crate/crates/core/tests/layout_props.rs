mod common;

use gridmm::layout::{flatten, page_count, tilize, untilize};
use gridmm::oracle::matmul_reference;
use gridmm::{Layout, Matrix, TensorShape, TileSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tilize_round_trip(m in common::matrix(70, 70)) {
        let t = tilize(&m, TileSpec::default());
        prop_assert_eq!(untilize(&t).unwrap(), m);
    }

    #[test]
    fn tile_count_formula(dims in prop::collection::vec(1usize..300, 1..5)) {
        let shape = TensorShape::new(dims.clone()).unwrap();
        let (m, n) = flatten(&shape);
        prop_assert_eq!(m * n, dims.iter().product::<usize>());
        prop_assert_eq!(page_count(&shape, Layout::Tiled, TileSpec::default()), m.div_ceil(32) * n.div_ceil(32));
        prop_assert_eq!(page_count(&shape, Layout::RowMajor, TileSpec::default()), m);
    }
}

proptest! {
    #[test]
    fn padding_is_zero(m in common::matrix(70, 70)) {
        let t = tilize(&m, TileSpec::default());
        let (pr, pc) = t.padded_shape();
        for r in 0..pr {
            for c in 0..pc {
                if r >= m.rows() || c >= m.cols() {
                    prop_assert_eq!(t.get_padded(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn padded_product_equals_unpadded(a in common::matrix(20, 40), n in 1usize..20, seed in any::<u64>()) {
        let b = common::uniform(a.cols(), n, seed);
        let tile = TileSpec::default();
        let (ta, tb) = (tilize(&a, tile), tilize(&b, tile));
        let (ap, bp) = (ta.padded_shape(), tb.padded_shape());
        let pa = Matrix::from_fn(ap.0, ap.1, |r, c| ta.get_padded(r, c));
        let pb = Matrix::from_fn(bp.0, bp.1, |r, c| tb.get_padded(r, c));
        let full = matmul_reference(&pa, &pb).unwrap();
        let want = matmul_reference(&a, &b).unwrap();
        for r in 0..a.rows() {
            for c in 0..n {
                prop_assert_eq!(full.get(r, c), want.get(r, c));
            }
        }
    }
}
