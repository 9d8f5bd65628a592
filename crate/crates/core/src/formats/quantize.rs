use super::bfp::{decode_bfp, encode_bfp_with, EncodeStats, BLOCK_LEN};
use super::scalar::{bf16_round_with, fp32_round_with};
use super::{DataFormat, FormatKind, Rounding};
use crate::error::Result;
use crate::matrix::Dense;
use crate::real::Real;

/// Snap every element to the nearest value of `fmt`.
///
/// BFP blocks are 16 consecutive elements of a row starting at column 0, so
/// each 32-wide tile row holds exactly two blocks. Columns past the end of a
/// row act as zero padding.
pub fn quantize_matrix<T: Real>(m: &Dense<T>, fmt: DataFormat) -> Result<Dense<T>> {
    quantize_matrix_with(m, fmt, Rounding::NearestEven).map(|(q, _)| q)
}

pub fn quantize_matrix_with<T: Real>(
    m: &Dense<T>,
    fmt: DataFormat,
    rounding: Rounding,
) -> Result<(Dense<T>, EncodeStats)> {
    m.check_finite()?;
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    let mut stats = EncodeStats::default();
    for r in 0..m.rows() {
        stats.merge(quantize_values_with(m.row(r), fmt, rounding, &mut out)?);
    }
    Ok((Dense::from_vec(m.rows(), m.cols(), out)?, stats))
}

/// Quantize one row, appending the result to `out`.
pub fn quantize_values_with<T: Real>(
    row: &[T],
    fmt: DataFormat,
    rounding: Rounding,
    out: &mut Vec<T>,
) -> Result<EncodeStats> {
    let mut stats = EncodeStats::default();
    match fmt.kind {
        FormatKind::Fp32 => out.extend(row.iter().map(|&v| fp32_round_with(v, rounding))),
        FormatKind::Bf16 => out.extend(row.iter().map(|&v| bf16_round_with(v, rounding))),
        FormatKind::Bfp16 | FormatKind::Bfp8 | FormatKind::Bfp4 => {
            for chunk in row.chunks(BLOCK_LEN) {
                let mut vals = [T::zero(); BLOCK_LEN];
                vals[..chunk.len()].copy_from_slice(chunk);
                let (block, s) = encode_bfp_with(&vals, fmt, rounding)?;
                stats.merge(s);
                out.extend_from_slice(&decode_bfp::<T>(&block, fmt)[..chunk.len()]);
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    #[test]
    fn fp32_values_pass_through() {
        let m = Matrix::from_fn(3, 5, |r, c| (r as f32 * 0.3 - c as f32 * 1.7) as f64);
        assert_eq!(quantize_matrix(&m, DataFormat::FP32).unwrap(), m);
    }

    #[test]
    fn ones_row_unchanged_in_bfp8() {
        let m = Matrix::filled(1, 16, 1.0);
        assert_eq!(quantize_matrix(&m, DataFormat::BFP8).unwrap(), m);
    }

    #[test]
    fn blocks_do_not_straddle_rows() {
        // a large value in row 0 must not coarsen row 1
        let mut m = Matrix::filled(2, 16, 1.0 + 2f64.powi(-6));
        m.set(0, 0, 1024.0);
        let q = quantize_matrix(&m, DataFormat::BFP8).unwrap();
        assert_eq!(q.get(1, 3), 1.0 + 2f64.powi(-6));
        assert_eq!(q.get(0, 3), 0.0);
    }

    #[test]
    fn partial_trailing_block() {
        let m = Matrix::from_fn(1, 20, |_, c| if c < 16 { 1.0 } else { 0.375 });
        let q = quantize_matrix(&m, DataFormat::BFP4).unwrap();
        assert_eq!(q.get(0, 19), 0.375);
        assert_eq!(q.cols(), 20);
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_fn(2, 2, |r, c| if r == 1 && c == 1 { f64::INFINITY } else { 0.0 });
        assert!(quantize_matrix(&m, DataFormat::BF16).is_err());
    }
}
