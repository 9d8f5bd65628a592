use rayon::prelude::*;

use super::{plan, ExecStats, MatmulConfig};
use crate::costmodel::DeviceProfile;
use crate::error::{Error, Result};
use crate::fidelity::{multiply_split, split_matrix};
use crate::formats::quantize_matrix;
use crate::layout::{tilize, untilize, Tensor, TileSpec};
use crate::matrix::Dense;
use crate::real::Real;

fn tiled_operand<T: Real>(t: &Tensor<T>, which: &str) -> Result<Dense<T>> {
    match t {
        Tensor::Tiled(t) => untilize(t),
        Tensor::RowMajor(_) => Err(Error::Layout(format!("{which} matmul operand must be in tile layout"))),
    }
}

/// Run the product on the simulated grid.
///
/// Inputs are quantized to `cfg.fmt_in`, every product goes through the
/// fidelity multiplier, sums run over `k` in ascending order in an `f64`
/// accumulator and the result is rounded once to `cfg.fmt_out`. The order
/// never depends on the grid or kernel, so only the stats change with them.
pub fn matmul_sim<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &MatmulConfig,
    profile: &DeviceProfile,
) -> Result<(Dense<T>, ExecStats)> {
    let a = tiled_operand(a, "first")?;
    let b = tiled_operand(b, "second")?;
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
    let stats = plan(m, n, k, cfg, profile)?;

    let qa = quantize_matrix(&a.map(|v| v.to_f64_exact()), cfg.fmt_in)?;
    let qb = quantize_matrix(&b.map(|v| v.to_f64_exact()), cfg.fmt_in)?;
    // blocks run along the rows of each operand, so B is split before it is
    // transposed into column order
    let sa = split_matrix(&qa, cfg.fmt_in)?;
    let sb = Dense::from_vec(k, n, split_matrix(&qb, cfg.fmt_in)?)?.transpose();
    let sb = sb.as_slice();
    let level = cfg.fidelity;

    let mut acc = vec![0.0f64; m * n];
    acc.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ra = &sa[i * k..(i + 1) * k];
        for (j, out) in row.iter_mut().enumerate() {
            let cb = &sb[j * k..(j + 1) * k];
            let mut s = 0.0f64;
            for (x, y) in ra.iter().zip(cb) {
                s += multiply_split(x, y, level);
            }
            *out = s;
        }
    });
    let packed = quantize_matrix(&Dense::from_vec(m, n, acc)?, cfg.fmt_out)?;
    Ok((packed.map(T::from_f64_lossy), stats))
}

/// Tilize two row-major matrices and run [`matmul_sim`].
pub fn matmul_sim_matrices<T: Real>(
    a: &Dense<T>,
    b: &Dense<T>,
    cfg: &MatmulConfig,
    profile: &DeviceProfile,
) -> Result<(Dense<T>, ExecStats)> {
    let tile = TileSpec::default();
    matmul_sim(&Tensor::Tiled(tilize(a, tile)), &Tensor::Tiled(tilize(b, tile)), cfg, profile)
}
