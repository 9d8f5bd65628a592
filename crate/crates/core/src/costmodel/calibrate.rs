//! Fitting the free constants of a [`DeviceProfile`] to measured targets.
//!
//! Fit order: compile constants and the tiling line are set directly; the
//! per-phase tile cycles from the optimized-kernel efficiency; the block
//! format unpack factor from the block-format throughput (backed off until
//! the benchmark configurations stay strictly ordered); host dispatch by
//! minimax relative error over the kernel timings; the host link bandwidth
//! from the warm transfer share; per-core power from the TFLOPs/W point.

use serde::{Deserialize, Serialize};

use super::{best_run_time, cost_report, efficiency, host_run_time, kernel_time, tflops, DeviceProfile};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::formats::DataFormat;
use crate::memory::CoreGrid;
use crate::simengine::{plan, MatmulConfig, NamedConfig};

const PUBLISHED_TARGETS: &str = include_str!("../../assets/calibration_targets.json");

/// Relative margin kept between consecutive benchmark configurations.
const ORDER_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizedTarget {
    pub size: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigTarget {
    pub config: String,
    pub size: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareTarget {
    pub sizes: Vec<usize>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// Measured values to fit. Every field is optional; absent targets leave the
/// corresponding constants of the base profile untouched.
///
/// Sizes are square `n x n x n` products on `grid` (8x8 when absent).
/// `kernel_us`, `speedup` and `transfer_share` refer to BF16 HiFi4 with both
/// inputs interleaved in DRAM; `efficiency_pct` and `tflops_per_watt` to
/// BF16 HiFi2 with the first input block-sharded and the reuse kernel;
/// `config_tflops` to the named configuration, interleaved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    #[serde(default)]
    pub grid: Option<CoreGrid>,
    #[serde(default)]
    pub compile_ms_tiling: Option<f64>,
    #[serde(default)]
    pub compile_ms_matmul: Option<f64>,
    #[serde(default)]
    pub tiling_us: Vec<SizedTarget>,
    #[serde(default)]
    pub kernel_us: Vec<SizedTarget>,
    #[serde(default)]
    pub config_tflops: Vec<ConfigTarget>,
    #[serde(default)]
    pub efficiency_pct: Option<SizedTarget>,
    #[serde(default)]
    pub speedup: Option<SizedTarget>,
    #[serde(default)]
    pub transfer_share: Option<ShareTarget>,
    #[serde(default)]
    pub tflops_per_watt: Option<SizedTarget>,
}

impl CalibrationTargets {
    pub fn published() -> Self {
        Self::from_json(PUBLISHED_TARGETS).expect("bundled targets parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("calibration targets: {e}")))
    }

    fn grid(&self) -> CoreGrid {
        self.grid.unwrap_or(CoreGrid { x: 8, y: 8 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub target: f64,
    pub model: f64,
    /// Relative error, or the plain difference when `absolute`.
    pub error: f64,
    pub tolerance: f64,
    pub absolute: bool,
    pub pass: bool,
}

impl Residual {
    fn relative(name: String, target: f64, model: f64, tolerance: f64) -> Self {
        let error = model / target - 1.0;
        Self { name, target, model, error, tolerance, absolute: false, pass: error.abs() <= tolerance }
    }

    fn absolute(name: String, target: f64, model: f64, tolerance: f64) -> Self {
        let error = model - target;
        Self { name, target, model, error, tolerance, absolute: true, pass: error.abs() <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub profile: DeviceProfile,
    pub residuals: Vec<Residual>,
}

impl Calibration {
    pub fn converged(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Residual> {
        self.residuals.iter().filter(|r| !r.pass)
    }
}

fn cube(n: usize) -> (usize, usize, usize) {
    (n, n, n)
}

fn default_path(grid: CoreGrid) -> MatmulConfig {
    MatmulConfig::interleaved(DataFormat::BF16, FidelityLevel::HiFi4, grid)
}

fn optimized_path(grid: CoreGrid) -> MatmulConfig {
    MatmulConfig::sharded_reuse(DataFormat::BF16, FidelityLevel::HiFi2, grid)
}

/// Device throughput of one configuration.
pub(crate) fn model_tflops(n: usize, cfg: &MatmulConfig, p: &DeviceProfile) -> Result<f64> {
    let stats = plan(n, n, n, cfg, p)?;
    Ok(tflops(n, n, n, kernel_time(cfg, &stats, p).total()))
}

fn model_efficiency(n: usize, grid: CoreGrid, p: &DeviceProfile) -> Result<f64> {
    let t = model_tflops(n, &optimized_path(grid), p)?;
    Ok(efficiency(t, DataFormat::BF16, FidelityLevel::HiFi2, p))
}

fn device_seconds(n: usize, cfg: &MatmulConfig, p: &DeviceProfile) -> Result<f64> {
    Ok(kernel_time(cfg, &plan(n, n, n, cfg, p)?, p).total())
}

fn mean_transfer_share(sizes: &[usize], grid: CoreGrid, p: &DeviceProfile) -> Result<f64> {
    let cfg = default_path(grid);
    let mut sum = 0.0;
    for &n in sizes {
        sum += cost_report(cube(n), &cfg, &plan(n, n, n, &cfg, p)?, p, false)?.transfer_share_warm();
    }
    Ok(sum / sizes.len().max(1) as f64)
}

fn model_tflops_per_watt(n: usize, grid: CoreGrid, p: &DeviceProfile) -> Result<f64> {
    let cfg = optimized_path(grid);
    Ok(cost_report(cube(n), &cfg, &plan(n, n, n, &cfg, p)?, p, false)?.tflops_per_watt)
}

/// Throughputs of the benchmark configurations at size `n`, slowest first.
pub(crate) fn table_tflops(n: usize, grid: CoreGrid, p: &DeviceProfile) -> Result<Vec<f64>> {
    NamedConfig::TABLE.iter().map(|c| model_tflops(n, &c.interleaved(grid), p)).collect()
}

fn strictly_ordered(values: &[f64], margin: f64) -> bool {
    values.windows(2).all(|w| w[0] * (1.0 + margin) < w[1])
}

/// Root of a monotone `f` on `[lo, hi]`, bisected in log space.
fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let increasing = f(hi)? > f(lo)?;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if (f(mid)? < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

fn calib_err(what: &str, e: Error) -> Error {
    Error::Calibration(format!("{what}: {e}"))
}

/// Fit `base` to `targets`.
///
/// Returns the fitted profile with one residual per target; a fit whose
/// residuals exceed their tolerances is still returned, see
/// [`Calibration::converged`].
pub fn try_calibrate(targets: &CalibrationTargets, base: &DeviceProfile) -> Result<Calibration> {
    let grid = targets.grid();
    let mut p = base.clone();

    if let Some(v) = targets.compile_ms_tiling {
        p.compile_ms_tiling = v;
    }
    if let Some(v) = targets.compile_ms_matmul {
        p.compile_ms_matmul = v;
    }

    // tiling line through the targets (least squares in element count)
    match targets.tiling_us.as_slice() {
        [] => {}
        [one] => {
            let e = (one.size * one.size) as f64;
            p.tiling.fixed_us = (one.value - p.tiling.ns_per_element * 1e-3 * e).max(0.0);
        }
        many => {
            let xs: Vec<f64> = many.iter().map(|t| (t.size * t.size) as f64).collect();
            let n = xs.len() as f64;
            let (mx, my) = (xs.iter().sum::<f64>() / n, many.iter().map(|t| t.value).sum::<f64>() / n);
            let sxy: f64 = xs.iter().zip(many).map(|(x, t)| (x - mx) * (t.value - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let slope_us = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            p.tiling.ns_per_element = (slope_us * 1e3).max(0.0);
            p.tiling.fixed_us = (my - slope_us * mx).max(0.0);
        }
    }

    if let Some(t) = &targets.efficiency_pct {
        p.cycles_per_tile_phase = bisect(1e-3, 1e5, |c| {
            let q = DeviceProfile { cycles_per_tile_phase: c, ..p.clone() };
            Ok(model_efficiency(t.size, grid, &q)? - t.value)
        })
        .map_err(|e| calib_err("efficiency target", e))?;
    }

    let block_target = targets
        .config_tflops
        .iter()
        .map(|t| Ok((t, t.config.parse::<NamedConfig>()?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .find(|(_, c)| c.fmt.is_bfp());
    if let Some((t, named)) = block_target {
        let cfg = named.interleaved(grid);
        let with_factor = |f: f64| {
            let mut q = p.clone();
            q.format_factors.bfp = f;
            q
        };
        let mut f = bisect(1e-3, 1e2, |f| Ok(model_tflops(t.size, &cfg, &with_factor(f))? - t.value))
            .map_err(|e| calib_err("block format target", e))?;
        // back off until every configuration is clearly faster than the last
        let fitted = f;
        while !strictly_ordered(&table_tflops(t.size, grid, &with_factor(f))?, ORDER_MARGIN) {
            f -= 1e-3;
            if f <= 1e-3 {
                f = fitted;
                break;
            }
        }
        p.format_factors.bfp = f;
    }

    if !targets.kernel_us.is_empty() {
        let cfg = default_path(grid);
        let points: Vec<(f64, f64)> = targets
            .kernel_us
            .iter()
            .map(|t| Ok((device_seconds(t.size, &cfg, &p)? * 1e6, t.value)))
            .collect::<Result<_>>()?;
        let worst = |d: f64| points.iter().map(|(m, y)| ((d + m) / y - 1.0).abs()).fold(0.0, f64::max);
        // convex in d: ternary search
        let (mut lo, mut hi) = (0.0, points.iter().map(|p| p.1).fold(0.0, f64::max));
        for _ in 0..300 {
            let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if worst(a) <= worst(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        p.dispatch_us = (lo + hi) / 2.0;
    }

    if let Some(t) = &targets.transfer_share {
        p.pcie_bw_gbps = bisect(1e-4, 1e4, |bw| {
            let q = DeviceProfile { pcie_bw_gbps: bw, ..p.clone() };
            Ok(mean_transfer_share(&t.sizes, grid, &q)? - t.value)
        })
        .map_err(|e| calib_err("transfer share target", e))?;
    }

    if let Some(t) = &targets.tflops_per_watt {
        let cfg = optimized_path(grid);
        let stats = plan(t.size, t.size, t.size, &cfg, &p).map_err(|e| calib_err("TFLOPs/W target", e))?;
        let secs = kernel_time(&cfg, &stats, &p).total();
        let watts = tflops(t.size, t.size, t.size, secs) / t.value;
        let traffic = p.power.watts_per_gbps * stats.dram_bytes() as f64 / secs / 1e9;
        p.power.watts_per_core = ((watts - p.power.idle_watts - traffic) / stats.active_cores() as f64).max(0.0);
    }

    p.validate()?;
    let residuals = residuals(targets, &p)?;
    Ok(Calibration { profile: p, residuals })
}

/// [`try_calibrate`] for targets known to be evaluable.
///
/// # Panics
/// If a target names an infeasible configuration.
pub fn calibrate(targets: &CalibrationTargets, base: &DeviceProfile) -> Calibration {
    try_calibrate(targets, base).expect("calibration targets are evaluable")
}

fn residuals(t: &CalibrationTargets, p: &DeviceProfile) -> Result<Vec<Residual>> {
    let grid = t.grid();
    let mut out = Vec::new();
    if let Some(v) = t.compile_ms_tiling {
        out.push(Residual::absolute("compile_ms_tiling".into(), v, p.compile_ms_tiling, 0.0));
    }
    if let Some(v) = t.compile_ms_matmul {
        out.push(Residual::absolute("compile_ms_matmul".into(), v, p.compile_ms_matmul, 0.0));
    }
    for s in &t.tiling_us {
        let model = super::tiling_time((s.size * s.size) as u64, p).as_secs_f64() * 1e6;
        out.push(Residual::relative(format!("tiling_us@{}", s.size), s.value, model, s.tolerance.unwrap_or(0.2)));
    }
    for s in &t.kernel_us {
        let cfg = default_path(grid);
        let kt = kernel_time(&cfg, &plan(s.size, s.size, s.size, &cfg, p)?, p);
        let model = host_run_time(&kt, p) * 1e6;
        out.push(Residual::relative(format!("kernel_us@{}", s.size), s.value, model, s.tolerance.unwrap_or(0.2)));
    }
    let mut order_sizes = Vec::new();
    for s in &t.config_tflops {
        let named: NamedConfig = s.config.parse()?;
        let model = model_tflops(s.size, &named.interleaved(grid), p)?;
        out.push(Residual::relative(
            format!("tflops[{named}]@{}", s.size),
            s.value,
            model,
            s.tolerance.unwrap_or(0.15),
        ));
        if !order_sizes.contains(&s.size) {
            order_sizes.push(s.size);
        }
    }
    for n in order_sizes {
        let ordered = strictly_ordered(&table_tflops(n, grid, p)?, 0.0);
        out.push(Residual::absolute(format!("table_order@{n}"), 1.0, if ordered { 1.0 } else { 0.0 }, 0.0));
    }
    if let Some(s) = &t.efficiency_pct {
        let model = model_efficiency(s.size, grid, p)?;
        out.push(Residual::absolute(format!("efficiency_pct@{}", s.size), s.value, model, s.tolerance.unwrap_or(5.0)));
    }
    if let Some(s) = &t.speedup {
        let cfg = default_path(grid);
        let single = cfg.with_grid(CoreGrid::SINGLE);
        let t1 = host_run_time(&kernel_time(&single, &plan(s.size, s.size, s.size, &single, p)?, p), p);
        let (_, tg) = best_run_time(cube(s.size), &cfg, grid, p)?;
        out.push(Residual::relative(
            format!("speedup@{}x{}", s.size, grid.cores()),
            s.value,
            t1 / tg,
            s.tolerance.unwrap_or(0.1),
        ));
    }
    if let Some(s) = &t.transfer_share {
        let model = mean_transfer_share(&s.sizes, grid, p)?;
        out.push(Residual::absolute("transfer_share".into(), s.value, model, s.tolerance.unwrap_or(0.1)));
    }
    if let Some(s) = &t.tflops_per_watt {
        let model = model_tflops_per_watt(s.size, grid, p)?;
        out.push(Residual::relative(format!("tflops_per_watt@{}", s.size), s.value, model, s.tolerance.unwrap_or(0.1)));
    }
    Ok(out)
}
