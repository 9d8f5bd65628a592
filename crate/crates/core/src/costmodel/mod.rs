//! Analytical timing, throughput, power and energy of a simulated matmul.

mod calibrate;
mod profile;
mod reference;

use std::time::Duration;

use serde::Serialize;

pub use calibrate::{
    calibrate, try_calibrate, Calibration, CalibrationTargets, ConfigTarget, Residual, ShareTarget, SizedTarget,
};
pub use profile::{DeviceProfile, FormatFactors, PowerModel, TilingModel};
pub use reference::{compare_devices, ComparisonRow, PeakBasis, ReferenceDevice, SimulatedResult};

use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::formats::DataFormat;
use crate::memory::CoreGrid;
use crate::simengine::{plan, ExecStats, MatmulConfig};

/// Seconds to an exact nanosecond duration.
pub fn duration(seconds: f64) -> Duration {
    Duration::from_nanos((seconds.max(0.0) * 1e9).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Compute,
    Memory,
}

/// On-device kernel time split into its roofline terms, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelTime {
    pub compute: f64,
    pub memory: f64,
    pub launch: f64,
}

impl KernelTime {
    pub fn roofline(&self) -> f64 {
        self.compute.max(self.memory)
    }

    pub fn total(&self) -> f64 {
        self.launch + self.roofline()
    }

    pub fn bound(&self) -> Bound {
        if self.compute >= self.memory {
            Bound::Compute
        } else {
            Bound::Memory
        }
    }
}

/// Roofline kernel time: the busiest core's tile work against the bytes the
/// dataflow moves through DRAM, the NoC and the cores' L1s.
pub fn kernel_time(cfg: &MatmulConfig, stats: &ExecStats, profile: &DeviceProfile) -> KernelTime {
    let cycles = stats.max_core_tiles() as f64
        * stats.k_tiles as f64
        * profile.cycles_per_tile_phase
        * cfg.fidelity.phases() as f64
        * profile.format_factors.of(cfg.fmt_in);
    let l1_bw = profile.l1_bw_gbps_per_core * stats.active_cores().max(1) as f64;
    let memory = stats.dram_bytes_read as f64 / (profile.dram_bw_gbps * 1e9)
        + stats.noc_multicast_bytes as f64 / (profile.noc_bw_gbps * 1e9)
        + stats.l1_bytes_read as f64 / (l1_bw * 1e9);
    KernelTime { compute: cycles / profile.clock_hz, memory, launch: profile.launch_latency_us * 1e-6 }
}

pub fn flops(m: usize, n: usize, k: usize) -> f64 {
    2.0 * m as f64 * n as f64 * k as f64
}

pub fn tflops(m: usize, n: usize, k: usize, seconds: f64) -> f64 {
    flops(m, n, k) / seconds / 1e12
}

pub fn transfer_time(bytes: u64, profile: &DeviceProfile) -> Duration {
    duration(bytes as f64 / (profile.pcie_bw_gbps * 1e9))
}

/// Conversion of one `elements`-sized tensor to tile layout.
pub fn tiling_time(elements: u64, profile: &DeviceProfile) -> Duration {
    duration(profile.tiling.fixed_us * 1e-6 + profile.tiling.ns_per_element * 1e-9 * elements as f64)
}

/// Kernel time as seen by the host: dispatch plus device time.
pub fn host_run_time(kernel: &KernelTime, profile: &DeviceProfile) -> f64 {
    profile.dispatch_us * 1e-6 + kernel.total()
}

pub fn efficiency(tflops: f64, fmt: DataFormat, fidelity: FidelityLevel, profile: &DeviceProfile) -> f64 {
    100.0 * tflops / profile.peak_tflops(fmt, fidelity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Power {
    pub watts: f64,
    pub tflops_per_watt: f64,
    pub joules: f64,
}

pub fn power_and_energy(stats: &ExecStats, t_kernel: f64, tflops: f64, profile: &DeviceProfile) -> Result<Power> {
    if t_kernel.is_nan() || t_kernel <= 0.0 {
        return Err(Error::Config(format!("kernel time must be positive, got {t_kernel}")));
    }
    let pm = &profile.power;
    let gbps = stats.dram_bytes() as f64 / t_kernel / 1e9;
    let watts = pm.idle_watts + pm.watts_per_core * stats.active_cores() as f64 + pm.watts_per_gbps * gbps;
    Ok(Power { watts, tflops_per_watt: tflops / watts, joules: watts * t_kernel })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub t_compile: Duration,
    pub t_transfer: Duration,
    pub t_tiling: Duration,
    pub t_dispatch: Duration,
    pub t_kernel: Duration,
    pub t_total_first_run: Duration,
    pub t_total_warm: Duration,
    pub kernel: KernelTime,
    pub tflops: f64,
    pub efficiency_pct: f64,
    pub watts: f64,
    pub tflops_per_watt: f64,
}

impl CostReport {
    /// Host-observed kernel run: dispatch plus device time.
    pub fn t_run(&self) -> Duration {
        self.t_dispatch + self.t_kernel
    }

    pub fn transfer_share_warm(&self) -> f64 {
        self.t_transfer.as_secs_f64() / self.t_total_warm.as_secs_f64()
    }
}

/// Cost of one run from precomputed stats. `resident` marks operands that
/// already live on the device.
pub fn cost_report(
    (m, n, k): (usize, usize, usize),
    cfg: &MatmulConfig,
    stats: &ExecStats,
    profile: &DeviceProfile,
    resident: bool,
) -> Result<CostReport> {
    let kt = kernel_time(cfg, stats, profile);
    let t_kernel = duration(kt.total());
    let tf = tflops(m, n, k, kt.total());
    let power = power_and_energy(stats, kt.total(), tf, profile)?;
    let (a_elems, b_elems) = ((m * k) as u64, (k * n) as u64);
    let t_transfer = if resident {
        Duration::ZERO
    } else {
        transfer_time(cfg.fmt_in.bytes_for(a_elems) + cfg.fmt_in.bytes_for(b_elems), profile)
    };
    let t_tiling = tiling_time(a_elems, profile) + tiling_time(b_elems, profile);
    let t_dispatch = duration(profile.dispatch_us * 1e-6);
    let t_compile = duration(profile.compile_ms_tiling * 1e-3) + duration(profile.compile_ms_matmul * 1e-3);
    let t_total_warm = t_transfer + t_tiling + t_dispatch + t_kernel;
    Ok(CostReport {
        t_compile,
        t_transfer,
        t_tiling,
        t_dispatch,
        t_kernel,
        t_total_first_run: t_total_warm + t_compile,
        t_total_warm,
        kernel: kt,
        tflops: tf,
        efficiency_pct: efficiency(tf, cfg.fmt_in, cfg.fidelity, profile),
        watts: power.watts,
        tflops_per_watt: power.tflops_per_watt,
    })
}

/// First-run and warm-run cost of an `m x k` by `k x n` product. The tiling
/// program compiles once and is reused for the second input.
pub fn first_run_time(
    m: usize,
    n: usize,
    k: usize,
    cfg: &MatmulConfig,
    profile: &DeviceProfile,
    resident: bool,
) -> Result<CostReport> {
    let stats = plan(m, n, k, cfg, profile)?;
    cost_report((m, n, k), cfg, &stats, profile, resident)
}

/// Fastest feasible sub-grid of `grid` and its host-observed run time.
pub fn best_run_time(
    (m, n, k): (usize, usize, usize),
    cfg: &MatmulConfig,
    grid: CoreGrid,
    profile: &DeviceProfile,
) -> Result<(CoreGrid, f64)> {
    let mut best: Option<(CoreGrid, f64)> = None;
    let mut last_err = None;
    for y in 1..=grid.y {
        for x in 1..=grid.x {
            let sub = CoreGrid { x, y };
            let c = cfg.with_grid(sub);
            match plan(m, n, k, &c, profile) {
                Ok(stats) => {
                    let t = host_run_time(&kernel_time(&c, &stats, profile), profile);
                    if best.is_none_or(|(_, bt)| t < bt) {
                        best = Some((sub, t));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config(format!("no feasible sub-grid of {grid}"))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupPoint {
    pub grid: CoreGrid,
    pub cores: usize,
    /// Sub-grid the runtime actually uses.
    pub used_grid: CoreGrid,
    pub t_run: f64,
    pub speedup: f64,
}

/// Host-observed speedup of each grid over a single core. Each grid runs on
/// its fastest sub-grid, so adding cores never slows a problem down.
pub fn speedup_curve(
    (m, n, k): (usize, usize, usize),
    cfg: &MatmulConfig,
    grids: &[CoreGrid],
    profile: &DeviceProfile,
) -> Result<Vec<SpeedupPoint>> {
    let single = cfg.with_grid(CoreGrid::SINGLE);
    let stats = plan(m, n, k, &single, profile)?;
    let t1 = host_run_time(&kernel_time(&single, &stats, profile), profile);
    grids
        .iter()
        .map(|&g| {
            g.validate(profile.total_cores)?;
            let (used, t) = best_run_time((m, n, k), cfg, g, profile)?;
            Ok(SpeedupPoint { grid: g, cores: g.cores(), used_grid: used, t_run: t, speedup: t1 / t })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(x: usize, y: usize) -> CoreGrid {
        CoreGrid::new(x, y).unwrap()
    }

    #[test]
    fn compile_gap_is_exact() {
        let p = DeviceProfile::default();
        for n in [32, 256, 1000, 4096] {
            let cfg = MatmulConfig::interleaved(DataFormat::BF16, FidelityLevel::HiFi4, grid(8, 8));
            let r = first_run_time(n, n, n, &cfg, &p, false).unwrap();
            assert_eq!(r.t_total_first_run - r.t_total_warm, Duration::from_millis(916));
            assert_eq!(r.t_compile, Duration::from_millis(916));
        }
    }

    #[test]
    fn resident_has_no_transfer() {
        let p = DeviceProfile::default();
        let cfg = MatmulConfig::interleaved(DataFormat::BF16, FidelityLevel::HiFi4, grid(8, 8));
        let r = first_run_time(512, 512, 512, &cfg, &p, true).unwrap();
        assert_eq!(r.t_transfer, Duration::ZERO);
        assert_eq!(transfer_time(0, &p), Duration::ZERO);
    }

    #[test]
    fn compute_scales_cubically_and_with_phases() {
        let p = DeviceProfile::default();
        let cfg4 = MatmulConfig::interleaved(DataFormat::BF16, FidelityLevel::HiFi4, grid(8, 8));
        let cfg2 = MatmulConfig { fidelity: FidelityLevel::HiFi2, ..cfg4 };
        let small = kernel_time(&cfg4, &plan(1024, 1024, 1024, &cfg4, &p).unwrap(), &p);
        let big = kernel_time(&cfg4, &plan(2048, 2048, 2048, &cfg4, &p).unwrap(), &p);
        assert!((big.compute / small.compute - 8.0).abs() < 1e-12);
        let half = kernel_time(&cfg2, &plan(2048, 2048, 2048, &cfg2, &p).unwrap(), &p);
        assert!((big.compute / half.compute - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_idle_floor() {
        let p = DeviceProfile::default();
        let pw = power_and_energy(&ExecStats::default(), 1.0, 0.0, &p).unwrap();
        assert_eq!(pw.watts, p.power.idle_watts);
        assert!(power_and_energy(&ExecStats::default(), 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn speedup_single_and_tiny() {
        let p = DeviceProfile::default();
        let cfg = MatmulConfig::interleaved(DataFormat::BF16, FidelityLevel::HiFi4, grid(8, 8));
        let one = speedup_curve((2048, 2048, 2048), &cfg, &[CoreGrid::SINGLE], &p).unwrap();
        assert_eq!(one[0].speedup, 1.0);
        let grids: Vec<_> = (1..=8).map(|s| grid(s, s)).collect();
        let tiny = speedup_curve((32, 32, 32), &cfg, &grids, &p).unwrap();
        assert!(tiny.iter().all(|s| s.speedup == 1.0));
    }
}
