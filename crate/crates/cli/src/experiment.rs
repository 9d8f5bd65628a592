use std::io::Write;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use gridmm::costmodel::{cost_report, flops, kernel_time, speedup_curve, DeviceProfile};
use gridmm::memory::{ShardOrientation, ShardStrategy};
use gridmm::oracle::matmul_reference;
use gridmm::simengine::{matmul_sim_matrices, plan, NamedConfig};
use gridmm::{CoreGrid, Error, KernelVariant, MatmulConfig, Matrix, MemoryConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Where the first input lives; the second input and the output stay in
/// DRAM unless the placement is `interleaved_l1`, which moves both inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Dram,
    L1,
    Sharded { strategy: ShardStrategy, orientation: ShardOrientation },
}

impl Placement {
    pub fn apply(self, cfg: &mut MatmulConfig) {
        match self {
            Self::Dram => {}
            Self::L1 => {
                cfg.mem_in0 = MemoryConfig::InterleavedL1;
                cfg.mem_in1 = MemoryConfig::InterleavedL1;
            }
            Self::Sharded { strategy, orientation } => {
                cfg.mem_in0 = MemoryConfig::Sharded { strategy, orientation, grid: cfg.grid };
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Self::Dram => "interleaved_dram".into(),
            Self::L1 => "interleaved_l1".into(),
            Self::Sharded { strategy, orientation } => {
                MemoryConfig::Sharded { strategy, orientation, grid: CoreGrid::SINGLE }.name()
            }
        }
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> gridmm::Result<Self> {
        Ok(match MemoryConfig::parse(s, CoreGrid::SINGLE)? {
            MemoryConfig::InterleavedDram => Self::Dram,
            MemoryConfig::InterleavedL1 => Self::L1,
            MemoryConfig::Sharded { strategy, orientation, .. } => Self::Sharded { strategy, orientation },
        })
    }
}

/// One experiment: the cross product of every list, square `n^3` products.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sizes: Vec<usize>,
    pub configs: Vec<NamedConfig>,
    pub grids: Vec<CoreGrid>,
    pub memories: Vec<Placement>,
    pub kernels: Vec<KernelVariant>,
    pub seed: u64,
    /// Operands already on the device, so nothing is transferred.
    pub resident: bool,
    /// Largest size whose numeric error is measured against the oracle.
    pub oracle_max_size: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            sizes: vec![256, 512, 1024, 2048, 4096],
            configs: NamedConfig::TABLE.to_vec(),
            grids: vec![CoreGrid { x: 8, y: 8 }],
            memories: vec![Placement::Dram],
            kernels: vec![KernelVariant::InterleavedMultiCore],
            seed: 0,
            resident: false,
            oracle_max_size: 512,
        }
    }
}

impl ExperimentSpec {
    pub fn matmul_config(&self, c: NamedConfig, grid: CoreGrid, mem: Placement, kernel: KernelVariant) -> MatmulConfig {
        let mut cfg = c.interleaved(grid);
        cfg.kernel = kernel;
        mem.apply(&mut cfg);
        cfg
    }

    /// Deterministic Gaussian operands for one size.
    pub fn operands(&self, n: usize) -> (Matrix, Matrix) {
        let gen = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(((n as u64) << 1) | stream);
            Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))
        };
        (gen(0), gen(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub size: usize,
    pub config: NamedConfig,
    pub grid: CoreGrid,
    pub kernel: KernelVariant,
    pub memory: String,
    pub status: &'static str,
    pub t_kernel_us: Option<f64>,
    pub t_run_us: Option<f64>,
    pub tflops: Option<f64>,
    pub efficiency_pct: Option<f64>,
    pub watts: Option<f64>,
    pub tflops_per_watt: Option<f64>,
    pub frobenius_error: Option<f64>,
}

impl ResultRow {
    pub const HEADER: [&'static str; 15] = [
        "size",
        "config",
        "fmt_in",
        "fidelity",
        "grid",
        "kernel",
        "memory",
        "status",
        "t_kernel_us",
        "t_run_us",
        "tflops",
        "efficiency_pct",
        "watts",
        "tflops_per_watt",
        "frobenius_error",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.size.to_string(),
            self.config.name(),
            self.config.fmt.name().into(),
            self.config.fidelity.name().into(),
            self.grid.to_string(),
            self.kernel.name().into(),
            self.memory.clone(),
            self.status.into(),
            fixed(self.t_kernel_us, 3),
            fixed(self.t_run_us, 3),
            fixed(self.tflops, 4),
            fixed(self.efficiency_pct, 3),
            fixed(self.watts, 3),
            fixed(self.tflops_per_watt, 4),
            self.frobenius_error.map(|e| format!("{e:.6e}")).unwrap_or_default(),
        ]
    }
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

fn status_of(e: &Error) -> Option<&'static str> {
    match e {
        Error::InfeasibleShard(_) => Some("infeasible"),
        Error::Config(_) => Some("invalid"),
        _ => None,
    }
}

/// Frobenius distance of the simulated product to the exact product of the
/// unquantized operands, for every (size, config) small enough to check.
fn numeric_errors(spec: &ExperimentSpec, profile: &DeviceProfile) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for &n in &spec.sizes {
        if n == 0 || n > spec.oracle_max_size {
            out.extend(spec.configs.iter().map(|_| None));
            continue;
        }
        let (a, b) = spec.operands(n);
        let exact = matmul_reference(&a, &b)?;
        for c in &spec.configs {
            let (got, _) = matmul_sim_matrices(&a, &b, &c.interleaved(CoreGrid::SINGLE), profile)?;
            out.push(Some(got.frobenius_distance(&exact)?));
        }
    }
    Ok(out)
}

fn run_cell(
    n: usize,
    cfg: &MatmulConfig,
    profile: &DeviceProfile,
    resident: bool,
) -> Result<std::result::Result<gridmm::costmodel::CostReport, &'static str>> {
    let stats = match plan(n, n, n, cfg, profile) {
        Ok(s) => s,
        Err(e) => return status_of(&e).map(Err).ok_or_else(|| e.into()),
    };
    let r = cost_report((n, n, n), cfg, &stats, profile, resident)?;
    // the emitted throughput must respect the roofline it came from
    let kt = kernel_time(cfg, &stats, profile);
    let peak = profile.grid_peak_tflops(cfg.fmt_in, cfg.fidelity, cfg.grid.cores());
    let implied = flops(n, n, n) / kt.total() / 1e12;
    if kt.total() < kt.roofline() || r.tflops > peak * (1.0 + 1e-9) || (implied - r.tflops).abs() > 1e-9 * implied {
        bail!("{n}^3 {}: {:.4} TFLOPs breaks the roofline bound (peak {peak:.4})", cfg.fmt_in, r.tflops);
    }
    Ok(Ok(r))
}

/// One row per size, config, grid, memory placement and kernel, in that
/// nesting order.
pub fn run_rows(spec: &ExperimentSpec, profile: &DeviceProfile) -> Result<Vec<ResultRow>> {
    let errors = numeric_errors(spec, profile)?;
    let mut cells = Vec::new();
    for (si, &n) in spec.sizes.iter().enumerate() {
        for (ci, &c) in spec.configs.iter().enumerate() {
            for &g in &spec.grids {
                for &mem in &spec.memories {
                    for &kernel in &spec.kernels {
                        cells.push((n, c, g, mem, kernel, errors[si * spec.configs.len() + ci]));
                    }
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(n, c, g, mem, kernel, err)| {
            let cfg = spec.matmul_config(c, g, mem, kernel);
            let cell = run_cell(n, &cfg, profile, spec.resident)?;
            let mut row = ResultRow {
                size: n,
                config: c,
                grid: g,
                kernel,
                memory: mem.name(),
                status: "ok",
                t_kernel_us: None,
                t_run_us: None,
                tflops: None,
                efficiency_pct: None,
                watts: None,
                tflops_per_watt: None,
                frobenius_error: err,
            };
            match cell {
                Ok(r) => {
                    row.t_kernel_us = Some(r.t_kernel.as_secs_f64() * 1e6);
                    row.t_run_us = Some(r.t_run().as_secs_f64() * 1e6);
                    row.tflops = Some(r.tflops);
                    row.efficiency_pct = Some(r.efficiency_pct);
                    row.watts = Some(r.watts);
                    row.tflops_per_watt = Some(r.tflops_per_watt);
                }
                Err(status) => {
                    row.status = status;
                    row.frobenius_error = None;
                }
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub size: usize,
    pub config: NamedConfig,
    pub kernel: KernelVariant,
    pub memory: String,
    pub grid: CoreGrid,
    pub status: &'static str,
    pub used_grid: Option<CoreGrid>,
    pub t_run_us: Option<f64>,
    pub speedup: Option<f64>,
}

impl SpeedupRow {
    pub const HEADER: [&'static str; 10] =
        ["size", "config", "kernel", "memory", "grid", "cores", "status", "used_grid", "t_run_us", "speedup"];

    fn record(&self) -> Vec<String> {
        vec![
            self.size.to_string(),
            self.config.name(),
            self.kernel.name().into(),
            self.memory.clone(),
            self.grid.to_string(),
            self.grid.cores().to_string(),
            self.status.into(),
            self.used_grid.map(|g| g.to_string()).unwrap_or_default(),
            fixed(self.t_run_us, 3),
            fixed(self.speedup, 4),
        ]
    }
}

/// Host-observed speedup over one core for every grid of the spec.
pub fn speedup_rows(spec: &ExperimentSpec, profile: &DeviceProfile) -> Result<Vec<SpeedupRow>> {
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        for &c in &spec.configs {
            for &mem in &spec.memories {
                for &kernel in &spec.kernels {
                    let cfg = spec.matmul_config(c, CoreGrid::SINGLE, mem, kernel);
                    let row = |grid, status| SpeedupRow {
                        size: n,
                        config: c,
                        kernel,
                        memory: mem.name(),
                        grid,
                        status,
                        used_grid: None,
                        t_run_us: None,
                        speedup: None,
                    };
                    match speedup_curve((n, n, n), &cfg, &spec.grids, profile) {
                        Ok(points) => rows.extend(points.into_iter().map(|p| SpeedupRow {
                            used_grid: Some(p.used_grid),
                            t_run_us: Some(p.t_run * 1e6),
                            speedup: Some(p.speedup),
                            ..row(p.grid, "ok")
                        })),
                        Err(e) => {
                            let status = status_of(&e).ok_or(e)?;
                            rows.extend(spec.grids.iter().map(|&g| row(g, status)));
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstRunRow {
    pub size: usize,
    pub config: NamedConfig,
    pub grid: CoreGrid,
    pub run: &'static str,
    pub status: &'static str,
    pub t_compile_us: Option<f64>,
    pub t_transfer_us: Option<f64>,
    pub t_tiling_us: Option<f64>,
    pub t_run_us: Option<f64>,
    pub t_total_us: Option<f64>,
    pub transfer_share: Option<f64>,
}

impl FirstRunRow {
    pub const HEADER: [&'static str; 11] = [
        "size",
        "config",
        "grid",
        "run",
        "status",
        "t_compile_us",
        "t_transfer_us",
        "t_tiling_us",
        "t_run_us",
        "t_total_us",
        "transfer_share",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.size.to_string(),
            self.config.name(),
            self.grid.to_string(),
            self.run.into(),
            self.status.into(),
            fixed(self.t_compile_us, 3),
            fixed(self.t_transfer_us, 3),
            fixed(self.t_tiling_us, 3),
            fixed(self.t_run_us, 3),
            fixed(self.t_total_us, 3),
            fixed(self.transfer_share, 4),
        ]
    }
}

/// First and warm run of every cell, split into compile, transfer, tiling
/// and run time. Kernel and placement use the first entry of each list.
pub fn firstrun_rows(spec: &ExperimentSpec, profile: &DeviceProfile) -> Result<Vec<FirstRunRow>> {
    let mem = spec.memories.first().copied().unwrap_or(Placement::Dram);
    let kernel = spec.kernels.first().copied().unwrap_or(KernelVariant::InterleavedMultiCore);
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        for &c in &spec.configs {
            for &g in &spec.grids {
                let cfg = spec.matmul_config(c, g, mem, kernel);
                let blank = |run| FirstRunRow {
                    size: n,
                    config: c,
                    grid: g,
                    run,
                    status: "ok",
                    t_compile_us: None,
                    t_transfer_us: None,
                    t_tiling_us: None,
                    t_run_us: None,
                    t_total_us: None,
                    transfer_share: None,
                };
                match run_cell(n, &cfg, profile, spec.resident)? {
                    Ok(r) => {
                        let us = |d: std::time::Duration| Some(d.as_secs_f64() * 1e6);
                        for (run, compile, total) in [
                            ("first", r.t_compile, r.t_total_first_run),
                            ("warm", std::time::Duration::ZERO, r.t_total_warm),
                        ] {
                            rows.push(FirstRunRow {
                                t_compile_us: us(compile),
                                t_transfer_us: us(r.t_transfer),
                                t_tiling_us: us(r.t_tiling),
                                t_run_us: us(r.t_run()),
                                t_total_us: us(total),
                                transfer_share: Some(r.t_transfer.as_secs_f64() / total.as_secs_f64()),
                                ..blank(run)
                            });
                        }
                    }
                    Err(status) => {
                        rows.extend(["first", "warm"].map(|run| FirstRunRow { status, ..blank(run) }));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Header plus records, LF line endings.
pub fn write_csv<W: Write>(out: W, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush().context("writing csv")?;
    Ok(())
}

impl ResultRow {
    pub fn write_all<W: Write>(rows: &[Self], out: W) -> Result<()> {
        write_csv(out, &Self::HEADER, rows.iter().map(Self::record))
    }
}

impl SpeedupRow {
    pub fn write_all<W: Write>(rows: &[Self], out: W) -> Result<()> {
        write_csv(out, &Self::HEADER, rows.iter().map(Self::record))
    }
}

impl FirstRunRow {
    pub fn write_all<W: Write>(rows: &[Self], out: W) -> Result<()> {
        write_csv(out, &Self::HEADER, rows.iter().map(Self::record))
    }
}
