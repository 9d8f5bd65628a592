use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gridmm::costmodel::{try_calibrate, CalibrationTargets, DeviceProfile};
use gridmm::formats::Rounding;
use gridmm::simengine::NamedConfig;
use gridmm::{CoreGrid, KernelVariant};
use gridmm_cli::{
    firstrun_rows, run_rows, speedup_rows, verify, ExperimentSpec, FirstRunRow, Placement, ResultRow, SpeedupRow,
    VerifyOptions,
};

const RUN_COLUMNS: &str = "CSV columns: size, config, fmt_in, fidelity, grid, kernel, memory, status, t_kernel_us, \
t_run_us, tflops, efficiency_pct, watts, tflops_per_watt, frobenius_error. status is ok, infeasible (inputs do not \
fit in L1) or invalid (kernel and placement do not combine); non-ok rows leave the numeric columns empty.";

const SPEEDUP_COLUMNS: &str =
    "CSV columns: size, config, kernel, memory, grid, cores, status, used_grid, t_run_us, speedup.";

const FIRSTRUN_COLUMNS: &str = "CSV columns: size, config, grid, run, status, t_compile_us, t_transfer_us, \
t_tiling_us, t_run_us, t_total_us, transfer_share. Two rows per cell: run = first, then warm.";

/// Tiled matmul simulator for a Tensix-style core grid.
#[derive(Parser)]
#[command(name = "gridmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep sizes and configurations; one CSV row per cell.
    #[command(after_help = RUN_COLUMNS)]
    Run(SweepArgs),
    /// Speedup over a single core for each grid.
    #[command(after_help = SPEEDUP_COLUMNS)]
    Speedup(SweepArgs),
    /// First-run versus warm-run time breakdown.
    #[command(after_help = FIRSTRUN_COLUMNS)]
    Firstrun(SweepArgs),
    /// Check numerics against the double-precision oracle.
    Verify(VerifyArgs),
    /// Fit the cost model to a targets file and write the fitted profile.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct Common {
    /// Device profile JSON (a calibration output also works).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Square problem sizes n (an n x n by n x n product).
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "256,512,1024,2048,4096")]
    sizes: Vec<usize>,
    /// Configurations such as "BF16 M2" or bfp8:lofi.
    #[arg(long, value_delimiter = ',', default_value = "FP32 M4,BF16 M4,BF16 M2,BFP8 M2,BFP8 M0,BFP4 M0",
          value_parser = parse_with::<NamedConfig>)]
    configs: Vec<NamedConfig>,
    /// Core grids as XxY; speedup defaults to 1x1 through 8x8.
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<CoreGrid>)]
    grid: Vec<CoreGrid>,
    /// Kernel variants: interleaved or reuse_multicast.
    #[arg(long, value_delimiter = ',', default_value = "interleaved", value_parser = parse_with::<KernelVariant>)]
    kernel: Vec<KernelVariant>,
    /// Placement of the first input: interleaved_dram, interleaved_l1 (both
    /// inputs) or sharded[:height|width|block[:row_major|col_major]].
    #[arg(long, value_delimiter = ',', default_value = "interleaved_dram", value_parser = parse_with::<Placement>)]
    memory: Vec<Placement>,
    /// Seed of the Gaussian operands.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Operands are already on the device: no host transfer.
    #[arg(long)]
    resident: bool,
    /// Largest size whose error is measured against the oracle.
    #[arg(long, default_value_t = 512)]
    oracle_max_size: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,256")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Quantize with truncation instead of nearest-even.
    #[arg(long, hide = true)]
    inject_fault: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Targets JSON; the built-in published targets when omitted.
    targets: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn parse_with<T: std::str::FromStr<Err = gridmm::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: gridmm::Error| e.to_string())
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self::Runtime(e.into())
    }
}

fn usage<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn load_profile(common: &Common) -> Result<DeviceProfile, Failure> {
    match &common.profile {
        Some(p) => usage(DeviceProfile::load(p).map_err(Into::into)),
        None => Ok(DeviceProfile::default()),
    }
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn spec_of(args: &SweepArgs, default_grids: Vec<CoreGrid>) -> ExperimentSpec {
    ExperimentSpec {
        sizes: args.sizes.clone(),
        configs: args.configs.clone(),
        grids: if args.grid.is_empty() { default_grids } else { args.grid.clone() },
        memories: args.memory.clone(),
        kernels: args.kernel.clone(),
        seed: args.seed,
        resident: args.resident,
        oracle_max_size: args.oracle_max_size,
    }
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    let eight = CoreGrid { x: 8, y: 8 };
    match cli.command {
        Command::Run(args) => {
            let profile = load_profile(&args.common)?;
            let rows = run_rows(&spec_of(&args, vec![eight]), &profile)?;
            with_output(args.common.out.as_deref(), |w| ResultRow::write_all(&rows, w))?;
            let infeasible = rows.iter().filter(|r| r.status != "ok").count();
            eprintln!("{} rows, {infeasible} not run", rows.len());
        }
        Command::Speedup(args) => {
            let profile = load_profile(&args.common)?;
            let squares = (1..=8).map(|s| CoreGrid { x: s, y: s }).collect();
            let rows = speedup_rows(&spec_of(&args, squares), &profile)?;
            with_output(args.common.out.as_deref(), |w| SpeedupRow::write_all(&rows, w))?;
        }
        Command::Firstrun(args) => {
            let profile = load_profile(&args.common)?;
            let rows = firstrun_rows(&spec_of(&args, vec![eight]), &profile)?;
            with_output(args.common.out.as_deref(), |w| FirstRunRow::write_all(&rows, w))?;
        }
        Command::Verify(args) => {
            let profile = load_profile(&args.common)?;
            let rounding = if args.inject_fault { Rounding::TowardZero } else { Rounding::NearestEven };
            let checks = verify(&VerifyOptions { sizes: args.sizes, seed: args.seed, rounding }, &profile);
            with_output(args.common.out.as_deref(), |w| {
                for c in &checks {
                    writeln!(w, "{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                }
                Ok(())
            })?;
            return Ok(checks.iter().all(|c| c.pass));
        }
        Command::Calibrate(args) => {
            let base = match &args.common.profile {
                Some(p) => usage(DeviceProfile::load(p).map_err(Into::into))?,
                None => DeviceProfile::base(),
            };
            let targets = match &args.targets {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    usage(CalibrationTargets::from_json(&text).with_context(|| format!("parsing {}", p.display())))?
                }
                None => CalibrationTargets::published(),
            };
            let cal = try_calibrate(&targets, &base)?;
            let doc = serde_json::json!({
                "converged": cal.converged(),
                "profile": cal.profile,
                "residuals": cal.residuals,
            });
            with_output(args.common.out.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &doc)?;
                writeln!(w)?;
                Ok(())
            })?;
            for r in cal.failures() {
                eprintln!(
                    "residual {} out of tolerance: target {}, model {:.4}, error {:.4} > {}",
                    r.name, r.target, r.model, r.error, r.tolerance
                );
            }
            return Ok(cal.converged());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
