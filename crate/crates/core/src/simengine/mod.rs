//! Tiled matmul over a core grid: numeric result plus the work and traffic
//! counts the cost model consumes.

mod exec;
mod traffic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmodel::DeviceProfile;
use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::formats::DataFormat;
use crate::memory::{CoreCoord, CoreGrid, MemoryConfig};

pub use crate::oracle::matmul_reference;
pub use exec::{matmul_sim, matmul_sim_matrices};
pub use traffic::{plan, traffic_model, work_partition, Traffic, WorkPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// Every core streams its operand panels from memory, no sharing.
    InterleavedMultiCore,
    /// One operand stays in the cores' L1, the other is multicast.
    ReuseMulticast,
}

impl KernelVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::InterleavedMultiCore => "interleaved",
            Self::ReuseMulticast => "reuse_multicast",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "interleaved" | "interleaved_multi_core" | "default" => Ok(Self::InterleavedMultiCore),
            "reuse_multicast" | "reuse" | "optimized" => Ok(Self::ReuseMulticast),
            other => Err(Error::Parse(format!("unknown kernel variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatmulConfig {
    pub fmt_in: DataFormat,
    pub fmt_out: DataFormat,
    pub fidelity: FidelityLevel,
    pub grid: CoreGrid,
    pub mem_in0: MemoryConfig,
    pub mem_in1: MemoryConfig,
    pub mem_out: MemoryConfig,
    pub kernel: KernelVariant,
}

impl MatmulConfig {
    /// Both inputs and the output interleaved in DRAM, default kernel.
    pub fn interleaved(fmt_in: DataFormat, fidelity: FidelityLevel, grid: CoreGrid) -> Self {
        Self {
            fmt_in,
            fmt_out: default_output_format(fmt_in),
            fidelity,
            grid,
            mem_in0: MemoryConfig::InterleavedDram,
            mem_in1: MemoryConfig::InterleavedDram,
            mem_out: MemoryConfig::InterleavedDram,
            kernel: KernelVariant::InterleavedMultiCore,
        }
    }

    /// First input block-sharded over `grid`, reuse-multicast kernel.
    pub fn sharded_reuse(fmt_in: DataFormat, fidelity: FidelityLevel, grid: CoreGrid) -> Self {
        Self {
            mem_in0: MemoryConfig::block_sharded(grid),
            kernel: KernelVariant::ReuseMulticast,
            ..Self::interleaved(fmt_in, fidelity, grid)
        }
    }

    /// The same configuration on another grid; sharded placements follow.
    pub fn with_grid(&self, grid: CoreGrid) -> Self {
        let regrid = |m: MemoryConfig| match m {
            MemoryConfig::Sharded { strategy, orientation, .. } => {
                MemoryConfig::Sharded { strategy, orientation, grid }
            }
            other => other,
        };
        Self {
            grid,
            mem_in0: regrid(self.mem_in0),
            mem_in1: regrid(self.mem_in1),
            mem_out: regrid(self.mem_out),
            ..*self
        }
    }

    /// Index (0 or 1) of the input kept stationary by the reuse kernel.
    pub fn stationary_input(&self) -> Option<usize> {
        if self.mem_in0.is_sharded() {
            Some(0)
        } else if self.mem_in1.is_sharded() {
            Some(1)
        } else {
            None
        }
    }

    pub fn validate(&self, profile: &DeviceProfile) -> Result<()> {
        self.grid.validate(profile.total_cores)?;
        for m in [self.mem_in0, self.mem_in1, self.mem_out] {
            if let MemoryConfig::Sharded { grid, .. } = m {
                if grid != self.grid {
                    return Err(Error::Config(format!("shard grid {grid} differs from compute grid {}", self.grid)));
                }
            }
        }
        if self.kernel == KernelVariant::ReuseMulticast && self.stationary_input().is_none() {
            return Err(Error::Config("reuse_multicast needs one input sharded in L1".into()));
        }
        Ok(())
    }
}

/// Output format used when none is given: FP32 stays FP32, everything else
/// packs to BF16.
pub fn default_output_format(fmt_in: DataFormat) -> DataFormat {
    if fmt_in == DataFormat::FP32 {
        DataFormat::FP32
    } else {
        DataFormat::BF16
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub tile_matmuls: u64,
    pub fidelity_phases: u64,
    pub dram_bytes_read: u64,
    pub dram_bytes_written: u64,
    pub noc_multicast_bytes: u64,
    pub l1_bytes_read: u64,
    /// Output tiles computed by each core of the grid (idle cores map to 0).
    pub per_core_tile_counts: BTreeMap<CoreCoord, u64>,
    /// K-dimension length in tiles.
    pub k_tiles: u64,
}

impl ExecStats {
    pub fn max_core_tiles(&self) -> u64 {
        self.per_core_tile_counts.values().copied().max().unwrap_or(0)
    }

    pub fn active_cores(&self) -> usize {
        self.per_core_tile_counts.values().filter(|&&c| c > 0).count()
    }

    pub fn output_tiles(&self) -> u64 {
        self.per_core_tile_counts.values().sum()
    }

    pub fn dram_bytes(&self) -> u64 {
        self.dram_bytes_read + self.dram_bytes_written
    }
}

/// An input format and fidelity pair, named like `BF16 M2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NamedConfig {
    pub fmt: DataFormat,
    pub fidelity: FidelityLevel,
}

impl NamedConfig {
    pub const fn new(fmt: DataFormat, fidelity: FidelityLevel) -> Self {
        Self { fmt, fidelity }
    }

    /// The six benchmark configurations, slowest first.
    pub const TABLE: [Self; 6] = [
        Self::new(DataFormat::FP32, FidelityLevel::HiFi4),
        Self::new(DataFormat::BF16, FidelityLevel::HiFi4),
        Self::new(DataFormat::BF16, FidelityLevel::HiFi2),
        Self::new(DataFormat::BFP8, FidelityLevel::HiFi2),
        Self::new(DataFormat::BFP8, FidelityLevel::LoFi),
        Self::new(DataFormat::BFP4, FidelityLevel::LoFi),
    ];

    pub fn name(&self) -> String {
        let m = match self.fidelity {
            FidelityLevel::LoFi => 0,
            FidelityLevel::HiFi2 => 2,
            FidelityLevel::HiFi3 => 3,
            FidelityLevel::HiFi4 => 4,
        };
        format!("{} M{m}", self.fmt.name().to_ascii_uppercase())
    }

    pub fn interleaved(&self, grid: CoreGrid) -> MatmulConfig {
        MatmulConfig::interleaved(self.fmt, self.fidelity, grid)
    }
}

impl fmt::Display for NamedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for NamedConfig {
    type Err = Error;

    /// Accepts `BF16 M2`, `bf16_m2`, `bf16-hifi2` or `bf16:hifi2`.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().chars().map(|c| if matches!(c, ' ' | '_' | '-') { ':' } else { c }).collect();
        let (f, l) = norm
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("configuration {s:?} is not of the form FORMAT:FIDELITY")))?;
        Ok(Self::new(f.parse()?, l.trim_start_matches(':').parse()?))
    }
}
