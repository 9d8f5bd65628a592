use std::collections::BTreeMap;
use std::ops::Range;

use super::{ExecStats, KernelVariant, MatmulConfig};
use crate::costmodel::DeviceProfile;
use crate::error::{Error, Result};
use crate::formats::DataFormat;
use crate::memory::{l1_capacity_check, shard, split_even, CoreCoord, CoreGrid, MemoryConfig, TILE};

/// Output tile block `(tile rows, tile cols)` owned by each core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkPartition {
    pub blocks: BTreeMap<CoreCoord, (Range<usize>, Range<usize>)>,
}

impl WorkPartition {
    pub fn tile_counts(&self) -> BTreeMap<CoreCoord, u64> {
        self.blocks.iter().map(|(c, (r, k))| (*c, (r.len() * k.len()) as u64)).collect()
    }

    pub fn tiles(&self, core: CoreCoord) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (r, c) = self.blocks.get(&core).cloned().unwrap_or((0..0, 0..0));
        r.flat_map(move |i| c.clone().map(move |j| (i, j)))
    }
}

/// Contiguous 2-D blocks: core `(x, y)` owns tile-row band `y` and tile-column
/// band `x`, earlier bands taking the remainder.
pub fn work_partition(mt: usize, nt: usize, grid: CoreGrid) -> WorkPartition {
    let rows = split_even(mt, grid.y);
    let cols = split_even(nt, grid.x);
    let mut blocks = BTreeMap::new();
    for (y, r) in rows.iter().enumerate() {
        for (x, c) in cols.iter().enumerate() {
            blocks.insert(CoreCoord::new(x, y), (r.clone(), c.clone()));
        }
    }
    WorkPartition { blocks }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub dram_bytes_read: u64,
    pub dram_bytes_written: u64,
    pub noc_multicast_bytes: u64,
    pub l1_bytes_read: u64,
}

impl Traffic {
    fn read_from(&mut self, mem: MemoryConfig, bytes: u64) {
        if mem.is_dram() {
            self.dram_bytes_read += bytes;
        } else {
            self.l1_bytes_read += bytes;
        }
    }
}

fn tile_bytes(fmt: DataFormat, tiles: usize) -> u64 {
    fmt.bytes_for((tiles * TILE * TILE) as u64)
}

/// Bytes moved by the kernel for an `m x k` by `k x n` product.
pub fn traffic_model(cfg: &MatmulConfig, (m, n, k): (usize, usize, usize)) -> Traffic {
    let (mt, nt, kt) = (m.div_ceil(TILE), n.div_ceil(TILE), k.div_ceil(TILE));
    let mut t = Traffic::default();
    match cfg.kernel {
        KernelVariant::InterleavedMultiCore => {
            // each busy core fetches its own A row panel and B column panel
            for (rows, cols) in work_partition(mt, nt, cfg.grid).blocks.values() {
                if rows.is_empty() || cols.is_empty() {
                    continue;
                }
                t.read_from(cfg.mem_in0, tile_bytes(cfg.fmt_in, rows.len() * kt));
                t.read_from(cfg.mem_in1, tile_bytes(cfg.fmt_in, cols.len() * kt));
            }
        }
        KernelVariant::ReuseMulticast => {
            let a = tile_bytes(cfg.fmt_in, mt * kt);
            let b = tile_bytes(cfg.fmt_in, kt * nt);
            let (stationary, moving, moving_mem) = match cfg.stationary_input() {
                Some(1) => (b, a, cfg.mem_in0),
                _ => (a, b, cfg.mem_in1),
            };
            // the stationary shards are read in place and multicast along the
            // grid rows; the moving operand is fetched once and multicast
            // down the columns
            t.l1_bytes_read += stationary;
            t.read_from(moving_mem, moving);
            t.noc_multicast_bytes += stationary + moving;
        }
    }
    if cfg.mem_out.is_dram() {
        t.dram_bytes_written = tile_bytes(cfg.fmt_out, mt * nt);
    }
    t
}

/// Validate a configuration for the given problem and count its work and
/// traffic without computing any numbers.
pub fn plan(m: usize, n: usize, k: usize, cfg: &MatmulConfig, profile: &DeviceProfile) -> Result<ExecStats> {
    cfg.validate(profile)?;
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::Dimension(format!("empty product {m}x{k} by {k}x{n}")));
    }
    for (mem, shape, which) in [(cfg.mem_in0, (m, k), "first"), (cfg.mem_in1, (k, n), "second")] {
        if mem.is_sharded() {
            let spec = shard(shape, &mem, cfg.fmt_in)?;
            let verdict = l1_capacity_check(&spec, profile);
            if !verdict.pass {
                return Err(Error::InfeasibleShard(format!(
                    "{which} input shard of {} bytes does not fit {} usable L1 bytes",
                    verdict.max_shard_bytes, verdict.usable_bytes
                )));
            }
        }
    }
    let (mt, nt, kt) = (m.div_ceil(TILE), n.div_ceil(TILE), k.div_ceil(TILE));
    let tile_matmuls = (mt * nt * kt) as u64;
    let t = traffic_model(cfg, (m, n, k));
    Ok(ExecStats {
        tile_matmuls,
        fidelity_phases: tile_matmuls * cfg.fidelity.phases() as u64,
        dram_bytes_read: t.dram_bytes_read,
        dram_bytes_written: t.dram_bytes_written,
        noc_multicast_bytes: t.noc_multicast_bytes,
        l1_bytes_read: t.l1_bytes_read,
        per_core_tile_counts: work_partition(mt, nt, cfg.grid).tile_counts(),
        k_tiles: kt as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::FidelityLevel;

    fn grid(x: usize, y: usize) -> CoreGrid {
        CoreGrid::new(x, y).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = work_partition(64, 64, grid(8, 8));
        assert!(p.tile_counts().values().all(|&c| c == 64));
        let p = work_partition(5, 3, grid(1, 1));
        assert_eq!(p.tile_counts()[&CoreCoord::new(0, 0)], 15);
        let counts = work_partition(1, 1, grid(8, 8)).tile_counts();
        assert_eq!(counts.values().filter(|&&c| c == 1).count(), 1);
        assert_eq!(counts.values().filter(|&&c| c == 0).count(), 63);
    }

    #[test]
    fn interleaved_traffic_counts_panel_fetches() {
        let bf = DataFormat::BF16;
        let one = MatmulConfig::interleaved(bf, FidelityLevel::HiFi4, grid(1, 1));
        let t = traffic_model(&one, (256, 256, 256));
        assert_eq!(t.dram_bytes_read, 2 * 256 * 256 * 2);
        let full = MatmulConfig::interleaved(bf, FidelityLevel::HiFi4, grid(8, 8));
        let t = traffic_model(&full, (2048, 2048, 2048));
        let ab = 2048 * 2048 * 2;
        assert_eq!(t.dram_bytes_read, 8 * ab + 8 * ab);
        assert_eq!(t.dram_bytes_written, ab);
    }

    #[test]
    fn reuse_traffic() {
        let cfg = MatmulConfig::sharded_reuse(DataFormat::BF16, FidelityLevel::HiFi2, grid(8, 8));
        let t = traffic_model(&cfg, (2048, 2048, 2048));
        let ab = 2048 * 2048 * 2;
        assert_eq!(t.dram_bytes_read, ab);
        assert_eq!(t.l1_bytes_read, ab);
        assert_eq!(t.noc_multicast_bytes, 2 * ab);
    }

    #[test]
    fn plan_rejects_oversized_shards() {
        let p = DeviceProfile::default();
        let cfg = MatmulConfig::sharded_reuse(DataFormat::BF16, FidelityLevel::HiFi2, grid(8, 8));
        assert!(plan(2048, 2048, 2048, &cfg, &p).is_ok());
        assert!(matches!(plan(4096, 4096, 4096, &cfg, &p), Err(Error::InfeasibleShard(_))));
        let mut bad = cfg;
        bad.mem_in0 = MemoryConfig::InterleavedDram;
        assert!(matches!(plan(64, 64, 64, &bad, &p), Err(Error::Config(_))));
    }

    #[test]
    fn stats_invariants() {
        let p = DeviceProfile::default();
        let cfg = MatmulConfig::interleaved(DataFormat::BFP8, FidelityLevel::HiFi3, grid(3, 2));
        let s = plan(100, 70, 40, &cfg, &p).unwrap();
        assert_eq!(s.tile_matmuls, 4 * 3 * 2);
        assert_eq!(s.fidelity_phases, s.tile_matmuls * 3);
        assert_eq!(s.output_tiles(), 12);
        assert_eq!(s.max_core_tiles(), 2);
    }
}
