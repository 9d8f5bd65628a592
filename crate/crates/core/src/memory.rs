//! Page and shard placement: round-robin interleaving over banks, and
//! height/width/block sharding over a core grid's L1 memories.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmodel::DeviceProfile;
use crate::error::{Error, Result};
use crate::formats::DataFormat;

pub const TILE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoreCoord {
    pub x: usize,
    pub y: usize,
}

impl CoreCoord {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for CoreCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// `x` columns by `y` rows of cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoreGrid {
    pub x: usize,
    pub y: usize,
}

impl CoreGrid {
    pub const SINGLE: Self = Self { x: 1, y: 1 };

    pub fn new(x: usize, y: usize) -> Result<Self> {
        if x == 0 || y == 0 {
            return Err(Error::Config(format!("empty core grid {x}x{y}")));
        }
        Ok(Self { x, y })
    }

    pub fn cores(&self) -> usize {
        self.x * self.y
    }

    pub fn validate(&self, total_cores: usize) -> Result<()> {
        if self.x == 0 || self.y == 0 || self.cores() > total_cores {
            return Err(Error::Config(format!("grid {self} needs {} cores, device has {total_cores}", self.cores())));
        }
        Ok(())
    }

    /// Cores in the given traversal order.
    pub fn ordered(&self, orientation: ShardOrientation) -> Vec<CoreCoord> {
        let mut out = Vec::with_capacity(self.cores());
        match orientation {
            ShardOrientation::RowMajor => {
                for y in 0..self.y {
                    for x in 0..self.x {
                        out.push(CoreCoord::new(x, y));
                    }
                }
            }
            ShardOrientation::ColMajor => {
                for x in 0..self.x {
                    for y in 0..self.y {
                        out.push(CoreCoord::new(x, y));
                    }
                }
            }
        }
        out
    }

    pub fn contains(&self, other: &CoreGrid) -> bool {
        other.x <= self.x && other.y <= self.y
    }
}

impl fmt::Display for CoreGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.x, self.y)
    }
}

impl FromStr for CoreGrid {
    type Err = Error;

    /// `"8x8"` means 8 columns by 8 rows.
    fn from_str(s: &str) -> Result<Self> {
        let (x, y) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Parse(format!("grid {s:?} is not of the form XxY")))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| Error::Parse(format!("grid {s:?}: {e}")));
        Self::new(parse(x)?, parse(y)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardStrategy {
    Height,
    Width,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardOrientation {
    RowMajor,
    ColMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "placement", rename_all = "snake_case")]
pub enum MemoryConfig {
    InterleavedDram,
    InterleavedL1,
    Sharded { strategy: ShardStrategy, orientation: ShardOrientation, grid: CoreGrid },
}

impl MemoryConfig {
    pub fn block_sharded(grid: CoreGrid) -> Self {
        Self::Sharded { strategy: ShardStrategy::Block, orientation: ShardOrientation::RowMajor, grid }
    }

    pub fn is_sharded(&self) -> bool {
        matches!(self, Self::Sharded { .. })
    }

    pub fn is_dram(&self) -> bool {
        matches!(self, Self::InterleavedDram)
    }

    pub fn name(&self) -> String {
        match self {
            Self::InterleavedDram => "interleaved_dram".into(),
            Self::InterleavedL1 => "interleaved_l1".into(),
            Self::Sharded { strategy, orientation, .. } => {
                let s = match strategy {
                    ShardStrategy::Height => "height",
                    ShardStrategy::Width => "width",
                    ShardStrategy::Block => "block",
                };
                let o = match orientation {
                    ShardOrientation::RowMajor => "row_major",
                    ShardOrientation::ColMajor => "col_major",
                };
                format!("sharded:{s}:{o}")
            }
        }
    }

    /// Parses `interleaved_dram`, `interleaved_l1` or
    /// `sharded[:height|width|block[:row_major|col_major]]`; sharded configs
    /// take `grid`.
    pub fn parse(s: &str, grid: CoreGrid) -> Result<Self> {
        let mut parts = s.trim().split(':');
        match parts.next() {
            Some("interleaved_dram") => Ok(Self::InterleavedDram),
            Some("interleaved_l1") => Ok(Self::InterleavedL1),
            Some("sharded") => {
                let strategy = match parts.next().unwrap_or("block") {
                    "height" => ShardStrategy::Height,
                    "width" => ShardStrategy::Width,
                    "block" => ShardStrategy::Block,
                    o => return Err(Error::Parse(format!("unknown shard strategy {o:?}"))),
                };
                let orientation = match parts.next().unwrap_or("row_major") {
                    "row_major" => ShardOrientation::RowMajor,
                    "col_major" => ShardOrientation::ColMajor,
                    o => return Err(Error::Parse(format!("unknown shard orientation {o:?}"))),
                };
                if parts.next().is_some() {
                    return Err(Error::Parse(format!("trailing fields in memory config {s:?}")));
                }
                Ok(Self::Sharded { strategy, orientation, grid })
            }
            _ => Err(Error::Parse(format!("unknown memory config {s:?}"))),
        }
    }
}

/// Page `i` lives in bank `i mod n_banks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankMap {
    pub n_banks: usize,
    pub banks: Vec<usize>,
}

impl BankMap {
    pub fn bank_of(&self, page: usize) -> usize {
        self.banks[page]
    }

    pub fn bank_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.n_banks];
        for &b in &self.banks {
            loads[b] += 1;
        }
        loads
    }
}

pub fn interleave(pages: usize, n_banks: usize) -> Result<BankMap> {
    if n_banks == 0 {
        return Err(Error::Config("interleaving over zero banks".into()));
    }
    Ok(BankMap { n_banks, banks: (0..pages).map(|p| p % n_banks).collect() })
}

/// Split `n` units into `parts` contiguous ranges, earlier ranges taking the
/// remainder. Ranges past `n` are empty.
pub fn split_even(n: usize, parts: usize) -> Vec<Range<usize>> {
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub core: CoreCoord,
    /// Element ranges in the tile-padded matrix.
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub bytes: u64,
}

impl Shard {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardSpec {
    /// Padded extent of the sharded matrix.
    pub padded: (usize, usize),
    pub shards: Vec<Shard>,
}

impl ShardSpec {
    pub fn max_shard_bytes(&self) -> u64 {
        self.shards.iter().map(|s| s.bytes).max().unwrap_or(0)
    }

    pub fn shard_for(&self, core: CoreCoord) -> Option<&Shard> {
        self.shards.iter().find(|s| s.core == core)
    }
}

/// Partition a matrix (padded to whole tiles) over the L1s of a grid.
///
/// Block sharding cuts rows into `grid.y` bands and columns into `grid.x`
/// bands; row-major orientation gives core `(x, y)` the block in band row
/// `y`, band column `x`. Orientation only changes which core holds which
/// block.
pub fn shard(shape: (usize, usize), cfg: &MemoryConfig, fmt: DataFormat) -> Result<ShardSpec> {
    let MemoryConfig::Sharded { strategy, orientation, grid } = *cfg else {
        return Err(Error::Config(format!("{} is not a sharded placement", cfg.name())));
    };
    let (mt, nt) = (shape.0.div_ceil(TILE), shape.1.div_ceil(TILE));
    let padded = (mt * TILE, nt * TILE);
    if mt == 0 || nt == 0 {
        return Ok(ShardSpec { padded, shards: Vec::new() });
    }
    let cores = grid.ordered(orientation);
    let n = grid.cores();
    let infeasible = |what: &str, tiles: usize, parts: usize| {
        Error::InfeasibleShard(format!("{what}: {tiles} tiles cannot be split over {parts} cores"))
    };
    let blocks: Vec<(Range<usize>, Range<usize>)> = match strategy {
        ShardStrategy::Height => {
            if n > mt {
                return Err(infeasible("height", mt, n));
            }
            split_even(mt, n).into_iter().map(|r| (r, 0..nt)).collect()
        }
        ShardStrategy::Width => {
            if n > nt {
                return Err(infeasible("width", nt, n));
            }
            split_even(nt, n).into_iter().map(|c| (0..mt, c)).collect()
        }
        ShardStrategy::Block => {
            if grid.y > mt {
                return Err(infeasible("block rows", mt, grid.y));
            }
            if grid.x > nt {
                return Err(infeasible("block columns", nt, grid.x));
            }
            let rows = split_even(mt, grid.y);
            let cols = split_even(nt, grid.x);
            rows.iter().flat_map(|r| cols.iter().map(move |c| (r.clone(), c.clone()))).collect()
        }
    };
    // blocks are enumerated row-major; the k-th block goes to the k-th core
    // of the orientation's traversal
    let shards = blocks
        .into_iter()
        .zip(cores)
        .map(|((r, c), core)| {
            let rows = r.start * TILE..r.end * TILE;
            let cols = c.start * TILE..c.end * TILE;
            let bytes = fmt.bytes_for((rows.len() * cols.len()) as u64);
            Shard { core, rows, cols, bytes }
        })
        .collect();
    Ok(ShardSpec { padded, shards })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityVerdict {
    pub pass: bool,
    pub usable_bytes: u64,
    pub max_shard_bytes: u64,
    /// Usable bytes left per core after its shard (negative when over).
    pub headroom: Vec<(CoreCoord, i64)>,
    pub min_headroom: i64,
}

/// A shard fits when it leaves strictly positive headroom in the per-core
/// usable L1 budget.
pub fn l1_capacity_check(spec: &ShardSpec, profile: &DeviceProfile) -> CapacityVerdict {
    let usable = profile.usable_l1_bytes;
    let headroom: Vec<_> = spec.shards.iter().map(|s| (s.core, usable as i64 - s.bytes as i64)).collect();
    let min_headroom = headroom.iter().map(|h| h.1).min().unwrap_or(usable as i64);
    CapacityVerdict {
        pass: min_headroom > 0,
        usable_bytes: usable,
        max_shard_bytes: spec.max_shard_bytes(),
        headroom,
        min_headroom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(x: usize, y: usize) -> CoreGrid {
        CoreGrid::new(x, y).unwrap()
    }

    #[test]
    fn interleave_examples() {
        let m = interleave(8, 8).unwrap();
        assert_eq!(m.bank_loads(), vec![1; 8]);
        assert!(interleave(0, 8).unwrap().banks.is_empty());
        let m = interleave(256, 8).unwrap();
        assert_eq!(m.bank_loads(), vec![32; 8]);
        assert_eq!(m.bank_of(13), 5);
        assert!(interleave(3, 0).is_err());
    }

    #[test]
    fn block_512_on_8x8() {
        let s = shard((512, 512), &MemoryConfig::block_sharded(g(8, 8)), DataFormat::BF16).unwrap();
        assert_eq!(s.shards.len(), 64);
        assert!(s.shards.iter().all(|sh| sh.shape() == (64, 64)));
        let c = s.shard_for(CoreCoord::new(3, 5)).unwrap();
        assert_eq!((c.rows.clone(), c.cols.clone()), (320..384, 192..256));
    }

    #[test]
    fn block_2048_bytes() {
        let s = shard((2048, 2048), &MemoryConfig::block_sharded(g(8, 8)), DataFormat::BF16).unwrap();
        assert_eq!(s.max_shard_bytes(), 256 * 256 * 2);
        assert_eq!(s.max_shard_bytes(), 131072);
    }

    #[test]
    fn single_core_single_tile() {
        for strategy in [ShardStrategy::Height, ShardStrategy::Width, ShardStrategy::Block] {
            let cfg = MemoryConfig::Sharded { strategy, orientation: ShardOrientation::RowMajor, grid: g(1, 1) };
            let s = shard((32, 32), &cfg, DataFormat::BF16).unwrap();
            assert_eq!(s.shards.len(), 1);
            assert_eq!(s.shards[0].shape(), (32, 32));
        }
    }

    #[test]
    fn uneven_height_gives_extra_to_earlier_cores() {
        let cfg = MemoryConfig::Sharded {
            strategy: ShardStrategy::Height,
            orientation: ShardOrientation::RowMajor,
            grid: g(2, 2),
        };
        let s = shard((32 * 6, 64), &cfg, DataFormat::FP32).unwrap();
        let heights: Vec<_> = s.shards.iter().map(|s| s.rows.len() / 32).collect();
        assert_eq!(heights, vec![2, 2, 1, 1]);
        assert_eq!(s.shards[1].core, CoreCoord::new(1, 0));
    }

    #[test]
    fn col_major_orientation_order() {
        let cfg = MemoryConfig::Sharded {
            strategy: ShardStrategy::Width,
            orientation: ShardOrientation::ColMajor,
            grid: g(2, 2),
        };
        let s = shard((32, 128), &cfg, DataFormat::BF16).unwrap();
        let cores: Vec<_> = s.shards.iter().map(|s| s.core).collect();
        assert_eq!(cores, vec![CoreCoord::new(0, 0), CoreCoord::new(0, 1), CoreCoord::new(1, 0), CoreCoord::new(1, 1)]);
    }

    #[test]
    fn too_many_cores_is_infeasible() {
        let err = shard((64, 64), &MemoryConfig::block_sharded(g(8, 8)), DataFormat::BF16).unwrap_err();
        assert!(matches!(err, Error::InfeasibleShard(_)));
        assert!(shard((64, 64), &MemoryConfig::InterleavedDram, DataFormat::BF16).is_err());
    }

    #[test]
    fn capacity_crossover() {
        let p = DeviceProfile::default();
        let cfg = MemoryConfig::block_sharded(g(8, 8));
        let ok = l1_capacity_check(&shard((2048, 2048), &cfg, DataFormat::BF16).unwrap(), &p);
        assert!(ok.pass);
        assert_eq!(ok.min_headroom, 512 * 1024 - 128 * 1024);
        let over = l1_capacity_check(&shard((4096, 4096), &cfg, DataFormat::BF16).unwrap(), &p);
        assert!(!over.pass);
        assert_eq!(over.max_shard_bytes, 512 * 1024);
        let empty = l1_capacity_check(&shard((0, 0), &cfg, DataFormat::BF16).unwrap(), &p);
        assert!(empty.pass);
        assert_eq!(empty.min_headroom, 512 * 1024);
    }

    #[test]
    fn parse_memory_configs() {
        let grid = g(8, 8);
        assert_eq!(MemoryConfig::parse("interleaved_dram", grid).unwrap(), MemoryConfig::InterleavedDram);
        assert_eq!(MemoryConfig::parse("sharded", grid).unwrap(), MemoryConfig::block_sharded(grid));
        let m = MemoryConfig::parse("sharded:height:col_major", grid).unwrap();
        assert_eq!(m.name(), "sharded:height:col_major");
        assert!(MemoryConfig::parse("sharded:diag", grid).is_err());
        assert_eq!("12x8".parse::<CoreGrid>().unwrap(), g(12, 8));
        assert!("8".parse::<CoreGrid>().is_err());
    }
}
