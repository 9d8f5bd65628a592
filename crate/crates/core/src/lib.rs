//! Numerics, tiling, placement, dataflow and cost model for tiled matrix
//! multiplication on a Tensix-style core grid.
//!
//! The numeric kernels are generic over the carrier float ([`Real`]); the
//! aliases at the crate root fix the carrier to `f64`, which is wide enough
//! for every product the simulator forms to be exact.

pub mod costmodel;
pub mod error;
pub mod fidelity;
pub mod formats;
pub mod layout;
pub mod matrix;
pub mod memory;
pub mod oracle;
pub mod real;
pub mod simengine;

pub use error::{Error, Result};
pub use fidelity::{FidelityLevel, PhaseSchedule, SplitSignificand};
pub use formats::{BfpBlock, DataFormat, FormatKind};
pub use layout::{Layout, PageMap, TensorShape, TileSpec};
pub use memory::{BankMap, CoreCoord, CoreGrid, MemoryConfig, ShardSpec};
pub use real::Real;
pub use simengine::{ExecStats, KernelVariant, MatmulConfig};

/// Default carrier scalar.
pub type Scalar = f64;
/// Dense row-major matrix over the default carrier.
pub type Matrix = matrix::Dense<f64>;
/// Dense row-major matrix over an `f32` carrier.
pub type Matrix32 = matrix::Dense<f32>;
/// Tile-major tensor over the default carrier.
pub type TiledTensor = layout::TiledTensor<f64>;
/// A device-resident operand over the default carrier.
pub type Tensor = layout::Tensor<f64>;
