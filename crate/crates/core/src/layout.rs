//! Tensor flattening, row-major vs. tiled pages, and tilize/untilize.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::DataFormat;
use crate::matrix::Dense;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::Layout("tensor shape has no dimensions".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Layout(format!("zero-sized dimension in {dims:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Layout(format!("{dims:?} overflows the address space")))?;
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }
}

/// Collapse all outer dimensions into rows: `[1,2,4,8]` is stored as `8x8`.
pub fn flatten(shape: &TensorShape) -> (usize, usize) {
    let (last, outer) = shape.0.split_last().expect("non-empty shape");
    (outer.iter().product(), *last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileSpec {
    pub height: usize,
    pub width: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self { height: 32, width: 32 }
    }
}

impl TileSpec {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Layout(format!("tile {height}x{width} is empty")));
        }
        Ok(Self { height, width })
    }

    pub fn elements(&self) -> usize {
        self.height * self.width
    }

    /// Tile-grid extent for a flattened `rows x cols` matrix.
    pub fn grid(&self, rows: usize, cols: usize) -> (usize, usize) {
        (rows.div_ceil(self.height), cols.div_ceil(self.width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    RowMajor,
    #[serde(rename = "tile")]
    Tiled,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::RowMajor => "row_major",
            Layout::Tiled => "tile",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_major" => Ok(Layout::RowMajor),
            "tile" => Ok(Layout::Tiled),
            other => Err(Error::Parse(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageMap {
    pub layout: Layout,
    /// `(rows, cols)` of one page, in elements.
    pub page_shape: (usize, usize),
    pub page_count: usize,
    pub page_size_bytes: u64,
    pub pad_rows: usize,
    pub pad_cols: usize,
}

pub fn page_map(shape: &TensorShape, layout: Layout, tile: TileSpec, fmt: DataFormat) -> PageMap {
    let (m, n) = flatten(shape);
    match layout {
        Layout::RowMajor => PageMap {
            layout,
            page_shape: (1, n),
            page_count: m,
            page_size_bytes: fmt.bytes_for(n as u64),
            pad_rows: 0,
            pad_cols: 0,
        },
        Layout::Tiled => {
            let (tr, tc) = tile.grid(m, n);
            PageMap {
                layout,
                page_shape: (tile.height, tile.width),
                page_count: tr * tc,
                page_size_bytes: fmt.bytes_for(tile.elements() as u64),
                pad_rows: tr * tile.height - m,
                pad_cols: tc * tile.width - n,
            }
        }
    }
}

pub fn page_count(shape: &TensorShape, layout: Layout, tile: TileSpec) -> usize {
    page_map(shape, layout, tile, DataFormat::BF16).page_count
}

/// Tile-major storage: tiles row-major over the tile grid, elements row-major
/// within a tile, zero padding on the bottom and right edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledTensor<T = f64> {
    rows: usize,
    cols: usize,
    tile: TileSpec,
    data: Vec<T>,
}

impl<T: Copy + num_traits::Zero> TiledTensor<T> {
    pub fn from_raw(rows: usize, cols: usize, tile: TileSpec, data: Vec<T>) -> Result<Self> {
        let (tr, tc) = tile.grid(rows, cols);
        let expect = tr * tc * tile.elements();
        if data.len() != expect {
            return Err(Error::Layout(format!(
                "{} elements for {} tiles of {}x{}",
                data.len(),
                tr * tc,
                tile.height,
                tile.width
            )));
        }
        Ok(Self { rows, cols, tile, data })
    }

    pub fn logical_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn tile_spec(&self) -> TileSpec {
        self.tile
    }

    pub fn tile_grid(&self) -> (usize, usize) {
        self.tile.grid(self.rows, self.cols)
    }

    pub fn tile_count(&self) -> usize {
        let (tr, tc) = self.tile_grid();
        tr * tc
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        let (tr, tc) = self.tile_grid();
        (tr * self.tile.height, tc * self.tile.width)
    }

    pub fn padding_elements(&self) -> usize {
        self.data.len() - self.rows * self.cols
    }

    pub fn tile(&self, tile_row: usize, tile_col: usize) -> &[T] {
        let (_, tc) = self.tile_grid();
        let n = self.tile.elements();
        let start = (tile_row * tc + tile_col) * n;
        &self.data[start..start + n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Element at padded coordinates.
    pub fn get_padded(&self, r: usize, c: usize) -> T {
        let (th, tw) = (self.tile.height, self.tile.width);
        let (_, tc) = self.tile_grid();
        self.data[((r / th) * tc + c / tw) * th * tw + (r % th) * tw + c % tw]
    }
}

pub fn tilize<T: Copy + num_traits::Zero>(m: &Dense<T>, tile: TileSpec) -> TiledTensor<T> {
    let (rows, cols) = m.shape();
    let (tr, tc) = tile.grid(rows, cols);
    let (th, tw) = (tile.height, tile.width);
    let mut data = Vec::with_capacity(tr * tc * th * tw);
    for i in 0..tr {
        for j in 0..tc {
            for r in i * th..(i + 1) * th {
                for c in j * tw..(j + 1) * tw {
                    data.push(if r < rows && c < cols { m.get(r, c) } else { T::zero() });
                }
            }
        }
    }
    TiledTensor { rows, cols, tile, data }
}

pub fn untilize<T: Copy + num_traits::Zero>(t: &TiledTensor<T>) -> Result<Dense<T>> {
    let (tr, tc) = t.tile_grid();
    if t.data.len() != tr * tc * t.tile.elements() {
        return Err(Error::Layout(format!(
            "tile data of {} elements does not match a {tr}x{tc} tile grid",
            t.data.len()
        )));
    }
    Ok(Dense::from_fn(t.rows, t.cols, |r, c| t.get_padded(r, c)))
}

/// An operand as handed to the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor<T = f64> {
    RowMajor(Dense<T>),
    Tiled(TiledTensor<T>),
}

impl<T: Copy + num_traits::Zero> Tensor<T> {
    pub fn layout(&self) -> Layout {
        match self {
            Tensor::RowMajor(_) => Layout::RowMajor,
            Tensor::Tiled(_) => Layout::Tiled,
        }
    }

    pub fn logical_shape(&self) -> (usize, usize) {
        match self {
            Tensor::RowMajor(m) => m.shape(),
            Tensor::Tiled(t) => t.logical_shape(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(flatten(&shape(&[1, 2, 4, 8])), (8, 8));
        assert_eq!(flatten(&shape(&[512, 512])), (512, 512));
        assert_eq!(flatten(&shape(&[3, 5, 7])), (15, 7));
        assert_eq!(flatten(&shape(&[9])), (1, 9));
    }

    #[test]
    fn shape_validation() {
        assert!(TensorShape::new(vec![]).is_err());
        assert!(TensorShape::new(vec![3, 0]).is_err());
        assert!(TensorShape::new(vec![usize::MAX, 2]).is_err());
    }

    #[test]
    fn single_tile_is_row_major() {
        let m = Matrix::from_fn(32, 32, |r, c| (r * 32 + c) as f64);
        let t = tilize(&m, TileSpec::default());
        assert_eq!(t.tile_count(), 1);
        assert_eq!(t.as_slice(), m.as_slice());
    }

    #[test]
    fn padding_count() {
        let m = Matrix::filled(33, 1, 1.0);
        let t = tilize(&m, TileSpec::default());
        assert_eq!(t.padded_shape(), (64, 32));
        assert_eq!(t.tile_count(), 2);
        assert_eq!(t.padding_elements(), 2015);
        assert_eq!(t.as_slice().iter().filter(|&&v| v == 0.0).count(), 2015);
    }

    #[test]
    fn tile_order() {
        let m = Matrix::from_fn(64, 64, |r, c| (r * 64 + c) as f64);
        let t = tilize(&m, TileSpec::default());
        assert_eq!(t.tile_count(), 4);
        // second tile is the top-right block
        assert_eq!(t.tile(0, 1)[0], 32.0);
        assert_eq!(t.tile(1, 0)[0], (32 * 64) as f64);
        assert_eq!(t.tile(1, 1)[33], (33 * 64 + 33) as f64);
    }

    #[test]
    fn tiles_for_512() {
        let t = tilize(&Matrix::zeros(512, 512), TileSpec::default());
        assert_eq!(t.tile_count(), 256);
    }

    #[test]
    fn untilize_zero_tile() {
        let t = TiledTensor::from_raw(32, 32, TileSpec::default(), vec![0.0f64; 1024]).unwrap();
        assert_eq!(untilize(&t).unwrap(), Matrix::zeros(32, 32));
        assert!(TiledTensor::from_raw(33, 32, TileSpec::default(), vec![0.0f64; 1024]).is_err());
    }

    #[test]
    fn page_counts() {
        let t = TileSpec::default();
        assert_eq!(page_count(&shape(&[8, 8]), Layout::RowMajor, t), 8);
        assert_eq!(page_count(&shape(&[512, 512]), Layout::Tiled, t), 256);
        assert_eq!(page_count(&shape(&[1, 2, 4, 8]), Layout::RowMajor, t), 8);
        assert_eq!(page_count(&shape(&[33, 65]), Layout::Tiled, t), 6);
    }

    #[test]
    fn page_bytes() {
        let t = TileSpec::default();
        let p = page_map(&shape(&[64, 64]), Layout::Tiled, t, DataFormat::BFP8);
        assert_eq!(p.page_size_bytes, 1024 + 64);
        let p = page_map(&shape(&[33, 40]), Layout::Tiled, t, DataFormat::BF16);
        assert_eq!((p.pad_rows, p.pad_cols, p.page_size_bytes), (31, 24, 2048));
        let p = page_map(&shape(&[4, 100]), Layout::RowMajor, t, DataFormat::FP32);
        assert_eq!((p.page_shape, p.page_size_bytes), ((1, 100), 400));
    }

    #[test]
    fn layout_strings() {
        assert_eq!("tile".parse::<Layout>().unwrap(), Layout::Tiled);
        assert_eq!(Layout::RowMajor.to_string(), "row_major");
    }
}
