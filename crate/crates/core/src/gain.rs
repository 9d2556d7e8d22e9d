//! Partitioned gain matrices and the `A·E·K` product.
//!
//! Columns of an m×n gain are grouped into m contiguous blocks, block `i`
//! holding the `p_i` inputs that feed the integral channel of output `i`.
//! Everything here is addressed 0-based: block `i ∈ 0..m`, offset
//! `j ∈ 0..p_i`.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVectorView};

use crate::{Error, Result};

/// Products `ε·k` at or below this fraction of the largest product count as zero.
pub const INACTIVE_REL_TOL: f64 = 1e-14;

/// Ordered column partition `p_1..p_m` with `Σ p_i = n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    sizes: Vec<usize>,
    starts: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::EmptyPartition);
        }
        if let Some(block) = sizes.iter().position(|&p| p == 0) {
            return Err(Error::EmptyBlock { block });
        }
        let mut starts = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        starts.push(0);
        for &p in &sizes {
            acc += p;
            starts.push(acc);
        }
        Ok(Partition { sizes, starts })
    }

    /// One column per block, the square case.
    pub fn singletons(m: usize) -> Result<Self> {
        Self::new(alloc::vec![1; m])
    }

    pub fn blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of columns `n`.
    pub fn width(&self) -> usize {
        self.starts[self.sizes.len()]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, block: usize) -> Result<usize> {
        self.sizes.get(block).copied().ok_or(Error::IndexOutOfRange {
            what: "block",
            index: block,
            limit: self.sizes.len(),
        })
    }

    pub fn columns(&self, block: usize) -> Result<Range<usize>> {
        self.size(block)?;
        Ok(self.starts[block]..self.starts[block + 1])
    }

    /// Flat column index of `(block, offset)`.
    pub fn flat_index(&self, block: usize, offset: usize) -> Result<usize> {
        let p = self.size(block)?;
        if offset >= p {
            return Err(Error::IndexOutOfRange { what: "offset", index: offset, limit: p });
        }
        Ok(self.starts[block] + offset)
    }

    /// Inverse of [`Partition::flat_index`].
    pub fn block_offset(&self, flat: usize) -> Result<(usize, usize)> {
        if flat >= self.width() {
            return Err(Error::IndexOutOfRange { what: "column", index: flat, limit: self.width() });
        }
        // starts is sorted; the owning block is the last start <= flat
        let block = self.starts.partition_point(|&s| s <= flat) - 1;
        Ok((block, flat - self.starts[block]))
    }
}

/// Real m×n matrix together with a compatible column partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedGain {
    entries: DMatrix<f64>,
    partition: Partition,
}

impl PartitionedGain {
    pub fn new(entries: DMatrix<f64>, partition: Partition) -> Result<Self> {
        let (m, n) = entries.shape();
        if partition.blocks() != m {
            return Err(Error::DimensionMismatch {
                what: "partition blocks vs rows",
                expected: (m, n),
                found: (partition.blocks(), n),
            });
        }
        if partition.width() != n {
            return Err(Error::PartitionMismatch { covered: partition.width(), columns: n });
        }
        if n < m {
            return Err(Error::TooFewInputs { outputs: m, inputs: n });
        }
        crate::linalg::check_finite(&entries, "gain matrix")?;
        Ok(PartitionedGain { entries, partition })
    }

    /// Builds from row-major data of an `m × n` matrix.
    pub fn from_row_major(m: usize, n: usize, data: &[f64], partition: Partition) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::DimensionMismatch {
                what: "row-major entries",
                expected: (m, n),
                found: (data.len(), 1),
            });
        }
        Self::new(DMatrix::from_row_slice(m, n, data), partition)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn outputs(&self) -> usize {
        self.entries.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, block: usize, offset: usize) -> Result<DVectorView<'_, f64>> {
        Ok(self.entries.column(self.partition.flat_index(block, offset)?))
    }
}

/// Values laid out along a partition, one per column.
#[derive(Debug, Clone, PartialEq)]
struct BlockValues {
    partition: Partition,
    values: Vec<f64>,
}

impl BlockValues {
    fn from_flat(partition: &Partition, values: Vec<f64>, what: &'static str) -> Result<Self> {
        if values.len() != partition.width() {
            return Err(Error::DimensionMismatch { what, expected: (partition.width(), 1), found: (values.len(), 1) });
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite { what });
            }
            if v < 0.0 {
                return Err(Error::Negative { what, value: v });
            }
        }
        Ok(BlockValues { partition: partition.clone(), values })
    }

    fn from_blocks(partition: &Partition, blocks: &[Vec<f64>], what: &'static str) -> Result<Self> {
        if blocks.len() != partition.blocks() {
            return Err(Error::DimensionMismatch { what, expected: (partition.blocks(), 0), found: (blocks.len(), 0) });
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != partition.sizes()[i] {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: (i, partition.sizes()[i]),
                    found: (i, b.len()),
                });
            }
        }
        Self::from_flat(partition, blocks.concat(), what)
    }

    fn get(&self, block: usize, offset: usize) -> Result<f64> {
        Ok(self.values[self.partition.flat_index(block, offset)?])
    }

    fn blocks(&self) -> Vec<Vec<f64>> {
        (0..self.partition.blocks())
            .map(|i| self.values[self.partition.starts[i]..self.partition.starts[i + 1]].to_vec())
            .collect()
    }
}

/// Block mixing matrix `K` (n×m): input `(i, j)` feeds output `i` with gain `k_{i,j} ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(BlockValues);

impl MixingMatrix {
    pub fn from_blocks(partition: &Partition, gains: &[Vec<f64>]) -> Result<Self> {
        BlockValues::from_blocks(partition, gains, "mixing gains").map(MixingMatrix)
    }

    pub fn from_flat(partition: &Partition, gains: Vec<f64>) -> Result<Self> {
        BlockValues::from_flat(partition, gains, "mixing gains").map(MixingMatrix)
    }

    pub fn ones(partition: &Partition) -> Self {
        MixingMatrix(BlockValues { partition: partition.clone(), values: alloc::vec![1.0; partition.width()] })
    }

    pub fn partition(&self) -> &Partition {
        &self.0.partition
    }

    pub fn gain(&self, block: usize, offset: usize) -> Result<f64> {
        self.0.get(block, offset)
    }

    /// Gains in flat column order.
    pub fn as_flat(&self) -> &[f64] {
        &self.0.values
    }

    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        self.0.blocks()
    }

    /// Dense n×m realization: row `(i, j)` carries `k_{i,j}` in column `i`.
    pub fn dense(&self) -> DMatrix<f64> {
        let p = &self.0.partition;
        let mut k = DMatrix::zeros(p.width(), p.blocks());
        for i in 0..p.blocks() {
            for c in p.starts[i]..p.starts[i + 1] {
                k[(c, i)] = self.0.values[c];
            }
        }
        k
    }
}

/// Nonnegative diagonal detuning `E = diag(ε_{1,1}, …, ε_{m,p_m})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingDiagonal(BlockValues);

impl ScalingDiagonal {
    pub fn from_blocks(partition: &Partition, eps: &[Vec<f64>]) -> Result<Self> {
        BlockValues::from_blocks(partition, eps, "scaling diagonal").map(ScalingDiagonal)
    }

    pub fn from_flat(partition: &Partition, eps: Vec<f64>) -> Result<Self> {
        BlockValues::from_flat(partition, eps, "scaling diagonal").map(ScalingDiagonal)
    }

    pub fn identity(partition: &Partition) -> Self {
        ScalingDiagonal(BlockValues { partition: partition.clone(), values: alloc::vec![1.0; partition.width()] })
    }

    pub fn partition(&self) -> &Partition {
        &self.0.partition
    }

    pub fn epsilon(&self, block: usize, offset: usize) -> Result<f64> {
        self.0.get(block, offset)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.0.values
    }

    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        self.0.blocks()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.values.iter().all(|&v| v > 0.0)
    }

    /// Multiplies every entry by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_flat(&self.0.partition, self.0.values.iter().map(|v| v * c).collect())
    }

    pub fn dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.0.values))
    }
}

/// Blocks (and the columns inside them) that survive the inactive-input reduction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet {
    blocks: Vec<usize>,
    columns: Vec<Vec<usize>>,
}

impl ActiveSet {
    pub fn full(partition: &Partition) -> Self {
        ActiveSet {
            blocks: (0..partition.blocks()).collect(),
            columns: partition.sizes().iter().map(|&p| (0..p).collect()).collect(),
        }
    }

    /// Active block indices, ascending.
    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Active offsets for each active block, aligned with [`ActiveSet::blocks`].
    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, block: usize) -> bool {
        self.blocks.binary_search(&block).is_ok()
    }

    pub fn is_full(&self, partition: &Partition) -> bool {
        self.blocks.len() == partition.blocks()
            && self.columns.iter().zip(partition.sizes()).all(|(c, &p)| c.len() == p)
    }
}

/// Computes the active principal block of `A·E·K`.
///
/// Column `i` of the full product is `Σ_r ε_{i,r} k_{i,r} a_{i,r}`. Inputs whose
/// product `ε·k` vanishes are dropped; a block with no surviving input is
/// removed together with its row, so the result is `k × k` for `k` active
/// blocks.
pub fn apply_scaling(a: &PartitionedGain, e: &ScalingDiagonal, k: &MixingMatrix) -> Result<(DMatrix<f64>, ActiveSet)> {
    let partition = a.partition();
    if e.partition() != partition || k.partition() != partition {
        return Err(Error::PartitionMismatch {
            covered: e.partition().width().max(k.partition().width()),
            columns: partition.width(),
        });
    }
    let products: Vec<f64> = e.as_flat().iter().zip(k.as_flat()).map(|(x, y)| x * y).collect();
    let largest = products.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = INACTIVE_REL_TOL * largest;

    let mut blocks = Vec::new();
    let mut columns = Vec::new();
    for i in 0..partition.blocks() {
        let range = partition.columns(i)?;
        let live: Vec<usize> = range
            .clone()
            .filter(|&c| largest > 0.0 && products[c].abs() > threshold)
            .map(|c| c - range.start)
            .collect();
        if !live.is_empty() {
            blocks.push(i);
            columns.push(live);
        }
    }

    let dim = blocks.len();
    let entries = a.entries();
    let mut out = DMatrix::zeros(dim, dim);
    for (col, (&bj, offsets)) in blocks.iter().zip(&columns).enumerate() {
        let start = partition.columns(bj)?.start;
        for &r in offsets {
            let c = start + r;
            let w = products[c];
            for (row, &bi) in blocks.iter().enumerate() {
                out[(row, col)] += w * entries[(bi, c)];
            }
        }
    }
    Ok((out, ActiveSet { blocks, columns }))
}
