//! Squared matrices: one column picked out of every (active) block.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::gain::{Partition, PartitionedGain};
use crate::{Error, Result};

/// A choice of one offset per active block.
///
/// Ordering is lexicographic on `(blocks, offsets)`, which for a fixed set
/// of blocks is the enumeration order of [`enumerate_selections`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selection {
    blocks: Vec<usize>,
    offsets: Vec<usize>,
}

impl Selection {
    pub fn new(blocks: Vec<usize>, offsets: Vec<usize>) -> Result<Self> {
        if blocks.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                what: "selection",
                expected: (blocks.len(), 1),
                found: (offsets.len(), 1),
            });
        }
        if blocks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IndexOutOfRange { what: "selection block order", index: 0, limit: 0 });
        }
        Ok(Selection { blocks, offsets })
    }

    /// Selection over all blocks `0..offsets.len()`.
    pub fn full(offsets: Vec<usize>) -> Self {
        Selection { blocks: (0..offsets.len()).collect(), offsets }
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Chosen offset per active block (the `κ` tuple, 0-based).
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Position in the lexicographic enumeration over the same active blocks.
    pub fn rank(&self, partition: &Partition) -> Result<usize> {
        self.check(partition)?;
        let mut rank = 0;
        for (&b, &o) in self.blocks.iter().zip(&self.offsets) {
            rank = rank * partition.sizes()[b] + o;
        }
        Ok(rank)
    }

    /// Inverse of [`Selection::rank`] for full selections.
    pub fn from_rank(partition: &Partition, mut rank: usize) -> Result<Self> {
        let total = count_selections(partition, &all_blocks(partition));
        if rank >= total {
            return Err(Error::IndexOutOfRange { what: "selection rank", index: rank, limit: total });
        }
        let mut offsets = alloc::vec![0; partition.blocks()];
        for (slot, &p) in offsets.iter_mut().zip(partition.sizes()).rev() {
            *slot = rank % p;
            rank /= p;
        }
        Ok(Selection::full(offsets))
    }

    fn check(&self, partition: &Partition) -> Result<()> {
        for (&b, &o) in self.blocks.iter().zip(&self.offsets) {
            let p = partition.size(b)?;
            if o >= p {
                return Err(Error::IndexOutOfRange { what: "selection offset", index: o, limit: p });
            }
        }
        Ok(())
    }
}

pub fn all_blocks(partition: &Partition) -> Vec<usize> {
    (0..partition.blocks()).collect()
}

/// `Π p_i` over the active blocks (saturating).
pub fn count_selections(partition: &Partition, active: &[usize]) -> usize {
    active.iter().filter_map(|&b| partition.sizes().get(b)).fold(1usize, |acc, &p| acc.saturating_mul(p))
}

/// Lexicographic stream of selections over `active` (last block varies fastest).
pub fn enumerate_selections(partition: &Partition, active: &[usize]) -> Selections {
    let mut blocks: Vec<usize> = active.iter().copied().filter(|&b| b < partition.blocks()).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let sizes = blocks.iter().map(|&b| partition.sizes()[b]).collect();
    Selections { offsets: Some(alloc::vec![0; blocks.len()]), blocks, sizes }
}

/// Streaming odometer over selections; see [`enumerate_selections`].
#[derive(Debug, Clone)]
pub struct Selections {
    blocks: Vec<usize>,
    sizes: Vec<usize>,
    offsets: Option<Vec<usize>>,
}

impl Iterator for Selections {
    type Item = Selection;

    fn next(&mut self) -> Option<Selection> {
        let current = self.offsets.take()?;
        let mut next = current.clone();
        let mut advanced = false;
        for i in (0..next.len()).rev() {
            next[i] += 1;
            if next[i] < self.sizes[i] {
                advanced = true;
                break;
            }
            next[i] = 0;
        }
        if advanced {
            self.offsets = Some(next);
        }
        Some(Selection { blocks: self.blocks.clone(), offsets: current })
    }
}

/// Square matrix of the selected columns, restricted to the rows of the active blocks.
pub fn extract_squared(a: &PartitionedGain, s: &Selection) -> Result<DMatrix<f64>> {
    let partition = a.partition();
    s.check(partition)?;
    let k = s.len();
    let mut out = DMatrix::zeros(k, k);
    for (col, (&b, &o)) in s.blocks.iter().zip(&s.offsets).enumerate() {
        let column = a.column(b, o)?;
        for (row, &r) in s.blocks.iter().enumerate() {
            out[(row, col)] = column[r];
        }
    }
    Ok(out)
}
