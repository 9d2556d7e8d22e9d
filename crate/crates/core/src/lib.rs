//! Certification of extended D-stability for non-square gain matrices.
//!
//! A non-square gain `A` (m outputs, n ≥ m inputs) whose inputs are grouped
//! into one column block per output is examined through its *squared
//! matrices*: every m×m matrix obtained by picking one column out of each
//! block. When each squared matrix admits its own positive diagonal
//! Lyapunov certificate, `A·E·K` keeps its spectrum in the open right
//! half-plane for every nonnegative diagonal detuning `E` and every block
//! mixing matrix `K`, which is what decentralized integral control needs.
//!
//! The crate is `no_std` and only needs `alloc`:
//!
//! - [`gain`]: partitioned gains, mixing matrices, scalings and the `AEK`
//!   product with inactive-block reduction.
//! - [`squared`]: enumeration and extraction of squared matrices.
//! - [`vl`]: diagonal Lyapunov certificates and the column-dominance check.
//! - [`weights`]: the combinatorial weight construction that realizes
//!   prescribed payoff ratios.
//! - [`dstab`]: witness assembly, randomized falsification and the
//!   end-to-end certification pipeline.
//! - [`sim`]: plant/integral-controller closed loops, the reduced model and
//!   fixed-step trajectories.
//! - [`pairing`]: search over input-to-output groupings.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dstab;
mod error;
pub mod gain;
pub mod linalg;
pub mod pairing;
pub mod sim;
pub mod squared;
pub mod vl;
pub mod weights;

pub use error::{Error, Result};
pub use gain::{ActiveSet, MixingMatrix, Partition, PartitionedGain, ScalingDiagonal};
pub use nalgebra::{Complex, DMatrix, DVector};
pub use squared::Selection;
