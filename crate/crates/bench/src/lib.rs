//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tbf_core::{DenseTensor, DimensionTree, TreeKind};

/// Seeded Gaussian tensor.
pub fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random(dims, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn tree(kind: TreeKind, d: usize) -> DimensionTree {
    DimensionTree::standard(kind, d).expect("standard trees exist for d >= 2")
}
