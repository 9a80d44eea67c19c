//! Shared fixtures for the criterion benches.

use grbm::experiment::dead_leaves_patches;
use grbm::rng::seeded;
use grbm::{DataBatch, GrbmParams};

/// Random model with uniform weights in `[-0.5, 0.5]`.
pub fn model(n_visible: usize, n_hidden: usize) -> GrbmParams {
    GrbmParams::random(n_visible, n_hidden, 0.5, &mut seeded(1))
}

/// Whitened 4×4 dead-leaves patches.
pub fn patches(n: usize) -> DataBatch {
    dead_leaves_patches(16, n, 1).expect("patch fixture")
}
