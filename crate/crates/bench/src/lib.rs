//! Shared fixtures for the criterion benches.

use cgc_core::synth::{create_guess_scaled, ProblemSpec};
use cgc_core::{KruskalModel, Seed, SparseCountTensor};

/// Synthetic problem of the given shape, rank and density with a scaled
/// random initial guess.
pub fn fixture(shape: &[usize], rank: usize, density: f64) -> (SparseCountTensor, KruskalModel) {
    let spec = ProblemSpec { shape: shape.to_vec(), rank, density, seed: 7 };
    let (_, x) = spec.generate().expect("fixture problem");
    let guess = create_guess_scaled(shape, rank, x.total_count() as f64, &mut Seed(8).rng());
    (x, guess)
}
