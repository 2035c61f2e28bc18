//! Synthetic low-rank Poisson problems and random initial guesses.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Open01, WeightedIndex};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kruskal::{ColumnNorm, KruskalModel};
use crate::sampling::for_each_index;
use crate::seed::Seed;
use crate::tensor::SparseCountTensor;

/// Random guess: factor entries uniform on (0, 1), columns normalized to
/// unit one-norm, unit weights.
pub fn create_guess<R: Rng + ?Sized>(shape: &[usize], rank: usize, rng: &mut R) -> KruskalModel {
    let factors: Vec<Array2<f64>> = shape
        .iter()
        .map(|&n| Array2::from_shape_simple_fn((n, rank), || Open01.sample(rng)))
        .collect();
    let normalized =
        KruskalModel::from_parts(Array1::ones(rank), factors).normalize_columns(ColumnNorm::One);
    let (_, factors) = normalized.into_parts();
    KruskalModel::from_parts(Array1::ones(rank), factors)
}

/// [`create_guess`] with the weights set so the model sums to `total`.
pub fn create_guess_scaled<R: Rng + ?Sized>(
    shape: &[usize],
    rank: usize,
    total: f64,
    rng: &mut R,
) -> KruskalModel {
    let guess = create_guess(shape, rank, rng);
    guess.scale_weights(total / rank as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub shape: Vec<usize>,
    pub rank: usize,
    /// Target fraction of nonzero entries, in (0, 1].
    pub density: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn target_nnz(&self) -> f64 {
        self.density * self.shape.iter().map(|&s| s as f64).product::<f64>()
    }

    fn validate(&self) -> Result<()> {
        if self.shape.len() < 2 || self.shape.iter().any(|&s| s == 0) || self.rank == 0 {
            return Err(Error::InvalidArgument(format!("invalid problem spec: {self:?}")));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "density must be in (0, 1], got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// [`create_problem`] with the generator seeded from `self.seed`.
    pub fn generate(&self) -> Result<(KruskalModel, SparseCountTensor)> {
        create_problem(self, &mut Seed(self.seed).rng())
    }
}

/// Largest tensor for which the expected nonzero count is computed exactly
/// when calibrating the total count.
const EXACT_CALIBRATION_LIMIT: f64 = 2e6;

/// Draws a random non-negative rank-R model, scales it so the expected number
/// of nonzeros matches the requested density, and samples Poisson counts
/// from it. Returns `(truth, data)`.
pub fn create_problem<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    rng: &mut R,
) -> Result<(KruskalModel, SparseCountTensor)> {
    spec.validate()?;
    let target = spec.target_nnz();
    if target < 1.0 {
        return Err(Error::DensityUnachievable);
    }

    let factors: Vec<Array2<f64>> = spec
        .shape
        .iter()
        .map(|&n| Array2::from_shape_simple_fn((n, spec.rank), || Open01.sample(rng)))
        .collect();
    let weights = Array1::from_shape_simple_fn(spec.rank, || rng.gen_range(0.5..1.5));
    let unit = KruskalModel::from_parts(weights, factors).normalize_columns(ColumnNorm::One);
    let unit = unit.scale_weights(1.0 / unit.total_sum());

    let total = calibrate_total(&unit, target)?;
    let truth = unit.scale_weights(total);
    let data = sample_counts(&truth, rng)?;
    Ok((truth, data))
}

/// Total count whose expected number of nonzeros is `target` for the
/// probability model `unit` (which sums to 1).
fn calibrate_total(unit: &KruskalModel, target: f64) -> Result<f64> {
    let shape = unit.shape();
    let entries: f64 = shape.iter().map(|&s| s as f64).product();
    if entries > EXACT_CALIBRATION_LIMIT {
        // sparse regime: collisions are negligible
        return Ok(target);
    }
    let mut probs = Vec::with_capacity(entries as usize);
    for_each_index(&shape, |idx| probs.push(unit.entry_unchecked(idx)));
    let expected_nnz = |n: f64| probs.iter().map(|&p| -(-n * p).exp_m1()).sum::<f64>();

    if target >= entries * (1.0 - 1e-9) {
        return Err(Error::DensityUnachievable);
    }
    let (mut lo, mut hi) = (0.0, target.max(1.0));
    while expected_nnz(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e15 {
            return Err(Error::DensityUnachievable);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_nnz(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Samples every entry independently as Poisson(m_idx), by drawing the total
/// count from Poisson(sum of the model) and distributing it multinomially.
pub fn sample_counts<R: Rng + ?Sized>(truth: &KruskalModel, rng: &mut R) -> Result<SparseCountTensor> {
    let shape = truth.shape();
    let unit = truth.normalize_columns(ColumnNorm::One);
    let total = unit.total_sum();
    if total <= 0.0 {
        return SparseCountTensor::zeros(shape);
    }
    let n = Poisson::new(total)
        .map_err(|_| Error::NonFiniteEncountered("problem total count"))?
        .sample(rng) as u64;

    let components = WeightedIndex::new(unit.weights().iter().copied())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    // Per mode, per component categorical over rows; dead columns are never
    // drawn because their weight is zero.
    let rows: Vec<Vec<Option<WeightedIndex<f64>>>> = unit
        .factors()
        .iter()
        .map(|a| {
            (0..truth.rank())
                .map(|r| WeightedIndex::new(a.column(r).iter().copied()).ok())
                .collect()
        })
        .collect();

    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for _ in 0..n {
        let r = components.sample(rng);
        let idx: Vec<usize> = rows
            .iter()
            .map(|mode| mode[r].as_ref().expect("component with positive weight").sample(rng))
            .collect();
        *counts.entry(idx).or_insert(0) += 1;
    }
    let (coords, values): (Vec<_>, Vec<_>) = counts.into_iter().unzip();
    SparseCountTensor::new(shape, coords, values)
}
