//! Kruskal (weighted CP) models.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::tensor::SparseCountTensor;

/// Column norm used by [`KruskalModel::normalize_columns`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnNorm {
    One,
    Two,
}

/// A rank-R CP model `sum_r weights[r] * a_1(:,r) o ... o a_d(:,r)` with
/// non-negative weights and factor matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    weights: Array1<f64>,
    factors: Vec<Array2<f64>>,
}

impl KruskalModel {
    /// Validates ranks, non-negativity and finiteness.
    pub fn new(weights: Array1<f64>, factors: Vec<Array2<f64>>) -> Result<Self> {
        let rank = weights.len();
        if factors.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "model needs at least 2 factor matrices, got {}",
                factors.len()
            )));
        }
        for (k, a) in factors.iter().enumerate() {
            if a.ncols() != rank {
                return Err(Error::RankMismatch(rank, a.ncols()));
            }
            if a.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("factor {k} has no rows")));
            }
        }
        let all = weights.iter().chain(factors.iter().flat_map(|a| a.iter()));
        for &v in all {
            if !v.is_finite() {
                return Err(Error::NonFiniteEncountered("model construction"));
            }
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "model entries must be non-negative, found {v}"
                )));
            }
        }
        let factors = factors.into_iter().map(standard_layout).collect();
        Ok(KruskalModel { weights: standard_layout(weights), factors })
    }

    /// Model with every weight and factor entry equal to 1.
    pub fn ones(shape: &[usize], rank: usize) -> Self {
        KruskalModel {
            weights: Array1::ones(rank),
            factors: shape.iter().map(|&n| Array2::ones((n, rank))).collect(),
        }
    }

    pub(crate) fn from_parts(weights: Array1<f64>, factors: Vec<Array2<f64>>) -> Self {
        debug_assert!(factors.iter().all(|a| a.ncols() == weights.len() && a.is_standard_layout()));
        KruskalModel { weights, factors }
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn ndims(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|a| a.nrows()).collect()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Array2<f64> {
        &self.factors[mode]
    }

    pub(crate) fn into_parts(self) -> (Array1<f64>, Vec<Array2<f64>>) {
        (self.weights, self.factors)
    }

    /// Errors unless the model's dimensions match the tensor's shape.
    pub fn check_compatible(&self, x: &SparseCountTensor) -> Result<()> {
        let shape = self.shape();
        if shape != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "model is {shape:?}, tensor is {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Model value at a 0-based multi-index.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.ndims() {
            return Err(Error::ShapeMismatch(format!(
                "index has {} modes, model has {}",
                idx.len(),
                self.ndims()
            )));
        }
        for (mode, (&i, a)) in idx.iter().zip(&self.factors).enumerate() {
            if i >= a.nrows() {
                return Err(Error::IndexOutOfBounds { mode, index: i, size: a.nrows() });
            }
        }
        Ok(self.entry_unchecked(idx))
    }

    #[inline]
    pub(crate) fn entry_unchecked(&self, idx: &[usize]) -> f64 {
        self.evaluator().entry(idx)
    }

    /// Repeated entry evaluation without per-call allocation.
    pub(crate) fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            weights: self.weights.as_slice().expect("weights are contiguous"),
            rows: crate::kernels::Rows::new(&self.factors),
            scratch: vec![0.0; self.rank()],
        }
    }

    /// Column sums of every factor, one vector per mode.
    pub(crate) fn column_sums(&self) -> Vec<Array1<f64>> {
        self.factors.iter().map(|a| a.sum_axis(Axis(0))).collect()
    }

    /// Sum of the model over every entry of the full tensor, computed from
    /// factor column sums.
    pub fn total_sum(&self) -> f64 {
        let sums = self.column_sums();
        (0..self.rank())
            .map(|r| self.weights[r] * sums.iter().map(|s| s[r]).product::<f64>())
            .sum()
    }

    /// Rescales every factor column to unit norm, moving the scale into the
    /// weights. Zero columns are left as they are.
    pub fn normalize_columns(&self, norm: ColumnNorm) -> KruskalModel {
        let mut weights = self.weights.clone();
        let mut factors = self.factors.clone();
        for a in factors.iter_mut() {
            for (r, mut col) in a.axis_iter_mut(Axis(1)).enumerate() {
                let n = column_norm(col.view(), norm);
                if n > 0.0 {
                    col.mapv_inplace(|v| v / n);
                    weights[r] *= n;
                } else {
                    weights[r] = 0.0;
                }
            }
        }
        KruskalModel { weights, factors }
    }

    /// Returns an equivalent model with unit weights, the weights multiplied
    /// into the rows of factor `mode`.
    pub fn absorb_weights(&self, mode: usize) -> KruskalModel {
        let mut factors = self.factors.clone();
        for (r, mut col) in factors[mode].axis_iter_mut(Axis(1)).enumerate() {
            let w = self.weights[r];
            col.mapv_inplace(|v| v * w);
        }
        KruskalModel { weights: Array1::ones(self.rank()), factors }
    }

    /// Multiplies every weight by `scale`.
    pub fn scale_weights(&self, scale: f64) -> KruskalModel {
        KruskalModel {
            weights: self.weights.mapv(|w| w * scale),
            factors: self.factors.clone(),
        }
    }
}

fn standard_layout<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

pub(crate) fn column_norm(col: ndarray::ArrayView1<f64>, norm: ColumnNorm) -> f64 {
    match norm {
        ColumnNorm::One => col.iter().map(|v| v.abs()).sum(),
        ColumnNorm::Two => col.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_all_ones() {
        let m = KruskalModel::ones(&[3, 4, 2], 1);
        assert_eq!(m.entry(&[2, 3, 1]).unwrap(), 1.0);
    }

    #[test]
    fn weights_sum_under_unit_factors() {
        let mut m = KruskalModel::ones(&[2, 2, 2], 2);
        m.weights = array![2.0, 3.0];
        assert_eq!(m.entry(&[1, 0, 1]).unwrap(), 5.0);
    }

    #[test]
    fn entry_matches_dense_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&[4, 4, 4], 3, &mut rng);
        let dense = dense3(&m);
        // 1-based (2,3,1)
        let got = m.entry(&[1, 2, 0]).unwrap();
        assert!((got - dense[1][2][0]).abs() <= 1e-12 * dense[1][2][0].abs());
    }

    #[test]
    fn entry_out_of_bounds() {
        let m = KruskalModel::ones(&[2, 2, 2], 1);
        assert!(matches!(m.entry(&[0, 2, 0]), Err(Error::IndexOutOfBounds { mode: 1, .. })));
    }

    #[test]
    fn total_sum_cases() {
        assert_eq!(KruskalModel::ones(&[2, 2, 2], 1).total_sum(), 8.0);
        let mut z = KruskalModel::ones(&[2, 3, 2], 3);
        z.weights.fill(0.0);
        assert_eq!(z.total_sum(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&[3, 4, 5], 2, &mut rng);
        let brute: f64 = dense3(&m).iter().flatten().flatten().sum();
        assert!((m.total_sum() - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn normalize_unit_columns_is_identity() {
        let m = KruskalModel::ones(&[1, 1, 1], 2);
        assert_eq!(m.normalize_columns(ColumnNorm::Two), m);
        assert_eq!(m.normalize_columns(ColumnNorm::One), m);
    }

    #[test]
    fn normalize_absorbs_scale() {
        let mut m = KruskalModel::ones(&[1, 1, 1], 1);
        m.factors[1][[0, 0]] = 4.0;
        let n = m.normalize_columns(ColumnNorm::Two);
        assert_eq!(n.weights()[0], 4.0);
        assert_eq!(n.factor(1)[[0, 0]], 1.0);
    }

    #[test]
    fn normalize_keeps_zero_columns() {
        let mut m = KruskalModel::ones(&[2, 2], 2);
        m.factors[0].column_mut(1).fill(0.0);
        let n = m.normalize_columns(ColumnNorm::One);
        assert_eq!(n.weights()[1], 0.0);
        assert!(n.factor(0).column(1).iter().all(|&v| v == 0.0));
        assert_eq!(n.factor(1).column(1).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn normalize_preserves_entries_at_random_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&[5, 6, 7], 4, &mut rng);
        for norm in [ColumnNorm::One, ColumnNorm::Two] {
            let n = m.normalize_columns(norm);
            for _ in 0..5 {
                let idx = [rng.gen_range(0..5), rng.gen_range(0..6), rng.gen_range(0..7)];
                let (a, b) = (m.entry(&idx).unwrap(), n.entry(&idx).unwrap());
                assert!((a - b).abs() <= 1e-12 * a);
            }
        }
    }

    #[test]
    fn rejects_negative_entries() {
        let f = vec![array![[1.0], [-1.0]], array![[1.0]]];
        assert!(KruskalModel::new(array![1.0], f).is_err());
    }

    proptest! {
        #[test]
        fn entries_nonnegative_and_normalization_invariant(seed in any::<u64>(), rank in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = [3, 2, 4];
            let m = random_model(&shape, rank, &mut rng);
            let n = m.normalize_columns(ColumnNorm::Two);
            for idx in all_indices(&shape) {
                let a = m.entry(&idx).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - n.entry(&idx).unwrap()).abs() <= 1e-12 * a);
            }
        }

        #[test]
        fn total_sum_matches_dense(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6)];
            let m = random_model(&shape, 3, &mut rng);
            let dense: f64 = all_indices(&shape).iter().map(|i| m.entry(i).unwrap()).sum();
            prop_assert!((m.total_sum() - dense).abs() <= 1e-12 * dense);
        }
    }
}

pub(crate) struct Evaluator<'a> {
    weights: &'a [f64],
    rows: crate::kernels::Rows<'a>,
    scratch: Vec<f64>,
}

impl Evaluator<'_> {
    #[inline]
    pub(crate) fn entry(&mut self, idx: &[usize]) -> f64 {
        self.rows.entry(Some(self.weights), idx, &mut self.scratch)
    }
}
