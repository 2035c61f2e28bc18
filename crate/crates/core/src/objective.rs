//! Poisson negative log-likelihood and its gradients.
//!
//! The objective is `f(X, M) = sum_idx m_idx - x_idx * log(m_idx)` over every
//! entry of the tensor, without the constant `sum log(x!)`. The first term is
//! evaluated in factored form, so only nonzeros are visited. Model values
//! are clamped below by `eps` inside logs and divisions.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::kernels;
use crate::kruskal::KruskalModel;
use crate::sampling::SampleSet;
use crate::tensor::SparseCountTensor;

/// Default lower clamp applied to model values inside `log` and `x / m`.
pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllValue {
    /// Objective value in nats.
    pub value: f64,
    /// Number of zero entries whose contribution was folded in analytically.
    pub n_entries_implicit: u128,
}

/// Gradient of the NLL with respect to each factor matrix and the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient {
    pub factors: Vec<Array2<f64>>,
    pub weights: Array1<f64>,
}

/// Model values at every stored nonzero of `x`.
pub fn model_at_nonzeros(x: &SparseCountTensor, model: &KruskalModel) -> Vec<f64> {
    let mut eval = model.evaluator();
    (0..x.nnz()).map(|e| eval.entry(x.index(e))).collect()
}

pub fn poisson_nll(x: &SparseCountTensor, model: &KruskalModel, eps: f64) -> Result<NllValue> {
    model.check_compatible(x)?;
    let mut eval = model.evaluator();
    let log_term: f64 = (0..x.nnz())
        .map(|e| x.count(e) as f64 * eval.entry(x.index(e)).max(eps).ln())
        .sum();
    let total = x.shape().iter().map(|&s| s as u128).product::<u128>();
    Ok(NllValue {
        value: model.total_sum() - log_term,
        n_entries_implicit: total - x.nnz() as u128,
    })
}

/// Exact gradient of [`poisson_nll`] wherever every model value at a nonzero
/// is at least `eps`. Below the clamp `x / eps` is used for `x / m`.
pub fn poisson_nll_gradient(
    x: &SparseCountTensor,
    model: &KruskalModel,
    eps: f64,
) -> Result<NllGradient> {
    model.check_compatible(x)?;
    let mut eval = model.evaluator();
    let ratios: Vec<f64> = (0..x.nnz())
        .map(|e| x.count(e) as f64 / eval.entry(x.index(e)).max(eps))
        .collect();
    let colsums = model.column_sums();
    let rank = model.rank();
    let weights = model.weights();

    let mut factor_grads = Vec::with_capacity(model.ndims());
    let mut weight_grad = Array1::zeros(rank);
    for k in 0..model.ndims() {
        let phi = kernels::mttkrp_masked(x, model, k, &ratios)?;
        let mut grad = Array2::zeros(phi.raw_dim());
        for r in 0..rank {
            let others: f64 = colsums
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, s)| s[r])
                .product();
            for i in 0..phi.nrows() {
                grad[[i, r]] = weights[r] * (others - phi[[i, r]]);
            }
            if k == 0 {
                let data_term: f64 = (0..phi.nrows())
                    .map(|i| model.factor(0)[[i, r]] * phi[[i, r]])
                    .sum();
                weight_grad[r] = others * colsums[0][r] - data_term;
            }
        }
        factor_grads.push(grad);
    }
    Ok(NllGradient { factors: factor_grads, weights: weight_grad })
}

/// Inverse-probability weighted estimate of [`poisson_nll`] from a sample.
pub fn stochastic_nll_estimate(
    model: &KruskalModel,
    sample: &SampleSet,
    eps: f64,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut eval = model.evaluator();
    Ok(sample
        .iter()
        .map(|(idx, x, w)| {
            let m = eval.entry(idx);
            w * (m - x * m.max(eps).ln())
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kruskal::test_support::{all_indices, random_model};
    use crate::kruskal::ColumnNorm;
    use crate::sampling::{sample_exhaustive, sample_stratified};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_tensor<R: Rng>(shape: &[usize], density: f64, rng: &mut R) -> SparseCountTensor {
        let (mut coords, mut counts) = (vec![], vec![]);
        for idx in all_indices(shape) {
            if rng.gen_bool(density) {
                coords.push(idx);
                counts.push(rng.gen_range(1..8));
            }
        }
        SparseCountTensor::new(shape.to_vec(), coords, counts).unwrap()
    }

    fn dense_nll(x: &SparseCountTensor, m: &KruskalModel, eps: f64) -> f64 {
        all_indices(x.shape())
            .iter()
            .map(|idx| {
                let mv = m.entry(idx).unwrap();
                mv - x.get(idx) as f64 * mv.max(eps).ln()
            })
            .sum()
    }

    #[test]
    fn empty_tensor_is_total_sum() {
        let x = SparseCountTensor::zeros(vec![2, 2, 2]).unwrap();
        let nll = poisson_nll(&x, &KruskalModel::ones(&[2, 2, 2], 1), DEFAULT_EPS).unwrap();
        assert_eq!(nll.value, 8.0);
        assert_eq!(nll.n_entries_implicit, 8);
    }

    #[test]
    fn single_entry_with_unit_model() {
        let x = SparseCountTensor::new(vec![2, 2, 2], vec![vec![1, 0, 1]], vec![1]).unwrap();
        let nll = poisson_nll(&x, &KruskalModel::ones(&[2, 2, 2], 1), DEFAULT_EPS).unwrap();
        assert_eq!(nll.value, 8.0);
    }

    #[test]
    fn shape_mismatch() {
        let x = SparseCountTensor::zeros(vec![2, 2, 3]).unwrap();
        let m = KruskalModel::ones(&[2, 2, 2], 1);
        assert!(matches!(poisson_nll(&x, &m, DEFAULT_EPS), Err(Error::ShapeMismatch(_))));
        assert!(matches!(poisson_nll_gradient(&x, &m, DEFAULT_EPS), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = random_tensor(&[4, 4, 4], 0.3, &mut rng);
            let m = random_model(&[4, 4, 4], 3, &mut rng);
            let got = poisson_nll(&x, &m, DEFAULT_EPS).unwrap().value;
            let want = dense_nll(&x, &m, DEFAULT_EPS);
            assert!((got - want).abs() <= 1e-10 * want.abs());
        }
    }

    #[test]
    fn invariant_under_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor(&[5, 3, 4], 0.4, &mut rng);
        let m = random_model(&[5, 3, 4], 2, &mut rng);
        let a = poisson_nll(&x, &m, DEFAULT_EPS).unwrap().value;
        for norm in [ColumnNorm::One, ColumnNorm::Two] {
            let b = poisson_nll(&x, &m.normalize_columns(norm), DEFAULT_EPS).unwrap().value;
            assert!((a - b).abs() <= 1e-10 * a.abs());
        }
    }

    #[test]
    fn gradient_of_zero_tensor_is_colsum_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&[3, 4, 2], 2, &mut rng);
        let x = SparseCountTensor::zeros(vec![3, 4, 2]).unwrap();
        let g = poisson_nll_gradient(&x, &m, DEFAULT_EPS).unwrap();
        let sums = m.column_sums();
        for k in 0..3 {
            for r in 0..2 {
                let expect = m.weights()[r]
                    * (0..3).filter(|&j| j != k).map(|j| sums[j][r]).product::<f64>();
                for i in 0..m.shape()[k] {
                    assert!((g.factors[k][[i, r]] - expect).abs() <= 1e-12 * expect);
                }
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_scalar_mle() {
        let x = SparseCountTensor::new(vec![1, 1, 1], vec![vec![0, 0, 0]], vec![7]).unwrap();
        let m = KruskalModel::ones(&[1, 1, 1], 1).scale_weights(7.0);
        let g = poisson_nll_gradient(&x, &m, DEFAULT_EPS).unwrap();
        assert!(g.weights.iter().all(|v| v.abs() < 1e-12));
        assert!(g.factors.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = random_tensor(&[4, 4, 4], 0.3, &mut rng);
        let m = random_model(&[4, 4, 4], 2, &mut rng);
        let g = poisson_nll_gradient(&x, &m, DEFAULT_EPS).unwrap();
        let h = 1e-6;
        let f = |m: &KruskalModel| poisson_nll(&x, m, DEFAULT_EPS).unwrap().value;
        for k in 0..3 {
            for i in 0..4 {
                for r in 0..2 {
                    let (w, mut fs) = m.clone().into_parts();
                    fs[k][[i, r]] += h;
                    let plus = f(&KruskalModel::from_parts(w.clone(), fs.clone()));
                    fs[k][[i, r]] -= 2.0 * h;
                    let minus = f(&KruskalModel::from_parts(w, fs));
                    let fd = (plus - minus) / (2.0 * h);
                    let an = g.factors[k][[i, r]];
                    assert!((an - fd).abs() / (1.0 + an.abs()) < 1e-6, "{an} vs {fd}");
                }
            }
        }
        for r in 0..2 {
            let (mut w, fs) = m.clone().into_parts();
            w[r] += h;
            let plus = f(&KruskalModel::from_parts(w.clone(), fs.clone()));
            w[r] -= 2.0 * h;
            let minus = f(&KruskalModel::from_parts(w, fs));
            let fd = (plus - minus) / (2.0 * h);
            assert!((g.weights[r] - fd).abs() / (1.0 + g.weights[r].abs()) < 1e-6);
        }
    }

    #[test]
    fn full_sample_estimate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&[3, 3, 4], 0.3, &mut rng);
        let m = random_model(&[3, 3, 4], 2, &mut rng);
        let sample = sample_exhaustive(&x);
        let est = stochastic_nll_estimate(&m, &sample, DEFAULT_EPS).unwrap();
        let exact = poisson_nll(&x, &m, DEFAULT_EPS).unwrap().value;
        assert!((est - exact).abs() <= 1e-12 * exact.abs());
    }

    #[test]
    fn zero_stratum_on_empty_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = SparseCountTensor::zeros(vec![3, 3, 3]).unwrap();
        let m = KruskalModel::ones(&[3, 3, 3], 1).scale_weights(0.5);
        let sample = sample_stratified(&x, 0, 50, &mut rng).unwrap();
        let est = stochastic_nll_estimate(&m, &sample, DEFAULT_EPS).unwrap();
        assert!((est - m.total_sum()).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_rejected() {
        let m = KruskalModel::ones(&[2, 2], 1);
        assert_eq!(
            stochastic_nll_estimate(&m, &SampleSet::default(), DEFAULT_EPS),
            Err(Error::EmptySample)
        );
    }

    #[test]
    fn stratified_estimate_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let shape = [20, 20, 20];
        let x = random_tensor(&shape, 0.02, &mut rng);
        let m = random_model(&shape, 3, &mut rng);
        let exact = poisson_nll(&x, &m, DEFAULT_EPS).unwrap().value;
        let draws = 10_000;
        let estimates: Vec<f64> = (0..draws)
            .map(|_| {
                let s = sample_stratified(&x, 20, 20, &mut rng).unwrap();
                stochastic_nll_estimate(&m, &s, DEFAULT_EPS).unwrap()
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / draws as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let stderr = (var / draws as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * stderr, "mean {mean} exact {exact} se {stderr}");
    }
}
