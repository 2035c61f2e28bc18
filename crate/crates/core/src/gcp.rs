//! Stochastic all-at-once Poisson CP fitting with Adam (GCP-Adam).
//!
//! The weights are folded into the first factor and all factors are updated
//! together from stratified-sample gradient estimates. Work is organized in
//! epochs of `iters_per_epoch` Adam steps. After each epoch the objective is
//! estimated on a fixed evaluation sample; an epoch that makes the estimate
//! worse is rolled back and the learning rate is multiplied by `decay`. The
//! solve ends when the learning rate falls below `alpha_final` or the epoch
//! budget runs out.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::kruskal::{ColumnNorm, KruskalModel};
use crate::objective::{stochastic_nll_estimate, DEFAULT_EPS};
use crate::sampling::{sample_exhaustive, sample_stratified, SampleSet};
use crate::tensor::SparseCountTensor;
use crate::trace::{Checkpoint, SolveTrace, TraceEntry};

/// How gradient and evaluation samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Uniform nonzeros plus uniform zeros, inverse-probability weighted.
    Stratified,
    /// Every entry of the tensor with unit weight; exact gradients. Only
    /// for tensors small enough to enumerate.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcpOptions {
    pub alpha0: f64,
    pub alpha_final: f64,
    /// Learning-rate multiplier applied after a rejected epoch.
    pub decay: f64,
    pub iters_per_epoch: usize,
    /// Nonzeros per gradient sample; `None` means `min(nnz, 1000)`.
    pub samples_nonzero: Option<usize>,
    /// Zeros per gradient sample; `None` means the nonzero sample size.
    pub samples_zero: Option<usize>,
    /// Nonzeros in the evaluation sample; `None` means `min(nnz, 100_000)`.
    pub fit_samples_nonzero: Option<usize>,
    /// Zeros in the evaluation sample; `None` means the nonzero count.
    pub fit_samples_zero: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Epoch budget; one epoch is one work unit.
    pub max_epochs: usize,
    /// Learning rates at which to snapshot the model.
    pub checkpoint_rates: Vec<f64>,
    pub eps: f64,
    pub sampler: Sampler,
}

impl Default for GcpOptions {
    fn default() -> Self {
        GcpOptions {
            alpha0: 1e-3,
            alpha_final: 1e-15,
            decay: 0.1,
            iters_per_epoch: 100,
            samples_nonzero: None,
            samples_zero: None,
            fit_samples_nonzero: None,
            fit_samples_zero: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 10_000,
            checkpoint_rates: Vec::new(),
            eps: DEFAULT_EPS,
            sampler: Sampler::Stratified,
        }
    }
}

impl GcpOptions {
    pub fn with_budget(mut self, epochs: usize) -> Self {
        self.max_epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_final > 0.0
            && self.alpha_final <= self.alpha0
            && self.alpha0.is_finite()
            && self.decay > 0.0
            && self.decay < 1.0
            && self.iters_per_epoch > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.eps > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid GCP options: {self:?}")));
        }
        Ok(())
    }

    fn gradient_sizes(&self, x: &SparseCountTensor) -> (usize, usize) {
        let nz = self.samples_nonzero.unwrap_or_else(|| x.nnz().min(1000));
        let z = self.samples_zero.unwrap_or(nz);
        clamp_zero_samples(x, nz, z)
    }

    fn fit_sizes(&self, x: &SparseCountTensor) -> (usize, usize) {
        let nz = self.fit_samples_nonzero.unwrap_or_else(|| x.nnz().min(100_000));
        let z = self.fit_samples_zero.unwrap_or(nz);
        clamp_zero_samples(x, nz, z)
    }
}

fn clamp_zero_samples(x: &SparseCountTensor, nz: usize, z: usize) -> (usize, usize) {
    let z = if x.num_zeros() < 1.0 { 0 } else { z };
    let nz = if x.nnz() == 0 { 0 } else { nz };
    (nz, z)
}

/// Relative slack when comparing learning rates against thresholds, so that
/// `1e-3 * 0.1^6` counts as reaching `1e-9`.
const RATE_SLACK: f64 = 1e-9;

fn below(rate: f64, threshold: f64) -> bool {
    rate < threshold * (1.0 - RATE_SLACK)
}

struct AdamState {
    params: Vec<Array2<f64>>,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: i32,
}

/// Runs GCP-Adam from `init`, drawing all randomness from `rng`.
pub fn gcp_adam<R: Rng + ?Sized>(
    x: &SparseCountTensor,
    rank: usize,
    init: &KruskalModel,
    opts: &GcpOptions,
    rng: &mut R,
) -> Result<SolveTrace> {
    opts.validate()?;
    init.check_compatible(x)?;
    if init.rank() != rank {
        return Err(Error::RankMismatch(rank, init.rank()));
    }
    let start = Instant::now();

    if opts.max_epochs == 0 {
        return Ok(SolveTrace {
            entries: Vec::new(),
            converged: false,
            model: init.clone(),
            checkpoints: Vec::new(),
        });
    }

    let fit_sample = draw(x, opts.sampler, opts.fit_sizes(x), rng)?;
    let grad_sizes = opts.gradient_sizes(x);
    let exhaustive = match opts.sampler {
        Sampler::Exhaustive => Some(sample_exhaustive(x)),
        Sampler::Stratified => None,
    };

    let (_, params) = init.absorb_weights(0).into_parts();
    let zeros: Vec<Array2<f64>> = params.iter().map(|a| Array2::zeros(a.raw_dim())).collect();
    let mut state = AdamState { params, first: zeros.clone(), second: zeros, step: 0 };
    let mut saved = AdamState {
        params: state.params.clone(),
        first: state.first.clone(),
        second: state.second.clone(),
        step: 0,
    };

    let mut rate = opts.alpha0;
    let mut best = estimate(&state.params, &fit_sample, opts.eps)?;
    let mut initial = TraceEntry::new(0, best);
    initial.nll_is_estimate = true;
    initial.learning_rate = Some(rate);
    let mut entries = vec![initial];
    let mut checkpoints = Vec::new();
    let mut converged = false;

    for epoch in 0..opts.max_epochs {
        let epoch_rate = rate;
        for _ in 0..opts.iters_per_epoch {
            let grads = match &exhaustive {
                Some(all) => sampled_gradient(&state.params, all, opts.eps),
                None => {
                    let s = sample_stratified(x, grad_sizes.0, grad_sizes.1, rng)?;
                    sampled_gradient(&state.params, &s, opts.eps)
                }
            };
            adam_step(&mut state, &grads, rate, opts);
        }

        let value = estimate(&state.params, &fit_sample, opts.eps)?;
        if !value.is_finite() || state.params.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEncountered("GCP-Adam epoch"));
        }
        let rejected = value > best;
        if rejected {
            state.params.clone_from(&saved.params);
            state.first.clone_from(&saved.first);
            state.second.clone_from(&saved.second);
            state.step = saved.step;
            let old = rate;
            rate *= opts.decay;
            for &c in &opts.checkpoint_rates {
                if !below(old, c) && below(rate, c) {
                    checkpoints.push(Checkpoint {
                        learning_rate: c,
                        work: epoch + 1,
                        model: to_model(&state.params),
                    });
                }
            }
        } else {
            saved.params.clone_from(&state.params);
            saved.first.clone_from(&state.first);
            saved.second.clone_from(&state.second);
            saved.step = state.step;
            best = value;
        }

        let mut entry = TraceEntry::new(epoch + 1, value);
        entry.nll_is_estimate = true;
        entry.learning_rate = Some(epoch_rate);
        entry.rejected = rejected;
        entry.elapsed = start.elapsed();
        entries.push(entry);

        if below(rate, opts.alpha_final) {
            converged = true;
            break;
        }
    }

    Ok(SolveTrace {
        entries,
        converged,
        model: to_model(&saved.params),
        checkpoints,
    })
}

fn draw<R: Rng + ?Sized>(
    x: &SparseCountTensor,
    sampler: Sampler,
    (nz, z): (usize, usize),
    rng: &mut R,
) -> Result<SampleSet> {
    match sampler {
        Sampler::Exhaustive => Ok(sample_exhaustive(x)),
        Sampler::Stratified => sample_stratified(x, nz, z, rng),
    }
}

fn to_model(params: &[Array2<f64>]) -> KruskalModel {
    let rank = params[0].ncols();
    KruskalModel::from_parts(Array1::ones(rank), params.to_vec()).normalize_columns(ColumnNorm::One)
}

fn estimate(params: &[Array2<f64>], sample: &SampleSet, eps: f64) -> Result<f64> {
    let rank = params[0].ncols();
    let model = KruskalModel::from_parts(Array1::ones(rank), params.to_vec());
    stochastic_nll_estimate(&model, sample, eps)
}

/// Gradient of the weighted sample loss `sum w (m - x log m)` with respect to
/// every factor (unit weights).
fn sampled_gradient(params: &[Array2<f64>], sample: &SampleSet, eps: f64) -> Vec<Array2<f64>> {
    let (d, rank) = (params.len(), params[0].ncols());
    let rows = kernels::Rows::new(params);
    let mut data: Vec<Vec<f64>> = params.iter().map(|a| vec![0.0; a.len()]).collect();
    let mut picked: Vec<&[f64]> = Vec::with_capacity(d);
    // prefix[k * rank + r] = prod_{j < k} A_j(idx_j, r)
    let mut prefix = vec![1.0; (d + 1) * rank];
    let mut suffix = vec![0.0; rank];
    for (idx, x, w) in sample.iter() {
        picked.clear();
        picked.extend(idx.iter().enumerate().map(|(k, &i)| rows.row(k, i)));
        for (k, a) in picked.iter().enumerate() {
            let (head, tail) = prefix.split_at_mut((k + 1) * rank);
            let (prev, next, a) = (&head[k * rank..], &mut tail[..rank], &a[..rank]);
            for r in 0..rank {
                next[r] = prev[r] * a[r];
            }
        }
        let m: f64 = prefix[d * rank..].iter().sum();
        let v = w * (1.0 - x / m.max(eps));
        if v == 0.0 {
            continue;
        }
        suffix.fill(v);
        for k in (0..d).rev() {
            let start = idx[k] * rank;
            let (out, pre, a) = (&mut data[k][start..start + rank], &prefix[k * rank..(k + 1) * rank], picked[k]);
            let suf = &mut suffix[..rank];
            for r in 0..rank {
                out[r] += pre[r] * suf[r];
                suf[r] *= a[r];
            }
        }
    }
    data.into_iter()
        .zip(params)
        .map(|(d, a)| Array2::from_shape_vec(a.raw_dim(), d).expect("same shape"))
        .collect()
}

fn adam_step(state: &mut AdamState, grads: &[Array2<f64>], rate: f64, opts: &GcpOptions) {
    state.step += 1;
    let bc1 = 1.0 - opts.beta1.powi(state.step);
    let bc2 = 1.0 - opts.beta2.powi(state.step);
    for k in 0..grads.len() {
        let (p, m, v, g) = (&mut state.params[k], &mut state.first[k], &mut state.second[k], &grads[k]);
        ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            *m = opts.beta1 * *m + (1.0 - opts.beta1) * g;
            *v = opts.beta2 * *v + (1.0 - opts.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p = (*p - rate * mhat / (vhat.sqrt() + opts.adam_eps)).max(0.0);
        });
    }
}
