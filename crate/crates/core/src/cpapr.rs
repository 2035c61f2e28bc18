//! CP alternating Poisson regression with multiplicative updates (CPAPR-MU).
//!
//! Each outer iteration sweeps the modes in order. For mode `n` the weights
//! are pushed into the factor, `B = A_n * diag(lambda)`, and `B` is refined
//! by the fixed-point update `B <- B .* Phi(B)` where
//!
//! ```text
//! Phi(i, r) = sum over nonzeros e with i_n(e) = i of
//!             x_e / max(m_e, eps) * prod_{j != n} A_j(i_j(e), r)
//! ```
//!
//! The other factors have unit one-norm columns, so the gradient of the
//! mode subproblem is `1 - Phi` and the update is a majorization-minimization
//! step. Inner iterations stop once `max |min(B, 1 - Phi)|` drops to the KKT
//! tolerance. Afterwards the columns of `B` are renormalized into the
//! weights again.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::kruskal::{ColumnNorm, KruskalModel};
use crate::objective::{poisson_nll, DEFAULT_EPS};
use crate::tensor::SparseCountTensor;
use crate::trace::{SolveTrace, TraceEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct CpaprOptions {
    /// Outer iterations; one outer iteration is one work unit.
    pub max_outer_iters: usize,
    /// Multiplicative updates per mode per outer iteration.
    pub max_inner_iters: usize,
    /// KKT violation tolerance.
    pub kkt_tol: f64,
    pub eps: f64,
    /// Amount added to factor entries stuck at zero while the gradient
    /// still points into the interior.
    pub inadmissible_offset: f64,
    /// Entries below this count as zero for the offset rule.
    pub inadmissible_tol: f64,
}

impl Default for CpaprOptions {
    fn default() -> Self {
        CpaprOptions {
            max_outer_iters: 1000,
            max_inner_iters: 10,
            kkt_tol: 1e-4,
            eps: DEFAULT_EPS,
            inadmissible_offset: 1e-2,
            inadmissible_tol: 1e-10,
        }
    }
}

impl CpaprOptions {
    pub fn with_budget(mut self, outer_iters: usize) -> Self {
        self.max_outer_iters = outer_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.kkt_tol, self.eps, self.inadmissible_offset, self.inadmissible_tol];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "CPAPR tolerances must be positive: {self:?}"
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidArgument("max_inner_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Runs CPAPR-MU from `init`. The returned trace starts with the initial
/// model's NLL and has one entry per outer iteration.
pub fn cpapr_mu(
    x: &SparseCountTensor,
    rank: usize,
    init: &KruskalModel,
    opts: &CpaprOptions,
) -> Result<SolveTrace> {
    opts.validate()?;
    init.check_compatible(x)?;
    if init.rank() != rank {
        return Err(Error::RankMismatch(rank, init.rank()));
    }
    let start = Instant::now();
    let initial_nll = poisson_nll(x, init, opts.eps)?.value;
    let mut entries = vec![TraceEntry::new(0, initial_nll)];
    if opts.max_outer_iters == 0 {
        return Ok(SolveTrace {
            entries,
            converged: false,
            model: init.clone(),
            checkpoints: Vec::new(),
        });
    }

    let d = x.ndims();
    let (mut weights, mut factors) = init.normalize_columns(ColumnNorm::One).into_parts();
    let mut converged = false;

    for iter in 0..opts.max_outer_iters {
        let mut all_modes_converged = true;
        let mut worst_kkt: f64 = 0.0;
        for n in 0..d {
            let sub = ModeSubproblem::new(x, &factors, n);
            let run = sub.run_mu(sub.start(&factors[n], &weights, opts), opts);
            if run.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEncountered("CPAPR-MU update"));
            }
            all_modes_converged &= !run.iterated;

            let (lambda, a) = split_columns(run.b);
            weights = lambda;
            factors[n] = a;
            worst_kkt = worst_kkt.max(run.kkt);
        }

        let model = KruskalModel::from_parts(weights.clone(), factors.clone());
        let nll = poisson_nll(x, &model, opts.eps)?.value;
        if !nll.is_finite() {
            return Err(Error::NonFiniteEncountered("CPAPR-MU objective"));
        }
        let mut entry = TraceEntry::new(iter + 1, nll);
        entry.kkt_violation = Some(worst_kkt);
        entry.elapsed = start.elapsed();
        entries.push(entry);

        if all_modes_converged {
            converged = true;
            break;
        }
    }

    Ok(SolveTrace {
        entries,
        converged,
        model: KruskalModel::from_parts(weights, factors),
        checkpoints: Vec::new(),
    })
}

/// KKT violation of the mode-`mode` subproblem: the model is put in
/// one-norm normalized form, the weights are absorbed into `B = A_mode *
/// diag(lambda)`, and the result is `max |min(B, grad_B f)|`.
pub fn kkt_violation(
    x: &SparseCountTensor,
    model: &KruskalModel,
    mode: usize,
    eps: f64,
) -> Result<f64> {
    model.check_compatible(x)?;
    if mode >= x.ndims() {
        return Err(Error::InvalidArgument(format!("mode {mode} out of range")));
    }
    let (weights, factors) = model.normalize_columns(ColumnNorm::One).into_parts();
    let mut b = factors[mode].clone();
    for (r, mut col) in b.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v * weights[r]);
    }
    let sub = ModeSubproblem::new(x, &factors, mode);
    let phi = sub.phi(&b, eps);
    Ok(sub.kkt(&b, &phi))
}

/// Precomputed pieces of the mode-`n` subproblem for fixed other factors.
struct ModeSubproblem<'a> {
    x: &'a SparseCountTensor,
    mode: usize,
    rank: usize,
    // nnz x rank products of the other factors' rows
    pi: Vec<f64>,
    // product of the other factors' column sums, per component
    colsum_other: Vec<f64>,
}

/// Offsets tried when shifting inadmissible zeros.
const SHIFT_BACKTRACKS: usize = 6;

struct ModeRun {
    b: Array2<f64>,
    kkt: f64,
    /// Whether any multiplicative update ran.
    iterated: bool,
}

impl<'a> ModeSubproblem<'a> {
    fn new(x: &'a SparseCountTensor, factors: &[Array2<f64>], mode: usize) -> Self {
        let rank = factors[0].ncols();
        let mut pi = vec![1.0; x.nnz() * rank];
        for (e, row) in pi.chunks_exact_mut(rank).enumerate() {
            let idx = x.index(e);
            for (j, a) in factors.iter().enumerate() {
                if j == mode {
                    continue;
                }
                for (p, &v) in row.iter_mut().zip(a.row(idx[j])) {
                    *p *= v;
                }
            }
        }
        let colsum_other = (0..rank)
            .map(|r| {
                factors
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != mode)
                    .map(|(_, a)| a.column(r).sum())
                    .product()
            })
            .collect();
        ModeSubproblem { x, mode, rank, pi, colsum_other }
    }

    fn phi(&self, b: &Array2<f64>, eps: f64) -> Array2<f64> {
        let mut phi = Array2::zeros(b.raw_dim());
        for (e, pi) in self.pi.chunks_exact(self.rank).enumerate() {
            let i = self.x.index(e)[self.mode];
            let brow = b.row(i);
            let m: f64 = brow.iter().zip(pi).map(|(bv, p)| bv * p).sum();
            let v = self.x.count(e) as f64 / m.max(eps);
            for (dst, p) in phi.row_mut(i).iter_mut().zip(pi) {
                *dst += v * p;
            }
        }
        phi
    }

    fn kkt(&self, b: &Array2<f64>, phi: &Array2<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for ((i, r), &bv) in b.indexed_iter() {
            let grad = self.colsum_other[r] - phi[[i, r]];
            worst = worst.max(bv.min(grad).abs());
        }
        worst
    }

    /// The NLL as a function of `b` with the other factors fixed.
    fn objective(&self, b: &Array2<f64>, eps: f64) -> f64 {
        let linear: f64 = b.axis_iter(Axis(1)).zip(&self.colsum_other).map(|(col, &c)| col.sum() * c).sum();
        let mut log_term = 0.0;
        for (e, pi) in self.pi.chunks_exact(self.rank).enumerate() {
            let i = self.x.index(e)[self.mode];
            let m: f64 = b.row(i).iter().zip(pi).map(|(bv, p)| bv * p).sum();
            log_term += self.x.count(e) as f64 * m.max(eps).ln();
        }
        linear - log_term
    }

    /// Starting point `A_mode * diag(lambda)` for the multiplicative updates.
    /// Entries of `A_mode` below the inadmissible tolerance whose gradient
    /// points into the interior are raised by the offset, divided by ten
    /// until the objective improves, for at most [`SHIFT_BACKTRACKS`]
    /// attempts; if none improves, no entry is shifted.
    fn start(&self, a: &Array2<f64>, weights: &Array1<f64>, opts: &CpaprOptions) -> (Array2<f64>, Array2<f64>) {
        let b = scale_columns(a, weights);
        let phi = self.phi(&b, opts.eps);
        let blocked: Vec<(usize, usize)> = a
            .indexed_iter()
            .filter(|&((i, r), &v)| v < opts.inadmissible_tol && phi[[i, r]] > self.colsum_other[r])
            .map(|(ix, _)| ix)
            .collect();
        if blocked.is_empty() {
            return (b, phi);
        }
        let base = self.objective(&b, opts.eps);
        let mut offset = opts.inadmissible_offset;
        for _ in 0..SHIFT_BACKTRACKS {
            let mut shifted = a.clone();
            for &ix in &blocked {
                shifted[ix] += offset;
            }
            let candidate = scale_columns(&shifted, weights);
            if self.objective(&candidate, opts.eps) < base {
                let phi = self.phi(&candidate, opts.eps);
                return (candidate, phi);
            }
            offset /= 10.0;
        }
        (b, phi)
    }

    fn run_mu(&self, (mut b, mut phi): (Array2<f64>, Array2<f64>), opts: &CpaprOptions) -> ModeRun {
        let mut kkt = self.kkt(&b, &phi);
        let mut iterated = false;
        for _ in 0..opts.max_inner_iters {
            if kkt <= opts.kkt_tol {
                break;
            }
            iterated = true;
            b.zip_mut_with(&phi, |bv, &p| *bv *= p);
            phi = self.phi(&b, opts.eps);
            kkt = self.kkt(&b, &phi);
        }
        ModeRun { b, kkt, iterated }
    }
}

fn scale_columns(a: &Array2<f64>, weights: &Array1<f64>) -> Array2<f64> {
    let mut b = a.clone();
    for (r, mut col) in b.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v * weights[r]);
    }
    b
}

/// Splits `b` into one-norm column scales and the normalized columns.
fn split_columns(mut b: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mut lambda = Array1::zeros(b.ncols());
    for (r, mut col) in b.axis_iter_mut(Axis(1)).enumerate() {
        let s: f64 = col.sum();
        if s > 0.0 {
            col.mapv_inplace(|v| v / s);
            lambda[r] = s;
        }
    }
    (lambda, b)
}
