//! Comparison measures over sets of computed models: the approximate MLE,
//! signed relative NLL differences, epsilon-ball probabilities, factor match
//! scores, and the FMS fraction curve with its area.

mod assignment;
mod fms;

pub use assignment::max_weight_assignment;
pub use fms::{fms, fms_score_matrix, FMS_EQUAL, FMS_SIMILAR};

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::objective::poisson_nll;
use crate::record::ResultSet;
use crate::tensor::SparseCountTensor;

/// Index of the smallest value; the earliest index wins ties.
pub fn argmin_first(values: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(Error::EmptySet)
}

/// Minimum-NLL member of `set` (NLL recomputed exactly against `x`),
/// earliest member on ties.
pub fn approx_mle<'a>(
    set: &'a ResultSet,
    x: &SparseCountTensor,
    eps: f64,
) -> Result<(usize, &'a KruskalModel)> {
    set.ensure_non_empty()?;
    let nlls = set
        .models()
        .map(|m| poisson_nll(x, m, eps).map(|v| v.value))
        .collect::<Result<Vec<_>>>()?;
    let i = argmin_first(&nlls)?;
    Ok((i, &set.records[i].model))
}

/// `(f_n - f_star) / |f_star|`; negative when `f_n` is the better fit.
pub fn signed_rel_diff(f_n: f64, f_star: f64) -> Result<f64> {
    if f_star == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((f_n - f_star) / f_star.abs())
}

/// Fraction of `nlls` whose signed relative difference to `f_star` is
/// strictly inside the ball of radius `eps`.
pub fn prob_within_eps_values(f_star: f64, nlls: &[f64], eps: f64) -> Result<f64> {
    if nlls.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut hits = 0usize;
    for &f in nlls {
        if signed_rel_diff(f, f_star)?.abs() < eps {
            hits += 1;
        }
    }
    Ok(hits as f64 / nlls.len() as f64)
}

/// Epsilon-ball probability estimate of `set` around `mstar`.
pub fn prob_within_eps(
    mstar: &KruskalModel,
    set: &ResultSet,
    x: &SparseCountTensor,
    eps: f64,
    nll_eps: f64,
) -> Result<f64> {
    set.ensure_non_empty()?;
    let f_star = poisson_nll(x, mstar, nll_eps)?.value;
    let nlls = set
        .models()
        .map(|m| poisson_nll(x, m, nll_eps).map(|v| v.value))
        .collect::<Result<Vec<_>>>()?;
    prob_within_eps_values(f_star, &nlls, eps)
}

/// 1 when `fms(mstar, mn) >= t`, else 0.
pub fn fms_indicator(mstar: &KruskalModel, mn: &KruskalModel, t: f64) -> Result<u8> {
    Ok(u8::from(fms(mstar, mn)? >= t))
}

/// FMS of every member of `set` against `mstar`, in set order.
pub fn fms_values(mstar: &KruskalModel, set: &ResultSet) -> Result<Vec<f64>> {
    set.ensure_non_empty()?;
    set.models().map(|m| fms(mstar, m)).collect()
}

/// Fraction of scores at or above `t`.
pub fn fms_fraction_values(scores: &[f64], t: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64)
}

pub fn fms_fraction(mstar: &KruskalModel, set: &ResultSet, t: f64) -> Result<f64> {
    fms_fraction_values(&fms_values(mstar, set)?, t)
}

/// Area under the FMS fraction curve over `t` in `[tau, 1]`, raw and
/// normalized by `1 - tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmsAuc {
    pub raw: f64,
    pub normalized: f64,
}

/// Exact integral of the step function `t -> fraction(scores >= t)` over
/// `[tau, 1]`.
pub fn fms_auc_values(scores: &[f64], tau: f64) -> Result<FmsAuc> {
    if scores.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must be in [0, 1), got {tau}")));
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Walk breakpoints from t = 1 downwards; between consecutive sorted
    // scores the fraction is constant.
    let n = sorted.len() as f64;
    let mut raw = 0.0;
    let mut upper = 1.0;
    for (count, &s) in sorted.iter().enumerate() {
        let lower = s.max(tau);
        if lower < upper {
            raw += (upper - lower) * count as f64 / n;
            upper = lower;
        }
        if s <= tau {
            break;
        }
    }
    if upper > tau && sorted.last().is_some_and(|&s| s > tau) {
        raw += (upper - tau) * 1.0;
    }
    Ok(FmsAuc { raw, normalized: raw / (1.0 - tau) })
}

pub fn fms_auc(mstar: &KruskalModel, set: &ResultSet, tau: f64) -> Result<FmsAuc> {
    fms_auc_values(&fms_values(mstar, set)?, tau)
}
