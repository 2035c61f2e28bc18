//! Contraction kernels shared by the solvers.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::tensor::SparseCountTensor;

/// Matricized tensor times Khatri-Rao product with per-nonzero values
/// substituted for the tensor's counts:
///
/// `out[i, r] = sum over nonzeros e with index_k(e) = i of values[e] * prod_{j != k} A_j(index_j(e), r)`.
///
/// Weights are not applied.
pub fn mttkrp_masked(
    x: &SparseCountTensor,
    model: &KruskalModel,
    mode: usize,
    values: &[f64],
) -> Result<Array2<f64>> {
    if values.len() != x.nnz() {
        return Err(Error::LengthMismatch { expected: x.nnz(), actual: values.len() });
    }
    if mode >= x.ndims() {
        return Err(Error::InvalidArgument(format!(
            "mode {mode} out of range for {}-way tensor",
            x.ndims()
        )));
    }
    model.check_compatible(x)?;
    let mut out = Array2::zeros((x.shape()[mode], model.rank()));
    accumulate(
        model.factors(),
        mode,
        (0..x.nnz()).map(|e| (x.index(e), values[e])),
        &mut out,
    );
    Ok(out)
}

/// Contiguous row views of a set of factor matrices.
pub(crate) struct Rows<'a> {
    data: Vec<&'a [f64]>,
    rank: usize,
}

impl<'a> Rows<'a> {
    pub(crate) fn new(factors: &'a [Array2<f64>]) -> Self {
        let rank = factors.first().map_or(0, |a| a.ncols());
        let data = factors
            .iter()
            .map(|a| a.as_slice().expect("factor matrices are stored in standard layout"))
            .collect();
        Rows { data, rank }
    }

    #[inline]
    pub(crate) fn row(&self, mode: usize, i: usize) -> &'a [f64] {
        &self.data[mode][i * self.rank..(i + 1) * self.rank]
    }

    /// `sum_r w_r prod_k A_k(idx_k, r)`, with unit weights when `weights`
    /// is `None`. `scratch` must hold exactly R values.
    #[inline]
    pub(crate) fn entry(&self, weights: Option<&[f64]>, idx: &[usize], scratch: &mut [f64]) -> f64 {
        match weights {
            Some(w) => scratch.copy_from_slice(w),
            None => scratch.fill(1.0),
        }
        for (k, &i) in idx.iter().enumerate() {
            for (s, &f) in scratch.iter_mut().zip(self.row(k, i)) {
                *s *= f;
            }
        }
        scratch.iter().sum()
    }

    /// Adds `v * prod_{j != mode} A_j(idx_j, :)` to row `idx_mode` of `out`.
    /// `scratch` must hold exactly R values.
    #[inline]
    pub(crate) fn add_khatri_rao_row(&self, mode: usize, idx: &[usize], v: f64, out: &mut [f64], scratch: &mut [f64]) {
        scratch.fill(v);
        for (j, &i) in idx.iter().enumerate() {
            if j != mode {
                for (s, &f) in scratch.iter_mut().zip(self.row(j, i)) {
                    *s *= f;
                }
            }
        }
        let start = idx[mode] * self.rank;
        for (dst, &src) in out[start..start + self.rank].iter_mut().zip(scratch.iter()) {
            *dst += src;
        }
    }
}

/// Accumulates `v * prod_{j != mode} A_j(idx_j, :)` into row `idx_mode` of
/// `out` for every `(idx, v)` pair, in iteration order.
pub(crate) fn accumulate<'a, I>(factors: &[Array2<f64>], mode: usize, entries: I, out: &mut Array2<f64>)
where
    I: Iterator<Item = (&'a [usize], f64)>,
{
    let rows = Rows::new(factors);
    let mut scratch = vec![0.0; out.ncols()];
    let out = out.as_slice_mut().expect("output is freshly allocated");
    for (idx, v) in entries {
        if v != 0.0 {
            rows.add_khatri_rao_row(mode, idx, v, out, &mut scratch);
        }
    }
}
