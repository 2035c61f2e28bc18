//! Stratified entry sampling for stochastic gradients and objective estimates.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::SparseCountTensor;

/// Sampled tensor entries with inverse-probability weights.
///
/// Entries from the nonzero stratum carry their true counts; entries from
/// the zero stratum carry 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    ndims: usize,
    coords: Vec<usize>,
    counts: Vec<f64>,
    weights: Vec<f64>,
    /// Entries drawn from the nonzero stratum (they come first).
    pub n_nonzero: usize,
    /// Entries drawn from the zero stratum.
    pub n_zero: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(multi-index, count, weight)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64, f64)> + '_ {
        self.coords
            .chunks_exact(self.ndims.max(1))
            .zip(self.counts.iter().zip(&self.weights))
            .map(|(idx, (&x, &w))| (idx, x, w))
    }

    fn push(&mut self, idx: &[usize], count: f64, weight: f64) {
        self.coords.extend_from_slice(idx);
        self.counts.push(count);
        self.weights.push(weight);
    }
}

/// Draws `s_nz` nonzeros uniformly with replacement (weight `nnz / s_nz`)
/// and `s_z` zero entries uniformly by rejection (weight `#zeros / s_z`).
pub fn sample_stratified<R: Rng + ?Sized>(
    x: &SparseCountTensor,
    s_nz: usize,
    s_z: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if s_nz == 0 && s_z == 0 {
        return Err(Error::EmptySample);
    }
    if s_nz > 0 && x.nnz() == 0 {
        return Err(Error::DegenerateTensor);
    }
    let zeros = x.num_zeros();
    if s_z > 0 && zeros < 1.0 {
        return Err(Error::DegenerateTensor);
    }

    let d = x.ndims();
    let mut out = SampleSet {
        ndims: d,
        coords: Vec::with_capacity((s_nz + s_z) * d),
        counts: Vec::with_capacity(s_nz + s_z),
        weights: Vec::with_capacity(s_nz + s_z),
        n_nonzero: s_nz,
        n_zero: s_z,
    };

    if s_nz > 0 {
        let w = x.nnz() as f64 / s_nz as f64;
        for _ in 0..s_nz {
            let e = rng.gen_range(0..x.nnz());
            out.push(x.index(e), x.count(e) as f64, w);
        }
    }

    if s_z > 0 {
        let w = zeros / s_z as f64;
        // Rejection degrades when almost every entry is nonzero; enumerate instead.
        if zeros / x.num_entries() < 0.05 {
            let zero_list = enumerate_zeros(x);
            for _ in 0..s_z {
                let z = &zero_list[rng.gen_range(0..zero_list.len())];
                out.push(z, 0.0, w);
            }
        } else {
            let mut idx = vec![0usize; d];
            let mut drawn = 0;
            while drawn < s_z {
                for (i, &n) in idx.iter_mut().zip(x.shape()) {
                    *i = rng.gen_range(0..n);
                }
                if !x.contains(&idx) {
                    out.push(&idx, 0.0, w);
                    drawn += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Every entry of the tensor with unit weight. Only sensible for tensors
/// small enough to enumerate.
pub fn sample_exhaustive(x: &SparseCountTensor) -> SampleSet {
    let d = x.ndims();
    let mut out = SampleSet { ndims: d, ..Default::default() };
    for_each_index(x.shape(), |idx| {
        let count = x.get(idx);
        out.push(idx, count as f64, 1.0);
        if count > 0 {
            out.n_nonzero += 1;
        } else {
            out.n_zero += 1;
        }
    });
    out
}

fn enumerate_zeros(x: &SparseCountTensor) -> Vec<Vec<usize>> {
    let mut zeros = Vec::new();
    let mut next = 0;
    for_each_index(x.shape(), |idx| {
        // stored entries are sorted in the same order as the enumeration
        if next < x.nnz() && x.index(next) == idx {
            next += 1;
        } else {
            zeros.push(idx.to_vec());
        }
    });
    debug_assert!(zeros.iter().all(|z| !x.contains(z)));
    zeros
}

/// Visits every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; shape.len()];
    loop {
        f(&idx);
        let mut mode = shape.len();
        loop {
            if mode == 0 {
                return;
            }
            mode -= 1;
            idx[mode] += 1;
            if idx[mode] < shape[mode] {
                break;
            }
            idx[mode] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_stratum_draws_stored_nonzeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = SparseCountTensor::new(
            vec![3, 3, 3],
            vec![vec![0, 1, 2], vec![2, 2, 0]],
            vec![4, 1],
        )
        .unwrap();
        let s = sample_stratified(&x, 25, 0, &mut rng).unwrap();
        assert_eq!(s.len(), 25);
        for (idx, count, w) in s.iter() {
            assert_eq!(x.get(idx) as f64, count);
            assert!(count > 0.0);
            assert_eq!(w, 2.0 / 25.0);
        }
    }

    #[test]
    fn one_nonzero_one_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = SparseCountTensor::new(vec![2, 2, 2], vec![vec![1, 1, 0]], vec![3]).unwrap();
        let s = sample_stratified(&x, 1, 0, &mut rng).unwrap();
        let got: Vec<_> = s.iter().map(|(i, c, w)| (i.to_vec(), c, w)).collect();
        assert_eq!(got, vec![(vec![1, 1, 0], 3.0, 1.0)]);
    }

    #[test]
    fn zero_stratum_avoids_nonzeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = SparseCountTensor::new(vec![2, 2, 2], vec![vec![0, 0, 0], vec![1, 1, 1]], vec![1, 2])
            .unwrap();
        let s = sample_stratified(&x, 3, 40, &mut rng).unwrap();
        assert_eq!((s.n_nonzero, s.n_zero, s.len()), (3, 40, 43));
        for (idx, count, w) in s.iter().skip(3) {
            assert!(!x.contains(idx));
            assert_eq!(count, 0.0);
            assert_eq!(w, 6.0 / 40.0);
        }
    }

    #[test]
    fn nearly_full_tensor_uses_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut coords = vec![];
        for_each_index(&[3, 3, 3], |i| {
            if i != [1, 2, 0] {
                coords.push(i.to_vec())
            }
        });
        let x = SparseCountTensor::new(vec![3, 3, 3], coords, vec![1; 26]).unwrap();
        let s = sample_stratified(&x, 0, 5, &mut rng).unwrap();
        assert!(s.iter().all(|(i, _, w)| i == [1, 2, 0] && w == 0.2));
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = SparseCountTensor::new(vec![1, 1], vec![vec![0, 0]], vec![1]).unwrap();
        assert_eq!(sample_stratified(&x, 0, 0, &mut rng), Err(Error::EmptySample));
        assert_eq!(sample_stratified(&x, 1, 1, &mut rng), Err(Error::DegenerateTensor));
    }

    #[test]
    fn exhaustive_covers_everything() {
        let x = SparseCountTensor::new(vec![2, 3], vec![vec![1, 2]], vec![5]).unwrap();
        let s = sample_exhaustive(&x);
        assert_eq!((s.len(), s.n_nonzero, s.n_zero), (6, 1, 5));
        assert_eq!(s.iter().map(|(_, c, _)| c).sum::<f64>(), 5.0);
    }

    #[test]
    fn nonzero_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut coords = vec![];
        for_each_index(&[5, 5, 5], |i| {
            if (i[0] + 2 * i[1] + 3 * i[2]) % 7 == 0 {
                coords.push(i.to_vec())
            }
        });
        let nnz = coords.len();
        let x = SparseCountTensor::new(vec![5, 5, 5], coords, vec![1; nnz]).unwrap();
        let draws = 100_000;
        let s = sample_stratified(&x, draws, 0, &mut rng).unwrap();
        let mut freq = std::collections::HashMap::new();
        for (idx, _, _) in s.iter() {
            *freq.entry(idx.to_vec()).or_insert(0usize) += 1;
        }
        let p = 1.0 / nnz as f64;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert_eq!(freq.len(), nnz);
        let mut chi2 = 0.0;
        for &c in freq.values() {
            assert!((c as f64 - expected).abs() < 3.0 * sigma);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // dof = nnz - 1; mean dof, sd sqrt(2 dof)
        let dof = (nnz - 1) as f64;
        assert!(chi2 < dof + 4.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
    }
}
