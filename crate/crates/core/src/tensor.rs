//! Sparse count tensors in coordinate form.
//!
//! Indices are 0-based inside the library. The FROSTT reader and writer in
//! [`crate::io`] convert from and to the 1-based external convention.

use crate::error::{Error, Result};

/// A d-way tensor of non-negative integer counts, stored as the list of its
/// nonzero entries sorted lexicographically by multi-index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCountTensor {
    shape: Vec<usize>,
    // nnz * d, row-major by entry
    coords: Vec<usize>,
    counts: Vec<u64>,
    // row-major linear index of each entry, sorted ascending
    linear: Vec<u128>,
}

impl SparseCountTensor {
    /// Builds a tensor from 0-based coordinates and positive counts.
    ///
    /// Entries may be given in any order; they are sorted. Repeated
    /// coordinates are rejected rather than summed.
    pub fn new(shape: Vec<usize>, coords: Vec<Vec<usize>>, counts: Vec<u64>) -> Result<Self> {
        if coords.len() != counts.len() {
            return Err(Error::LengthMismatch {
                expected: coords.len(),
                actual: counts.len(),
            });
        }
        validate_shape(&shape)?;
        let d = shape.len();
        let mut entries = Vec::with_capacity(coords.len());
        for (e, (idx, &count)) in coords.into_iter().zip(counts.iter()).enumerate() {
            if idx.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "entry {e} has {} indices, tensor has {d} modes",
                    idx.len()
                )));
            }
            for (mode, (&i, &size)) in idx.iter().zip(&shape).enumerate() {
                if i >= size {
                    return Err(Error::IndexOutOfBounds { mode, index: i, size });
                }
            }
            if count == 0 {
                return Err(Error::NonPositiveValue(e));
            }
            entries.push((linearize(&shape, &idx), idx, count));
        }
        entries.sort_unstable_by_key(|(lin, _, _)| *lin);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateCoordinate(w[0].1.clone()));
        }

        let mut tensor = SparseCountTensor {
            shape,
            coords: Vec::with_capacity(entries.len() * d),
            counts: Vec::with_capacity(entries.len()),
            linear: Vec::with_capacity(entries.len()),
        };
        for (lin, idx, count) in entries {
            tensor.coords.extend_from_slice(&idx);
            tensor.counts.push(count);
            tensor.linear.push(lin);
        }
        Ok(tensor)
    }

    /// Same as [`SparseCountTensor::new`] but with 1-based coordinates.
    pub fn from_one_based(
        shape: Vec<usize>,
        coords: Vec<Vec<usize>>,
        counts: Vec<u64>,
    ) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(coords.len());
        for idx in coords {
            let mut shifted = Vec::with_capacity(idx.len());
            for (mode, &i) in idx.iter().enumerate() {
                if i == 0 {
                    return Err(Error::IndexOutOfBounds {
                        mode,
                        index: 0,
                        size: shape.get(mode).copied().unwrap_or(0),
                    });
                }
                shifted.push(i - 1);
            }
            zero_based.push(shifted);
        }
        Self::new(shape, zero_based, counts)
    }

    /// An all-zero tensor.
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, Vec::new(), Vec::new())
    }

    pub fn ndims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    /// Multi-index of the `e`-th stored entry.
    #[inline]
    pub fn index(&self, e: usize) -> &[usize] {
        let d = self.shape.len();
        &self.coords[e * d..(e + 1) * d]
    }

    #[inline]
    pub fn count(&self, e: usize) -> u64 {
        self.counts[e]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Iterates over `(multi-index, count)` pairs in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], u64)> + '_ {
        self.coords
            .chunks_exact(self.shape.len().max(1))
            .zip(self.counts.iter().copied())
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of entries in the full tensor, as a float (may exceed u64).
    pub fn num_entries(&self) -> f64 {
        self.shape.iter().map(|&s| s as f64).product()
    }

    /// Number of implicit zero entries.
    pub fn num_zeros(&self) -> f64 {
        self.num_entries() - self.nnz() as f64
    }

    /// Count stored at `idx`, or 0 for an implicit zero.
    pub fn get(&self, idx: &[usize]) -> u64 {
        if idx.len() != self.shape.len() || idx.iter().zip(&self.shape).any(|(&i, &s)| i >= s) {
            return 0;
        }
        match self.linear.binary_search(&linearize(&self.shape, idx)) {
            Ok(pos) => self.counts[pos],
            Err(_) => 0,
        }
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.get(idx) > 0
    }
}

/// Row-major linear index of a multi-index (last mode fastest).
pub(crate) fn linearize(shape: &[usize], idx: &[usize]) -> u128 {
    idx.iter()
        .zip(shape)
        .fold(0u128, |acc, (&i, &s)| acc * s as u128 + i as u128)
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "tensor must have at least 2 modes, got {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!(
            "all dimensions must be positive, got {shape:?}"
        )));
    }
    Ok(())
}
