//! Factor match score between two Kruskal models.

use ndarray::Array2;

use super::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;

/// Scores at or above this are "similar".
pub const FMS_SIMILAR: f64 = 0.85;
/// Scores at or above this are "equal".
pub const FMS_EQUAL: f64 = 0.95;

/// Pairwise component scores: entry `(r, s)` is
/// `(1 - |xi_a[r] - xi_b[s]| / max(xi_a[r], xi_b[s])) * prod_n cos(A_n(:,r), B_n(:,s))`
/// where `xi` is the weight times the product of two-norms of the columns.
pub fn fms_score_matrix(a: &KruskalModel, b: &KruskalModel) -> Result<Array2<f64>> {
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch(a.rank(), b.rank()));
    }
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(a.shape(), b.shape()));
    }
    let rank = a.rank();
    let norms = |m: &KruskalModel| -> Vec<Vec<f64>> {
        m.factors()
            .iter()
            .map(|f| (0..rank).map(|r| f.column(r).dot(&f.column(r))).collect())
            .collect()
    };
    // squared two-norms, per mode per column
    let (na, nb) = (norms(a), norms(b));
    let xi = |m: &KruskalModel, n2: &[Vec<f64>]| -> Vec<f64> {
        (0..rank)
            .map(|r| m.weights()[r] * n2.iter().map(|v| v[r].sqrt()).product::<f64>())
            .collect()
    };
    let (xa, xb) = (xi(a, &na), xi(b, &nb));

    Ok(Array2::from_shape_fn((rank, rank), |(r, s)| {
        let penalty = if xa[r] == 0.0 && xb[s] == 0.0 {
            1.0
        } else {
            1.0 - (xa[r] - xb[s]).abs() / xa[r].max(xb[s])
        };
        let mut cos_prod = 1.0;
        for (mode, (fa, fb)) in a.factors().iter().zip(b.factors()).enumerate() {
            let denom = (na[mode][r] * nb[mode][s]).sqrt();
            let cos = if denom > 0.0 {
                (fa.column(r).dot(&fb.column(s)) / denom).min(1.0)
            } else {
                0.0
            };
            cos_prod *= cos;
        }
        penalty * cos_prod
    }))
}

/// Factor match score: the component-averaged score under the best
/// one-to-one matching of components, found exactly.
pub fn fms(a: &KruskalModel, b: &KruskalModel) -> Result<f64> {
    let scores = fms_score_matrix(a, b)?;
    let perm = max_weight_assignment(&scores);
    let total: f64 = perm.iter().enumerate().map(|(r, &s)| scores[[r, s]]).sum();
    Ok(total / a.rank() as f64)
}
