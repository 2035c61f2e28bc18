//! Maximum-weight perfect assignment on a dense square score matrix.
//!
//! Shortest augmenting path Hungarian method with potentials, O(n^3).

use ndarray::Array2;

/// Returns `perm` maximizing `sum_r scores[r, perm[r]]`.
pub fn max_weight_assignment(scores: &Array2<f64>) -> Vec<usize> {
    let n = scores.nrows();
    assert_eq!(n, scores.ncols(), "score matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -scores[[i - 1, j - 1]];

    // 1-based potentials; column 0 is the virtual root
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}
