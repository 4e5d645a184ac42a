use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `assignment` with row `i` matched to column `assignment[i]`.
/// Shortest augmenting paths with row/column potentials, `O(n³)`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Optimal mass transfer distance `(1/C min_π Σ_c |x_c - x̂_π(c)|^p)^{1/p}`.
pub fn omat(truth: &[[f64; 2]], estimate: &[[f64; 2]], p: f64) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "omat point sets",
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("must be >= 1, got {p}"),
        });
    }
    let c = truth.len();
    if c == 0 {
        return Ok(0.0);
    }
    let cost = DMatrix::from_fn(c, c, |i, j| dist(&truth[i], &estimate[j]).powf(p));
    let pi = hungarian(&cost);
    // summed in row order so the value is independent of the solver's internals
    let total: f64 = (0..c).map(|i| cost[(i, pi[i])]).sum();
    Ok((total / c as f64).powf(1.0 / p))
}

/// `(x, y)` of each target in a stacked `[x, y, vx, vy]` state.
pub fn target_positions(state: &DVector<f64>) -> Vec<[f64; 2]> {
    state.as_slice().chunks_exact(4).map(|c| [c[0], c[1]]).collect()
}

/// Mean squared error over all steps and coordinates.
pub fn mse(truth: &[DVector<f64>], estimate: &[DVector<f64>]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "mse trajectory length",
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, e) in truth.iter().zip(estimate) {
        if t.len() != e.len() {
            return Err(Error::DimensionMismatch {
                context: "mse state",
                expected: t.len(),
                actual: e.len(),
            });
        }
        total += (t - e).norm_squared();
        count += t.len();
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omat_examples() {
        let a = [[0.0, 0.0], [2.0, 0.0]];
        assert_eq!(omat(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(omat(&[[0.0, 0.0]], &[[3.0, 0.0]], 1.0).unwrap(), 3.0);
        let est = [[2.0, 0.0], [1.0, 0.0]];
        assert!((omat(&a, &est, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(omat(&a, &est[..1], 1.0).is_err());
        assert!(omat(&a, &est, 0.5).is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let a = hungarian(&c);
        let total: f64 = (0..3).map(|i| c[(i, a[i])]).sum();
        assert_eq!(total, 5.0);
        assert!(hungarian(&DMatrix::zeros(0, 0)).is_empty());
    }

    #[test]
    fn mse_examples() {
        let t = vec![DVector::from_vec(vec![0.0, 0.0])];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        let e = vec![DVector::from_vec(vec![1.0, 3.0])];
        assert_eq!(mse(&t, &e).unwrap(), 5.0);
        let t2 = vec![DVector::from_element(3, 1.0); 4];
        let e2 = vec![DVector::from_element(3, 2.0); 4];
        assert_eq!(mse(&t2, &e2).unwrap(), 1.0);
        assert!(mse(&t, &[]).is_err());
    }

    #[test]
    fn positions_from_stacked_state() {
        let s = DVector::from_vec(vec![1.0, 2.0, 0.1, 0.2, 3.0, 4.0, 0.3, 0.4]);
        assert_eq!(target_positions(&s), vec![[1.0, 2.0], [3.0, 4.0]]);
    }
}
