// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense symmetric-matrix helpers: Cholesky factorization and
//! triangular solves. Matrices are row-major `dim x dim` buffers.
//!
//! Quadratic forms elsewhere in the crate go through the stored factor
//! (one forward solve plus a dot product); nothing ever inverts a matrix
//! explicitly.

/// Attempts the lower-triangular Cholesky factorization of a symmetric
/// matrix. Returns `None` when any pivot falls at or below `pivot_floor`,
/// which callers use to trigger a ridge escalation. `pivot_floor` must be
/// >= 0; a strictly positive floor rejects numerically semi-definite
/// inputs whose pivots survive rounding as tiny positives.
pub(crate) fn cholesky_lower(a: &[f64], dim: usize, pivot_floor: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if !(sum > pivot_floor) {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Solves `L z = v` in place for lower-triangular `L`.
pub(crate) fn forward_solve(l: &[f64], dim: usize, v: &mut [f64]) {
    debug_assert_eq!(v.len(), dim);
    for i in 0..dim {
        let mut sum = v[i];
        for k in 0..i {
            sum -= l[i * dim + k] * v[k];
        }
        v[i] = sum / l[i * dim + i];
    }
}

/// Solves `L' x = z` in place for lower-triangular `L` (transpose solve).
pub(crate) fn backward_solve(l: &[f64], dim: usize, v: &mut [f64]) {
    debug_assert_eq!(v.len(), dim);
    for i in (0..dim).rev() {
        let mut sum = v[i];
        for k in (i + 1)..dim {
            sum -= l[k * dim + i] * v[k];
        }
        v[i] = sum / l[i * dim + i];
    }
}
