//! Dense Cholesky for the small symmetric systems of the Newton iteration.

use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Fails with the index of the first pivot that is not larger than
/// `rel_tol` times the original diagonal entry.
pub(crate) fn cholesky(a: &Array2<f64>, rel_tol: f64) -> Result<Array2<f64>, usize> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > rel_tol * a[[j, j]].abs()) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L L' x = b`.
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Index of the first column of a positive semidefinite Gram matrix that is
/// (numerically) a linear combination of the preceding ones.
pub(crate) fn first_dependent_column(gram: &Array2<f64>, rel_tol: f64) -> Option<usize> {
    let n = gram.nrows();
    let mut work = gram.clone();
    for j in 0..n {
        let pivot = work[[j, j]];
        if !(pivot > rel_tol * gram[[j, j]].abs()) {
            return Some(j);
        }
        for i in (j + 1)..n {
            let f = work[[i, j]] / pivot;
            if f == 0.0 {
                continue;
            }
            for k in (j + 1)..n {
                work[[i, k]] -= f * work[[j, k]];
            }
        }
    }
    None
}
