//! Dense symmetric positive-definite solves via Cholesky.
//!
//! Kernel systems here are at most `max_test_samples` square and ridge
//! systems are a handful of columns, so an unblocked factorization is fast
//! enough; matrix products go through `ndarray::dot`.

use crate::error::{FocusError, Result};
use ndarray::{Array1, Array2, Axis};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor `a = L Lᵀ`. Fails if a pivot is not strictly positive.
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(FocusError::ShapeMismatch(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(FocusError::Singular(format!(
                    "non-positive pivot {diag:.3e} at index {j}"
                )));
            }
            let dsq = diag.sqrt();
            l[(j, j)] = dsq;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dsq;
            }
        }
        Ok(Self { l })
    }

    /// Solve `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `A X = B` for a matrix right-hand side. Both triangular sweeps
    /// run as axpy updates over contiguous rows of the workspace.
    pub fn solve_matrix(&self, b: &Array2<f64>) -> Array2<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        // forward: L Y = B
        for i in 0..n {
            let (done, mut rest) = x.view_mut().split_at(Axis(0), i);
            let mut row_i = rest.row_mut(0);
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    row_i.scaled_add(-lik, &done.row(k));
                }
            }
            let inv_d = 1.0 / self.l[(i, i)];
            row_i.mapv_inplace(|v| v * inv_d);
        }
        // backward: Lᵀ X = Y
        for i in (0..n).rev() {
            let (mut head, tail) = x.view_mut().split_at(Axis(0), i + 1);
            let mut row_i = head.row_mut(i);
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki != 0.0 {
                    row_i.scaled_add(-lki, &tail.row(k - i - 1));
                }
            }
            let inv_d = 1.0 / self.l[(i, i)];
            row_i.mapv_inplace(|v| v * inv_d);
        }
        x
    }

    /// Explicit inverse. Used where the inverse is applied from both sides
    /// of large products.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.l.nrows();
        let mut inv = self.solve_matrix(&Array2::eye(n));
        // symmetrize against accumulated rounding
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = m;
                inv[(j, i)] = m;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn solves_known_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let chol = Cholesky::new(&a).unwrap();
        let x = chol.solve_vec(&b);
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_matches_identity() {
        let a = array![[3.0, 1.0], [1.0, 2.0]];
        let inv = Cholesky::new(&a).unwrap().inverse();
        let id = a.dot(&inv);
        assert_abs_diff_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id[(1, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::new(&a).is_err());
    }
}
