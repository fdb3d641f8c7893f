//! Small dense symmetric positive-definite solves.
//!
//! Every system this crate solves is a normal-equation matrix of a handful of
//! columns, so a plain Cholesky factorization is all that is needed.

/// A pivot is considered vanishing when it falls below this fraction of the
/// corresponding diagonal entry of the original matrix.
const RELATIVE_PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// stored row-major.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factor the row-major `dim x dim` matrix `a`. Returns `None` when the
    /// matrix is not numerically positive definite.
    pub(crate) fn factor(a: &[f64], dim: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), dim * dim);
        let mut lower = vec![0.0; dim * dim];
        for j in 0..dim {
            let diag = a[j * dim + j];
            if !diag.is_finite() || diag <= 0.0 {
                return None;
            }
            let mut pivot = diag;
            for k in 0..j {
                pivot -= lower[j * dim + k] * lower[j * dim + k];
            }
            if !pivot.is_finite() || pivot <= RELATIVE_PIVOT_TOLERANCE * diag {
                return None;
            }
            let root = pivot.sqrt();
            lower[j * dim + j] = root;
            for i in (j + 1)..dim {
                let mut sum = a[i * dim + j];
                for k in 0..j {
                    sum -= lower[i * dim + k] * lower[j * dim + k];
                }
                lower[i * dim + j] = sum / root;
            }
        }
        Some(Self { dim, lower })
    }

    /// Solve `L z = b`.
    pub(crate) fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut sum = z[i];
            for k in 0..i {
                sum -= self.lower[i * n + k] * z[k];
            }
            z[i] = sum / self.lower[i * n + i];
        }
        z
    }

    /// Solve `A x = b` using the stored factor.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.lower[k * n + i] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }
}

/// Factor `a`, retrying once with `ridge_factor * trace(a) / dim` added to the
/// diagonal when the plain factorization fails.
pub(crate) fn factor_with_ridge(a: &[f64], dim: usize, ridge_factor: f64) -> Option<Cholesky> {
    if let Some(chol) = Cholesky::factor(a, dim) {
        return Some(chol);
    }
    let trace: f64 = (0..dim).map(|i| a[i * dim + i]).sum();
    if !(trace.is_finite() && trace > 0.0) {
        return None;
    }
    let lambda = ridge_factor * trace / dim as f64;
    let mut ridged = a.to_vec();
    for i in 0..dim {
        ridged[i * dim + i] += lambda;
    }
    Cholesky::factor(&ridged, dim)
}
