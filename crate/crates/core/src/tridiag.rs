//! Thomas elimination for tridiagonal systems.

use alloc::vec::Vec;

/// LU factors of a tridiagonal matrix with sub-diagonal `lower`, diagonal
/// `diag` and super-diagonal `upper` (`lower[i]` couples rows `i+1` and `i`).
/// Stable without pivoting for diagonally dominant matrices, which is the
/// only case used here.
#[derive(Clone, Debug)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    upper_scaled: Vec<f64>,
    pivot_inv: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        debug_assert!(lower.len() + 1 == n && upper.len() + 1 == n);
        let mut upper_scaled = alloc::vec![0.0; n.saturating_sub(1)];
        let mut pivot_inv = alloc::vec![0.0; n];
        let mut pivot = diag[0];
        pivot_inv[0] = 1.0 / pivot;
        for i in 1..n {
            upper_scaled[i - 1] = upper[i - 1] * pivot_inv[i - 1];
            pivot = diag[i] - lower[i - 1] * upper_scaled[i - 1];
            pivot_inv[i] = 1.0 / pivot;
        }
        Self {
            lower: lower.to_vec(),
            upper_scaled,
            pivot_inv,
        }
    }

    pub fn len(&self) -> usize {
        self.pivot_inv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot_inv.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.pivot_inv[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.pivot_inv[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_scaled[i] * rhs[i + 1];
        }
    }
}
