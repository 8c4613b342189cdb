//! Tridiagonal matrices and their LU (Thomas) factorization.

use nalgebra::DMatrix;

/// Tridiagonal matrix stored by bands. `lower[0]` and `upper[n-1]` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[i]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                0.0
            }
        })
    }

    /// Factorization of `I + tau * self`.
    pub fn shifted_factor(&self, tau: f64) -> ThomasFactor {
        let n = self.dim();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_sup = 0.0;
        for i in 0..n {
            let a = if i > 0 { tau * self.lower[i] } else { 0.0 };
            let b = 1.0 + tau * self.diag[i];
            let c = if i + 1 < n { tau * self.upper[i] } else { 0.0 };
            let pivot = b - a * prev_sup;
            inv_pivot[i] = 1.0 / pivot;
            sub[i] = a;
            sup[i] = c * inv_pivot[i];
            prev_sup = sup[i];
        }
        ThomasFactor { sub, sup, inv_pivot }
    }
}

/// Thomas-algorithm factors. For an M-matrix every pivot is positive and the
/// multipliers keep their sign, so solving with a nonnegative right-hand side
/// yields a nonnegative result in floating point as well.
#[derive(Debug, Clone)]
pub struct ThomasFactor {
    sub: Vec<f64>,
    sup: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThomasFactor {
    pub fn dim(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(rhs.len(), n);
        let mut prev = 0.0;
        for i in 0..n {
            let v = (rhs[i] - self.sub[i] * prev) * self.inv_pivot[i];
            rhs[i] = v;
            prev = v;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.sup[i] * rhs[i + 1];
        }
    }

    /// Smallest pivot, used to detect a singular shift.
    pub fn min_pivot(&self) -> f64 {
        self.inv_pivot.iter().map(|p| 1.0 / p).fold(f64::INFINITY, f64::min)
    }
}
