//! Sparse finite-difference generator `-d_a phi - A(a) phi` with the birth
//! condition `phi(0) = int beta phi da`, as an independent route to `lambda0`.
//!
//! Unknowns are the profiles at age nodes `1..n_age`; the `a = 0` layer is
//! eliminated through the trapezoid birth condition solved for its own term,
//! `phi_0 = D sum_{j>=1} w_j beta_j phi_j` with `D = (1 - w_0 beta_0)^{-1}`.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::EvolutionOperator;
use crate::grid::AgeSpaceField;

/// Generator matrix on the ages `a_1, ..., a_{n-1}`.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    pub matrix: CsrMatrix<f64>,
    pub n_x: usize,
    pub n_layers: usize,
}

impl DiscreteGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let offsets = self.matrix.row_offsets();
        let cols = self.matrix.col_indices();
        let vals = self.matrix.values();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in offsets[i]..offsets[i + 1] {
                s += vals[p] * x[cols[p]];
            }
            *yi = s;
        }
    }

    /// Drops the `a = 0` layer of a field.
    pub fn restrict(&self, u: &AgeSpaceField) -> Vec<f64> {
        u.values()[self.n_x..].to_vec()
    }
}

/// Upwind age difference plus `A_h(a_k)` blocks; the only coupling that is
/// not block-bidiagonal is the birth row feeding layer 1.
pub fn assemble_discrete_generator(op: &EvolutionOperator) -> Result<DiscreteGenerator> {
    let age = *op.age_grid();
    let n_x = op.n_x();
    let layers = age.n_age() - 1;
    let da = age.da();
    let dim = layers * n_x;
    let idx = |k: usize, i: usize| (k - 1) * n_x + i;

    let w0 = age.weight(0);
    let gain: Vec<f64> = op
        .beta(0)
        .iter()
        .map(|&b| {
            let s = 1.0 - w0 * b;
            if s <= 0.0 {
                Err(Error::param("beta", "da/2 * beta(0) >= 1: refine the age grid"))
            } else {
                Ok(1.0 / s)
            }
        })
        .collect::<Result<_>>()?;

    let mut coo = CooMatrix::new(dim, dim);
    for k in 1..=layers {
        let a = op.operator(k);
        for i in 0..n_x {
            let row = idx(k, i);
            coo.push(row, row, -1.0 / da - a.diag[i]);
            if i > 0 {
                coo.push(row, idx(k, i - 1), -a.lower[i]);
            }
            if i + 1 < n_x {
                coo.push(row, idx(k, i + 1), -a.upper[i]);
            }
            if k > 1 {
                coo.push(row, idx(k - 1, i), 1.0 / da);
            }
        }
    }
    for j in 1..=layers {
        let w = age.weight(j);
        for i in 0..n_x {
            let v = gain[i] * w * op.beta(j)[i] / da;
            if v != 0.0 {
                coo.push(idx(1, i), idx(j, i), v);
            }
        }
    }
    Ok(DiscreteGenerator {
        matrix: CsrMatrix::from(&coo),
        n_x,
        n_layers: layers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominantEigenvalue {
    pub estimate: f64,
    /// Collatz-Wielandt bounds, shifted back.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `G + s I` with `s = max(-G_ii) + 1`, which is
/// nonnegative for the Metzler generator. Stops when the Collatz-Wielandt
/// bounds are within `tol` of each other.
pub fn dominant_eigenvalue(g: &DiscreteGenerator, tol: f64, max_iter: usize) -> DominantEigenvalue {
    let n = g.dim();
    let mut shift = 0.0f64;
    for (i, row) in g.matrix.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if i == j {
                shift = shift.max(-v);
            }
        }
    }
    shift += 1.0;

    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        g.apply(&x, &mut y);
        let (mut lo, mut hi, mut norm) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for i in 0..n {
            y[i] += shift * x[i];
            norm = norm.max(y[i]);
            if x[i] > 0.0 {
                let q = y[i] / x[i];
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        lower = lower.max(lo - shift);
        upper = upper.min(hi - shift);
        if norm == 0.0 {
            break;
        }
        for i in 0..n {
            x[i] = y[i] / norm;
        }
        if upper - lower <= tol {
            converged = true;
            break;
        }
    }
    DominantEigenvalue {
        estimate: 0.5 * (lower + upper),
        lower,
        upper,
        iterations,
        converged,
    }
}
