//! Finite-difference assembly of the age-dependent dispersal/mortality
//! operator `A(a) w = -div(d(a, .) grad w) + mu(a, .) w`.
//!
//! Coefficients are functions of `(U, a, x)`, where `U` is the frozen
//! population value at `(a, x)`. Linear problems evaluate them at `U = 0`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{AgeGrid, Boundary, SpaceGrid, SpatialProfile};
use crate::tridiag::Tridiagonal;

/// A rate depending on the population value `U`, age `a` and position `x`.
pub type Rate = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Diffusion `d`, mortality `mu` and fertility `beta`.
#[derive(Clone)]
pub struct CoefficientSet {
    d: Rate,
    mu: Rate,
    beta: Rate,
    d_min: f64,
    linear: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("d_min", &self.d_min)
            .field("linear", &self.linear)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// Population-dependent coefficients.
    pub fn new(
        d: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        mu: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_min: f64,
    ) -> Self {
        Self {
            d: Arc::new(d),
            mu: Arc::new(mu),
            beta: Arc::new(beta),
            d_min,
            linear: false,
        }
    }

    /// Coefficients that ignore the population value.
    pub fn linear(
        d: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        mu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d_min: f64,
    ) -> Self {
        Self {
            d: Arc::new(move |_, a, x| d(a, x)),
            mu: Arc::new(move |_, a, x| mu(a, x)),
            beta: Arc::new(move |_, a, x| beta(a, x)),
            d_min,
            linear: true,
        }
    }

    /// Constant coefficients; `d_min` is set to `d`.
    pub fn constant(d: f64, mu: f64, beta: f64) -> Self {
        Self::linear(move |_, _| d, move |_, _| mu, move |_, _| beta, d)
    }

    pub fn from_rates(d: Rate, mu: Rate, beta: Rate, d_min: f64, linear: bool) -> Self {
        Self {
            d,
            mu,
            beta,
            d_min,
            linear,
        }
    }

    pub fn d(&self, u: f64, a: f64, x: f64) -> f64 {
        (self.d)(u, a, x)
    }

    pub fn mu(&self, u: f64, a: f64, x: f64) -> f64 {
        (self.mu)(u, a, x)
    }

    pub fn beta(&self, u: f64, a: f64, x: f64) -> f64 {
        (self.beta)(u, a, x)
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// Same coefficients with fertility multiplied by `c`.
    pub fn with_beta_scaled(&self, c: f64) -> Self {
        let beta = self.beta.clone();
        Self {
            beta: Arc::new(move |u, a, x| c * beta(u, a, x)),
            ..self.clone()
        }
    }

    /// Same coefficients with `c` added to the mortality.
    pub fn with_mu_shift(&self, c: f64) -> Self {
        let mu = self.mu.clone();
        Self {
            mu: Arc::new(move |u, a, x| mu(u, a, x) + c),
            ..self.clone()
        }
    }
}

/// Discrete `A(a)` on a [`SpaceGrid`], with the age and frozen profile it
/// was assembled at.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: Tridiagonal,
    pub age: f64,
    pub frozen: Option<SpatialProfile>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }
}

/// Central second-order finite differences with arithmetic face averages of
/// `d`. Dirichlet rows eliminate the zero boundary values; Neumann rows use a
/// reflected ghost node.
pub fn assemble(
    coeffs: &CoefficientSet,
    a: f64,
    grid: &SpaceGrid,
    frozen_u: Option<&SpatialProfile>,
) -> Result<OperatorMatrix> {
    let n = grid.n_x();
    if let Some(u) = frozen_u {
        if u.len() != n {
            return Err(Error::Dimension(format!(
                "frozen profile has {} entries, grid has {n}",
                u.len()
            )));
        }
    }
    let pop = |i: usize| frozen_u.map_or(0.0, |u| u[i]);
    let xs = grid.nodes();
    let mut d = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        let di = coeffs.d(pop(i), a, x);
        let mi = coeffs.mu(pop(i), a, x);
        check_rates(coeffs, di, mi, a, x)?;
        d.push(di);
        mu.push(mi);
    }

    let mut m = Tridiagonal::zeros(n);
    let h2 = grid.dx() * grid.dx();
    match grid.bc() {
        Boundary::Neumann if n == 1 => {
            m.diag[0] = mu[0];
        }
        Boundary::Neumann => {
            for i in 0..n {
                let (west, east) = if i == 0 {
                    let f = 0.5 * (d[0] + d[1]);
                    (f, f)
                } else if i == n - 1 {
                    let f = 0.5 * (d[n - 1] + d[n - 2]);
                    (f, f)
                } else {
                    (0.5 * (d[i] + d[i - 1]), 0.5 * (d[i] + d[i + 1]))
                };
                m.diag[i] = (west + east) / h2 + mu[i];
                if i == 0 {
                    m.upper[0] = -(west + east) / h2;
                } else if i == n - 1 {
                    m.lower[i] = -(west + east) / h2;
                } else {
                    m.lower[i] = -west / h2;
                    m.upper[i] = -east / h2;
                }
            }
        }
        Boundary::Dirichlet => {
            // Density vanishes on the boundary, so U = 0 there.
            let d_lo = coeffs.d(0.0, a, grid.x_lo());
            let d_hi = coeffs.d(0.0, a, grid.x_hi());
            check_rates(coeffs, d_lo, 0.0, a, grid.x_lo())?;
            check_rates(coeffs, d_hi, 0.0, a, grid.x_hi())?;
            for i in 0..n {
                let west = 0.5 * (d[i] + if i == 0 { d_lo } else { d[i - 1] });
                let east = 0.5 * (d[i] + if i == n - 1 { d_hi } else { d[i + 1] });
                m.diag[i] = (west + east) / h2 + mu[i];
                if i > 0 {
                    m.lower[i] = -west / h2;
                }
                if i + 1 < n {
                    m.upper[i] = -east / h2;
                }
            }
        }
    }
    Ok(OperatorMatrix {
        matrix: m,
        age: a,
        frozen: frozen_u.cloned(),
    })
}

fn check_rates(coeffs: &CoefficientSet, d: f64, mu: f64, a: f64, x: f64) -> Result<()> {
    if !d.is_finite() || d < coeffs.d_min() || coeffs.d_min() <= 0.0 {
        return Err(Error::CoefficientValidity(format!(
            "diffusion d = {d} at (a, x) = ({a}, {x}) violates d >= d_min = {} > 0",
            coeffs.d_min()
        )));
    }
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::CoefficientValidity(format!(
            "mortality mu = {mu} at (a, x) = ({a}, {x}) is negative"
        )));
    }
    Ok(())
}

/// Concrete checks on sampled coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `min d - d_min` over the grid.
    pub d_min_margin: f64,
    pub d_violations: usize,
    pub mu_negative: usize,
    pub beta_negative: usize,
    pub non_finite: usize,
    /// Age measure of `{a : min_x beta(0, a, x) > 0}` on the grid.
    pub beta_support_measure: f64,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    pub fn passes(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Samples `d`, `mu`, `beta` at `U = 0` on every grid node.
pub fn validate_assumptions(coeffs: &CoefficientSet, age: &AgeGrid, space: &SpaceGrid) -> AssumptionReport {
    let xs = space.nodes();
    let mut d_min_seen = f64::INFINITY;
    let (mut d_bad, mut mu_bad, mut beta_bad, mut non_finite) = (0, 0, 0, 0);
    let mut positive = Vec::with_capacity(age.n_age());
    for a in age.nodes() {
        let mut beta_min = f64::INFINITY;
        for &x in &xs {
            let (d, mu, beta) = (coeffs.d(0.0, a, x), coeffs.mu(0.0, a, x), coeffs.beta(0.0, a, x));
            if !(d.is_finite() && mu.is_finite() && beta.is_finite()) {
                non_finite += 1;
                continue;
            }
            d_min_seen = d_min_seen.min(d);
            if d < coeffs.d_min() {
                d_bad += 1;
            }
            if mu < 0.0 {
                mu_bad += 1;
            }
            if beta < 0.0 {
                beta_bad += 1;
            }
            beta_min = beta_min.min(beta);
        }
        positive.push(beta_min > 0.0);
    }
    let beta_support_measure = positive.windows(2).filter(|w| w[0] && w[1]).count() as f64 * age.da();

    let mut messages = Vec::new();
    if coeffs.d_min() <= 0.0 {
        messages.push(format!("d_min = {} must be strictly positive", coeffs.d_min()));
    }
    if d_bad > 0 {
        messages.push(format!(
            "diffusion below d_min = {} at {d_bad} nodes (min sampled {d_min_seen})",
            coeffs.d_min()
        ));
    }
    if mu_bad > 0 {
        messages.push(format!("negative mortality at {mu_bad} nodes"));
    }
    if beta_bad > 0 {
        messages.push(format!("negative fertility at {beta_bad} nodes"));
    }
    if non_finite > 0 {
        messages.push(format!("non-finite coefficients at {non_finite} nodes"));
    }
    if beta_support_measure <= 0.0 {
        messages.push("fertility is not strictly positive on any age interval of positive length".into());
    }
    AssumptionReport {
        d_min_margin: d_min_seen - coeffs.d_min(),
        d_violations: d_bad,
        mu_negative: mu_bad,
        beta_negative: beta_bad,
        non_finite,
        beta_support_measure,
        messages,
    }
}
