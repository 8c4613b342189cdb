//! Spatially homogeneous age-structured model, used as ground truth.
//!
//! Survival is `Pi(a, sigma) = exp(-(M(a) - M(sigma)))`, where `M` is the
//! trapezoid prefix sum of `mu` on the age nodes. Every operation below reads
//! survival from that one table.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::AgeGrid;
use crate::roots::{bisect, bracket_decreasing};

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Fertility and mortality as functions of `(U, a)`.
#[derive(Clone)]
pub struct ScalarRates {
    beta: ScalarFn,
    mu: ScalarFn,
}

impl std::fmt::Debug for ScalarRates {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarRates").finish_non_exhaustive()
    }
}

impl ScalarRates {
    pub fn new(
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mu: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            beta: Arc::new(move |_, a| beta(a)),
            mu: Arc::new(move |_, a| mu(a)),
        }
    }

    pub fn with_population(
        beta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        mu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            beta: Arc::new(beta),
            mu: Arc::new(mu),
        }
    }

    pub fn constant(beta: f64, mu: f64) -> Self {
        Self::new(move |_| beta, move |_| mu)
    }

    pub fn beta(&self, u: f64, a: f64) -> f64 {
        (self.beta)(u, a)
    }

    pub fn mu(&self, u: f64, a: f64) -> f64 {
        (self.mu)(u, a)
    }

    /// Sampled `beta` and cumulative mortality at population `u`.
    pub fn tables(&self, grid: &AgeGrid, u: f64) -> Result<Tables> {
        let nodes = grid.nodes();
        let beta: Vec<f64> = nodes.iter().map(|&a| self.beta(u, a)).collect();
        let mu: Vec<f64> = nodes.iter().map(|&a| self.mu(u, a)).collect();
        if let Some(b) = beta.iter().chain(&mu).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::CoefficientValidity(format!(
                "scalar rate value {b} is negative or non-finite"
            )));
        }
        let mut m = vec![0.0; nodes.len()];
        for k in 1..nodes.len() {
            m[k] = m[k - 1] + 0.5 * grid.da() * (mu[k - 1] + mu[k]);
        }
        Ok(Tables {
            grid: *grid,
            beta,
            cum_mu: m,
        })
    }
}

/// `beta` and `M` on the age nodes.
#[derive(Debug, Clone)]
pub struct Tables {
    pub grid: AgeGrid,
    pub beta: Vec<f64>,
    pub cum_mu: Vec<f64>,
}

impl Tables {
    /// `Pi(a_k, a_j)`.
    pub fn survival(&self, k: usize, j: usize) -> f64 {
        (-(self.cum_mu[k] - self.cum_mu[j])).exp()
    }

    pub fn net_reproduction(&self, lambda: f64) -> f64 {
        (0..self.grid.n_age())
            .map(|k| {
                let a = self.grid.node(k);
                self.grid.weight(k) * self.beta[k] * (-lambda * a - self.cum_mu[k]).exp()
            })
            .sum()
    }
}

/// `r(lambda) = int beta(a) e^{-lambda a} Pi(a, 0) da`.
pub fn net_reproduction(rates: &ScalarRates, grid: &AgeGrid, lambda: f64) -> Result<f64> {
    Ok(rates.tables(grid, 0.0)?.net_reproduction(lambda))
}

/// Root of `r(lambda) = 1` to `|r - 1| <= tol`.
pub fn malthusian_scalar(rates: &ScalarRates, grid: &AgeGrid, tol: f64) -> Result<f64> {
    let t = rates.tables(grid, 0.0)?;
    malthusian_from_tables(&t, tol)
}

fn malthusian_from_tables(t: &Tables, tol: f64) -> Result<f64> {
    if t.beta.iter().all(|&b| b == 0.0) {
        return Err(Error::DegenerateFertility(0.0));
    }
    let g = |l: f64| Ok(t.net_reproduction(l) - 1.0);
    let (lo, hi, flo, fhi) = bracket_decreasing(g, 1024.0)?;
    Ok(bisect(g, lo, hi, flo, fhi, 1e-15, tol)?.x)
}

/// Scalar orbit on `t_n = n da`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarOrbit {
    pub times: Vec<f64>,
    pub births: Vec<f64>,
    /// Snapshot times and age profiles.
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

/// Cohort marching with the newborn layer from the trapezoid renewal
/// condition, solved for its own `k = 0` term.
pub fn renewal_simulate(
    rates: &ScalarRates,
    grid: &AgeGrid,
    phi: &[f64],
    t_end: f64,
    cadence: usize,
) -> Result<ScalarOrbit> {
    if phi.len() != grid.n_age() {
        return Err(Error::Dimension(format!(
            "age profile has {} entries, grid has {}",
            phi.len(),
            grid.n_age()
        )));
    }
    let steps = grid.steps_in(t_end)?;
    if cadence == 0 || steps % cadence != 0 {
        return Err(Error::param("cadence", format!("{cadence} does not divide {steps}")));
    }
    let t = rates.tables(grid, 0.0)?;
    let n = grid.n_age();
    let denom = 1.0 - grid.weight(0) * t.beta[0];
    if denom <= 0.0 {
        return Err(Error::param("beta", "da/2 * beta(0) >= 1: refine the age grid"));
    }
    let decay: Vec<f64> = (1..n).map(|k| t.survival(k, k - 1)).collect();
    let birth = |u: &[f64]| -> f64 { (0..n).map(|k| grid.weight(k) * t.beta[k] * u[k]).sum() };

    let mut u = phi.to_vec();
    let mut orbit = ScalarOrbit {
        times: vec![0.0],
        births: vec![birth(&u)],
        snapshot_times: vec![0.0],
        snapshots: vec![u.clone()],
    };
    for step in 1..=steps {
        for k in (1..n).rev() {
            u[k] = decay[k - 1] * u[k - 1];
        }
        let b: f64 = (1..n).map(|k| grid.weight(k) * t.beta[k] * u[k]).sum();
        u[0] = b / denom;
        let time = step as f64 * grid.da();
        orbit.times.push(time);
        orbit.births.push(u[0]);
        if step % cadence == 0 {
            orbit.snapshot_times.push(time);
            orbit.snapshots.push(u.clone());
        }
    }
    Ok(orbit)
}

/// `P(phi)` at a Malthusian parameter computed to `1e-13`.
pub fn renewal_limit(rates: &ScalarRates, grid: &AgeGrid, phi: &[f64]) -> Result<f64> {
    let t = rates.tables(grid, 0.0)?;
    let lambda0 = malthusian_from_tables(&t, 1e-13)?;
    renewal_limit_at(&t, phi, lambda0)
}

/// Nested-trapezoid quotient
/// `int beta(a) int_0^a e^{-l(a-s)} Pi(a,s) phi(s) ds da / int a beta(a) e^{-l a} Pi(a,0) da`.
pub fn renewal_limit_at(t: &Tables, phi: &[f64], lambda0: f64) -> Result<f64> {
    let grid = t.grid;
    let n = grid.n_age();
    if phi.len() != n {
        return Err(Error::Dimension(format!(
            "age profile has {} entries, grid has {n}",
            phi.len()
        )));
    }
    let da = grid.da();
    let kern = |k: usize, j: usize| (-lambda0 * (grid.node(k) - grid.node(j))).exp() * t.survival(k, j);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 1..n {
        let mut inner = 0.0;
        for j in 0..=k {
            let w = if j == 0 || j == k { 0.5 * da } else { da };
            inner += w * kern(k, j) * phi[j];
        }
        num += grid.weight(k) * t.beta[k] * inner;
        den += grid.weight(k) * t.beta[k] * grid.node(k) * kern(k, 0);
    }
    if den.abs() < 1e-14 {
        return Err(Error::DegenerateProjection(den));
    }
    Ok(num / den)
}

/// Gurtin-MacCamy equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct GmEquilibrium {
    pub u_star: f64,
    pub profile: Vec<f64>,
    /// `r_U` at `u_star`.
    pub r_check: f64,
    /// Trapezoid integral of the profile.
    pub integral: f64,
    pub r_zero: f64,
}

/// Root of `r_U = int beta(U, a) Pi_U(a, 0) da = 1` over `U > 0`.
pub fn gurtin_maccamy_equilibrium(rates: &ScalarRates, grid: &AgeGrid, tol: f64) -> Result<GmEquilibrium> {
    let r_of = |u: f64| -> Result<f64> { Ok(rates.tables(grid, u)?.net_reproduction(0.0)) };
    let r0 = r_of(0.0)?;
    if r0 <= 1.0 {
        return Err(Error::NoSolution(format!("r_0 = {r0} <= 1: no positive equilibrium")));
    }
    let mut cap = 1.0;
    let mut r_cap = r_of(cap)?;
    while r_cap >= 1.0 {
        cap *= 2.0;
        if cap > 1e12 {
            return Err(Error::NoSolution("r_U stays above 1 for U up to 1e12".into()));
        }
        r_cap = r_of(cap)?;
    }
    let root = bisect(|u| Ok(r_of(u)? - 1.0), 0.0, cap, r0 - 1.0, r_cap - 1.0, 1e-15, tol)?;
    let u_star = root.x;
    let t = rates.tables(grid, u_star)?;
    let surv: Vec<f64> = (0..grid.n_age()).map(|k| t.survival(k, 0)).collect();
    let mass: f64 = (0..grid.n_age()).map(|k| grid.weight(k) * surv[k]).sum();
    let profile: Vec<f64> = surv.iter().map(|s| s * u_star / mass).collect();
    let integral = (0..grid.n_age()).map(|k| grid.weight(k) * profile[k]).sum();
    Ok(GmEquilibrium {
        u_star,
        profile,
        r_check: root.fx + 1.0,
        integral,
        r_zero: r0,
    })
}
