//! Time-domain simulation of the age-diffusion semigroup.
//!
//! The time step equals `da`, so characteristics map age nodes onto age
//! nodes. One step ages every cohort by one node through `Pi(a_k, a_{k-1})`
//! and then fills the newborn layer from the renewal condition
//! `u_0 = sum_k w_k beta_k u_k`. The `k = 0` term of that trapezoid contains
//! the unknown and is solved for pointwise:
//! `u_0 = (sum_{k>=1} w_k beta_k u_k) / (1 - w_0 beta_0)`.
//! Unrolling the step reproduces the discrete Volterra recursion for the
//! births together with the characteristics formula for the density.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::EvolutionOperator;
use crate::grid::{AgeSpaceField, SpatialProfile};

/// Births `B(t_n)` on the time lattice `t_n = n da`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthHistory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<SpatialProfile>,
}

impl BirthHistory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }
}

/// Snapshots `(t, u(t))` of an orbit.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<AgeSpaceField>,
    pub births: BirthHistory,
}

/// `m(u, a)` per node, given the field and its age integral `U(x)`.
pub type DeathModulus = Arc<dyn Fn(&AgeSpaceField, &SpatialProfile, f64) -> Vec<f64> + Send + Sync>;

/// Nonlinear death `-m(u, a) u`.
#[derive(Clone)]
pub struct SemilinearDeath {
    pub modulus: DeathModulus,
    /// Growth bound `f`, documentation only.
    pub bound: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for SemilinearDeath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemilinearDeath").finish_non_exhaustive()
    }
}

impl SemilinearDeath {
    pub fn new(modulus: impl Fn(&AgeSpaceField, &SpatialProfile, f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            modulus: Arc::new(modulus),
            bound: None,
        }
    }

    /// `m(u, a) = c`.
    pub fn constant(c: f64) -> Self {
        Self::new(move |u, _, _| vec![c; u.n_x()])
    }

    /// `m(u, a) = alpha * U` with `U` the age-integrated density.
    pub fn logistic(alpha: f64) -> Self {
        Self::new(move |_, total, _| total.values().iter().map(|v| alpha * v).collect())
    }
}

fn check_field(op: &EvolutionOperator, phi: &AgeSpaceField) -> Result<()> {
    if phi.age_grid() != op.age_grid() || phi.space_grid() != op.space_grid() {
        return Err(Error::Dimension(
            "field grids differ from the evolution operator grids".into(),
        ));
    }
    Ok(())
}

/// `sum_k w_k beta_k u_k`.
pub fn births(op: &EvolutionOperator, u: &AgeSpaceField) -> SpatialProfile {
    let age = op.age_grid();
    let mut b = vec![0.0; u.n_x()];
    for k in 0..age.n_age() {
        let w = age.weight(k);
        for ((bi, &beta), &v) in b.iter_mut().zip(op.beta(k)).zip(u.row(k)) {
            *bi += w * beta * v;
        }
    }
    SpatialProfile::from_vec_unchecked(b)
}

/// `1 / (1 - w_0 beta_0)`, per node.
fn newborn_gain(op: &EvolutionOperator) -> Result<Vec<f64>> {
    let w0 = op.age_grid().weight(0);
    op.beta(0)
        .iter()
        .map(|&b| {
            let s = 1.0 - w0 * b;
            if s <= 0.0 {
                Err(Error::param(
                    "beta",
                    format!("da/2 * beta(0) = {} >= 1: refine the age grid", w0 * b),
                ))
            } else {
                Ok(1.0 / s)
            }
        })
        .collect()
}

/// One time step of length `da`, in place.
fn advance(op: &EvolutionOperator, gain: &[f64], u: &mut AgeSpaceField) {
    let age = *op.age_grid();
    let n = age.n_age();
    let n_x = u.n_x();
    let values = u.values_mut();
    for k in (1..n).rev() {
        let (head, tail) = values.split_at_mut(k * n_x);
        let dst = &mut tail[..n_x];
        dst.copy_from_slice(&head[(k - 1) * n_x..]);
        op.step(k, dst);
    }
    let mut b = vec![0.0; n_x];
    for k in 1..n {
        let w = age.weight(k);
        let row = &values[k * n_x..(k + 1) * n_x];
        for ((bi, &beta), &v) in b.iter_mut().zip(op.beta(k)).zip(row) {
            *bi += w * beta * v;
        }
    }
    for i in 0..n_x {
        values[i] = gain[i] * b[i];
    }
}

/// Marches `steps` steps and records the newborn layer and, every `cadence`
/// steps, a snapshot.
fn march(
    op: &EvolutionOperator,
    phi: &AgeSpaceField,
    steps: usize,
    cadence: usize,
    death: Option<&SemilinearDeath>,
) -> Result<Trajectory> {
    check_field(op, phi)?;
    let gain = newborn_gain(op)?;
    let age = *op.age_grid();
    let dt = age.da();
    let mut u = phi.clone();
    let mut history = BirthHistory {
        dt,
        times: vec![0.0],
        values: vec![births(op, phi)],
    };
    let mut times = vec![0.0];
    let mut fields = vec![phi.clone()];
    for n in 1..=steps {
        advance(op, &gain, &mut u);
        if let Some(death) = death {
            apply_death(death, &mut u, dt)?;
        }
        let t = n as f64 * dt;
        history.times.push(t);
        history.values.push(u.profile(0));
        if n % cadence == 0 {
            times.push(t);
            fields.push(u.clone());
        }
    }
    Ok(Trajectory {
        times,
        fields,
        births: history,
    })
}

fn apply_death(death: &SemilinearDeath, u: &mut AgeSpaceField, dt: f64) -> Result<()> {
    let age = *u.age_grid();
    let total = crate::grid::integrate_age(u, None)?;
    let rates: Vec<Vec<f64>> = (0..age.n_age())
        .map(|k| (death.modulus)(u, &total, age.node(k)))
        .collect();
    for (k, m) in rates.iter().enumerate() {
        if m.len() != u.n_x() {
            return Err(Error::ContractViolation(format!(
                "death modulus returned {} entries for {} nodes",
                m.len(),
                u.n_x()
            )));
        }
        if let Some(bad) = m.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::ContractViolation(format!(
                "death modulus value {bad} at a = {} is negative or non-finite",
                age.node(k)
            )));
        }
        for (v, &mk) in u.row_mut(k).iter_mut().zip(m) {
            *v *= (-dt * mk).exp();
        }
    }
    Ok(())
}

/// Births on `[0, t_end]`.
pub fn solve_birth_history(op: &EvolutionOperator, phi: &AgeSpaceField, t_end: f64) -> Result<BirthHistory> {
    let steps = op.age_grid().steps_in(t_end)?;
    Ok(march(op, phi, steps, usize::MAX, None)?.births)
}

/// `S(t) phi` from the characteristics formula: `Pi(a, a - t) phi(a - t)` for
/// `a >= t` and `Pi(a, 0) B(t - a)` for `a < t`.
pub fn apply_semigroup(
    op: &EvolutionOperator,
    phi: &AgeSpaceField,
    t: f64,
    history: &BirthHistory,
) -> Result<AgeSpaceField> {
    check_field(op, phi)?;
    let age = *op.age_grid();
    let n = age.steps_in(t)?;
    if n > history.steps() {
        return Err(Error::Horizon {
            t,
            horizon: history.horizon(),
        });
    }
    let mut out = AgeSpaceField::zeros(age, *op.space_grid());
    for k in 0..age.n_age() {
        let row = out.row_mut(k);
        if k >= n {
            row.copy_from_slice(phi.row(k - n));
            op.propagate_nodes(row, k - n, k);
        } else {
            row.copy_from_slice(history.values[n - k].values());
            op.propagate_nodes(row, 0, k);
        }
    }
    Ok(out)
}

/// Orbit sampled every `cadence` steps up to `t_end`.
pub fn simulate(op: &EvolutionOperator, phi: &AgeSpaceField, t_end: f64, cadence: usize) -> Result<Trajectory> {
    let steps = checked_steps(op, t_end, cadence)?;
    march(op, phi, steps, cadence, None)
}

/// Lie splitting: a linear step followed by the decay `exp(-dt m(u, a))`.
pub fn simulate_semilinear(
    op: &EvolutionOperator,
    phi: &AgeSpaceField,
    t_end: f64,
    cadence: usize,
    death: &SemilinearDeath,
) -> Result<Trajectory> {
    let steps = checked_steps(op, t_end, cadence)?;
    march(op, phi, steps, cadence, Some(death))
}

fn checked_steps(op: &EvolutionOperator, t_end: f64, cadence: usize) -> Result<usize> {
    let steps = op.age_grid().steps_in(t_end)?;
    if cadence == 0 || steps % cadence != 0 {
        return Err(Error::param(
            "cadence",
            format!("{cadence} does not divide the {steps} time steps"),
        ));
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::CoefficientSet;
    use crate::grid::{AgeGrid, Boundary, SpaceGrid};

    fn setup(beta: f64, mu: f64) -> EvolutionOperator {
        let age = AgeGrid::new(1.0, 21).unwrap();
        let space = SpaceGrid::unit(8, Boundary::Neumann).unwrap();
        let c = CoefficientSet::linear(|_, x| 1.0 + x, move |_, _| mu, move |a, x| beta * (1.0 + a * x), 1.0);
        EvolutionOperator::new(c, age, space).unwrap()
    }

    fn bump(op: &EvolutionOperator) -> AgeSpaceField {
        AgeSpaceField::from_fn(*op.age_grid(), *op.space_grid(), |a, x| (1.0 - a) * (1.0 + x * x))
    }

    #[test]
    fn no_fertility_no_births() {
        let op = setup(0.0, 0.5);
        let h = solve_birth_history(&op, &bump(&op), 2.0).unwrap();
        assert!(h.values.iter().all(|b| b.sup_norm() == 0.0));
        let u = apply_semigroup(&op, &bump(&op), 1.5, &h).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn initial_births_are_trapezoid() {
        let op = setup(2.0, 0.0);
        let phi = bump(&op);
        let h = solve_birth_history(&op, &phi, 0.5).unwrap();
        let kernel: Vec<f64> = (0..21).map(|k| op.beta(k)[3]).collect();
        let direct: f64 = (0..21)
            .map(|k| op.age_grid().weight(k) * kernel[k] * phi.get(k, 3))
            .sum();
        assert!((h.values[0][3] - direct).abs() < 1e-14);
        assert_eq!(h.times.len(), 11);
    }

    #[test]
    fn semigroup_formula_matches_march() {
        let op = setup(2.0, 0.3);
        let phi = bump(&op);
        let traj = simulate(&op, &phi, 1.5, 3).unwrap();
        for (t, f) in traj.times.iter().zip(&traj.fields) {
            let g = apply_semigroup(&op, &phi, *t, &traj.births).unwrap();
            assert!(f.max_abs_diff(&g).unwrap() <= 1e-13 * f.sup_norm().max(1.0));
            let b = births(&op, f);
            let n = op.age_grid().steps_in(*t).unwrap();
            for i in 0..8 {
                assert!((b[i] - traj.births.values[n][i]).abs() <= 1e-12 * b[i].abs().max(1.0));
            }
        }
        assert_eq!(apply_semigroup(&op, &phi, 0.0, &traj.births).unwrap(), phi);
        assert!(matches!(
            apply_semigroup(&op, &phi, 1.6, &traj.births),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn constant_death_scales() {
        let op = setup(2.0, 0.1);
        let phi = bump(&op);
        let lin = simulate(&op, &phi, 1.0, 5).unwrap();
        let zero = simulate_semilinear(&op, &phi, 1.0, 5, &SemilinearDeath::constant(0.0)).unwrap();
        let c = 0.7;
        let dec = simulate_semilinear(&op, &phi, 1.0, 5, &SemilinearDeath::constant(c)).unwrap();
        for ((t, f), (g, h)) in lin
            .times
            .iter()
            .zip(&lin.fields)
            .zip(zero.fields.iter().zip(&dec.fields))
        {
            assert!(f.max_abs_diff(g).unwrap() <= 1e-12 * f.sup_norm());
            let scaled = f.scaled((-c * t).exp());
            assert!(scaled.max_abs_diff(h).unwrap() <= 1e-12 * f.sup_norm());
        }
    }

    #[test]
    fn negative_death_is_rejected() {
        let op = setup(1.0, 0.0);
        let r = simulate_semilinear(&op, &bump(&op), 0.5, 1, &SemilinearDeath::constant(-1.0));
        assert!(matches!(r, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn misaligned_inputs() {
        let op = setup(1.0, 0.0);
        assert!(matches!(
            solve_birth_history(&op, &bump(&op), 0.512),
            Err(Error::GridAlignment(_))
        ));
        assert!(simulate(&op, &bump(&op), 1.0, 3).is_err());
        assert!(simulate(&op, &bump(&op), 1.0, 0).is_err());
    }
}
