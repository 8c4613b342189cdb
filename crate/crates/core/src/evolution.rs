//! Discrete evolution operator `Pi(a, sigma)` for `d_a v + A(a) v = 0`.
//!
//! One backward-Euler step arriving at node `k` solves
//! `(I + da A_h(a_k)) v_k = v_{k-1}`. The factorization of every node is built
//! once at construction.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::elliptic::{assemble, CoefficientSet};
use crate::error::{Error, Result};
use crate::grid::{AgeGrid, AgeSpaceField, SpaceGrid, SpatialProfile};
use crate::tridiag::{ThomasFactor, Tridiagonal};

/// Population value substituted into the coefficients.
#[derive(Debug, Clone, Default)]
pub enum Frozen {
    /// `U = 0`.
    #[default]
    None,
    /// One profile used at every age, e.g. the age-integrated total.
    Total(SpatialProfile),
    /// The density itself, evaluated at each `(a_k, x_i)`.
    Density(AgeSpaceField),
}

impl Frozen {
    fn at(&self, k: usize) -> Option<SpatialProfile> {
        match self {
            Frozen::None => None,
            Frozen::Total(p) => Some(p.clone()),
            Frozen::Density(f) => Some(f.profile(k)),
        }
    }

    fn value(&self, k: usize, i: usize) -> f64 {
        match self {
            Frozen::None => 0.0,
            Frozen::Total(p) => p[i],
            Frozen::Density(f) => f.get(k, i),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionOperator {
    coeffs: CoefficientSet,
    age: AgeGrid,
    space: SpaceGrid,
    frozen: Frozen,
    ops: Vec<Tridiagonal>,
    factors: Vec<ThomasFactor>,
    beta: Vec<Vec<f64>>,
}

impl EvolutionOperator {
    pub fn new(coeffs: CoefficientSet, age: AgeGrid, space: SpaceGrid) -> Result<Self> {
        Self::with_frozen(coeffs, age, space, Frozen::None)
    }

    pub fn with_frozen(coeffs: CoefficientSet, age: AgeGrid, space: SpaceGrid, frozen: Frozen) -> Result<Self> {
        match &frozen {
            Frozen::None => {}
            Frozen::Total(p) if p.len() != space.n_x() => {
                return Err(Error::Dimension(format!(
                    "frozen profile has {} entries, grid has {}",
                    p.len(),
                    space.n_x()
                )))
            }
            Frozen::Density(f) if f.n_age() != age.n_age() || f.n_x() != space.n_x() || f.age_grid() != &age => {
                return Err(Error::Dimension("frozen density does not match the grids".into()))
            }
            _ => {}
        }
        let da = age.da();
        let xs = space.nodes();
        let built: Vec<Result<(Tridiagonal, ThomasFactor, Vec<f64>)>> = (0..age.n_age())
            .into_par_iter()
            .map(|k| {
                let a = age.node(k);
                let profile = frozen.at(k);
                let m = assemble(&coeffs, a, &space, profile.as_ref())?.matrix;
                let f = m.shifted_factor(da);
                let beta: Vec<f64> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| coeffs.beta(frozen.value(k, i), a, x))
                    .collect();
                if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                    return Err(Error::CoefficientValidity(format!(
                        "fertility beta = {b} at a = {a} is negative or non-finite"
                    )));
                }
                Ok((m, f, beta))
            })
            .collect();
        let mut ops = Vec::with_capacity(age.n_age());
        let mut factors = Vec::with_capacity(age.n_age());
        let mut beta = Vec::with_capacity(age.n_age());
        for item in built {
            let (m, f, b) = item?;
            ops.push(m);
            factors.push(f);
            beta.push(b);
        }
        Ok(Self {
            coeffs,
            age,
            space,
            frozen,
            ops,
            factors,
            beta,
        })
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn age_grid(&self) -> &AgeGrid {
        &self.age
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn frozen(&self) -> &Frozen {
        &self.frozen
    }

    pub fn n_x(&self) -> usize {
        self.space.n_x()
    }

    /// `A_h(a_k)`.
    pub fn operator(&self, k: usize) -> &Tridiagonal {
        &self.ops[k]
    }

    /// Fertility sampled at age node `k`.
    pub fn beta(&self, k: usize) -> &[f64] {
        &self.beta[k]
    }

    pub fn cache_len(&self) -> usize {
        self.factors.len()
    }

    /// One step arriving at node `k >= 1`, in place.
    pub fn step(&self, k: usize, v: &mut [f64]) {
        debug_assert!(k >= 1);
        self.factors[k].solve_in_place(v);
    }

    /// Steps from node `from` to node `to`, in place.
    pub fn propagate_nodes(&self, v: &mut [f64], from: usize, to: usize) {
        for k in from + 1..=to {
            self.factors[k].solve_in_place(v);
        }
    }

    fn nodes_of(&self, sigma: f64, a: f64) -> Result<(usize, usize)> {
        let from = self.age.index_of(sigma)?;
        let to = self.age.index_of(a)?;
        if from > to {
            return Err(Error::Ordering(format!("sigma = {sigma} exceeds a = {a}")));
        }
        Ok((from, to))
    }

    pub fn propagate(&self, v0: &SpatialProfile, sigma: f64, a: f64) -> Result<SpatialProfile> {
        if v0.len() != self.n_x() {
            return Err(Error::Dimension(format!(
                "profile has {} entries, grid has {}",
                v0.len(),
                self.n_x()
            )));
        }
        let (from, to) = self.nodes_of(sigma, a)?;
        let mut v = v0.values().to_vec();
        self.propagate_nodes(&mut v, from, to);
        Ok(SpatialProfile::from_vec_unchecked(v))
    }

    /// Dense `Pi(a, sigma)`; column `j` is the propagated unit vector `e_j`.
    pub fn full_matrix(&self, sigma: f64, a: f64) -> Result<DMatrix<f64>> {
        let (from, to) = self.nodes_of(sigma, a)?;
        Ok(self.full_matrix_nodes(from, to))
    }

    pub fn full_matrix_nodes(&self, from: usize, to: usize) -> DMatrix<f64> {
        let n = self.n_x();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut v = vec![0.0; n];
                v[j] = 1.0;
                self.propagate_nodes(&mut v, from, to);
                v
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| cols[j][i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use std::f64::consts::PI;

    fn heat(n_x: usize, n_age: usize, a_max: f64) -> (EvolutionOperator, SpaceGrid) {
        let space = SpaceGrid::unit(n_x, Boundary::Dirichlet).unwrap();
        let age = AgeGrid::new(a_max, n_age).unwrap();
        let op = EvolutionOperator::new(CoefficientSet::constant(1.0, 0.0, 1.0), age, space).unwrap();
        (op, space)
    }

    fn heat_error(n_x: usize, n_age: usize) -> f64 {
        let (op, space) = heat(n_x, n_age, 0.1);
        let v0 = SpatialProfile::from_fn(&space, |x| (PI * x).sin());
        let v = op.propagate(&v0, 0.0, 0.1).unwrap();
        let decay = (-PI * PI * 0.1).exp();
        let err = (0..n_x).fold(0.0f64, |m, i| m.max((v[i] - decay * v0[i]).abs()));
        err / decay
    }

    #[test]
    fn neumann_constants_survive() {
        let space = SpaceGrid::unit(20, Boundary::Neumann).unwrap();
        let age = AgeGrid::new(1.0, 51).unwrap();
        let c = CoefficientSet::linear(|a, x| 1.0 + a + x, |_, _| 0.0, |_, _| 1.0, 1.0);
        let op = EvolutionOperator::new(c, age, space).unwrap();
        let v = op.propagate(&SpatialProfile::constant(20, 1.0), 0.0, 1.0).unwrap();
        for i in 0..20 {
            assert!((v[i] - 1.0).abs() < 1e-12);
        }
        let m = op.full_matrix(0.0, 1.0).unwrap();
        for i in 0..20 {
            assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernel_decay() {
        assert!(heat_error(99, 101) <= 2e-2);
    }

    #[test]
    fn heat_error_is_first_order() {
        // da halves and dx^2 quarters; first-order age error dominates.
        let e1 = heat_error(49, 26);
        let e2 = heat_error(99, 51);
        let e3 = heat_error(199, 101);
        let s1 = (e1 / e2).log2();
        let s2 = (e2 / e3).log2();
        assert!(s1 > 0.8 && s2 > 0.8, "slopes {s1} {s2}");
    }

    #[test]
    fn constant_mortality_is_scalar_recursion() {
        let space = SpaceGrid::unit(10, Boundary::Neumann).unwrap();
        let age = AgeGrid::new(2.0, 201).unwrap();
        let mu0 = 0.8;
        let op = EvolutionOperator::new(CoefficientSet::constant(0.3, mu0, 1.0), age, space).unwrap();
        let v = op.propagate(&SpatialProfile::constant(10, 2.5), 0.5, 2.0).unwrap();
        let expected = 2.5 * (1.0 + age.da() * mu0).powi(150).recip();
        for i in 0..10 {
            assert!((v[i] - expected).abs() < 1e-12);
        }
        assert!((expected - 2.5 * (-mu0 * 1.5f64).exp()).abs() < 1e-2);
    }

    #[test]
    fn identity_and_single_patch() {
        let (op, _) = heat(7, 11, 1.0);
        let m = op.full_matrix(0.3, 0.3).unwrap();
        assert_eq!(m, DMatrix::identity(7, 7));

        let space = SpaceGrid::new(0.0, 1.0, 1, Boundary::Neumann).unwrap();
        let age = AgeGrid::new(1.0, 11).unwrap();
        let op = EvolutionOperator::new(CoefficientSet::constant(1.0, 2.0, 1.0), age, space).unwrap();
        let m = op.full_matrix(0.0, 1.0).unwrap();
        assert!((m[(0, 0)] - 1.2f64.powi(10).recip()).abs() < 1e-14);
    }

    #[test]
    fn alignment_and_ordering_errors() {
        let (op, _) = heat(7, 11, 1.0);
        let v = SpatialProfile::constant(7, 1.0);
        assert!(matches!(op.propagate(&v, 0.0, 0.15), Err(Error::GridAlignment(_))));
        assert!(matches!(op.propagate(&v, 0.5, 0.2), Err(Error::Ordering(_))));
        assert_eq!(op.cache_len(), 11);
    }

    #[test]
    fn cocycle_and_damping() {
        let space = SpaceGrid::unit(30, Boundary::Dirichlet).unwrap();
        let age = AgeGrid::new(1.0, 41).unwrap();
        let c = CoefficientSet::linear(|a, x| 1.0 + 0.5 * a * x, |a, _| a, |_, _| 1.0, 1.0);
        let op = EvolutionOperator::new(c, age, space).unwrap();
        let full = op.full_matrix(0.1, 0.9).unwrap();
        let composed = op.full_matrix(0.5, 0.9).unwrap() * op.full_matrix(0.1, 0.5).unwrap();
        assert!((full.clone() - composed).amax() <= 1e-12);
        assert!(full.iter().all(|&v| v >= 0.0));
        let v0 = SpatialProfile::from_fn(&space, |x| 1.0 + x);
        let v = op.propagate(&v0, 0.0, 1.0).unwrap();
        assert!(v.sup_norm() <= v0.sup_norm());
    }

    #[test]
    fn frozen_density_enters_mortality() {
        let space = SpaceGrid::unit(5, Boundary::Neumann).unwrap();
        let age = AgeGrid::new(1.0, 11).unwrap();
        let c = CoefficientSet::new(|_, _, _| 1.0, |u, _, _| u, |_, _, _| 1.0, 1.0);
        let u = AgeSpaceField::from_fn(age, space, |_, _| 0.5);
        let op = EvolutionOperator::with_frozen(c, age, space, Frozen::Density(u)).unwrap();
        let lin = EvolutionOperator::new(CoefficientSet::constant(1.0, 0.5, 1.0), age, space).unwrap();
        assert_eq!(op.full_matrix(0.0, 1.0).unwrap(), lin.full_matrix(0.0, 1.0).unwrap());
    }
}
