#![allow(dead_code)]

use std::f64::consts::PI;

use agediff_core::{AgeGrid, AgeSpaceField, Boundary, CoefficientSet, EvolutionOperator, SpaceGrid};
use proptest::prelude::*;

/// Parameters of a smooth linear coefficient set.
#[derive(Debug, Clone, Copy)]
pub struct Coeffs {
    pub d0: f64,
    pub d1: f64,
    pub m0: f64,
    pub m1: f64,
    pub b0: f64,
    pub p: f64,
    pub c: f64,
    pub dirichlet: bool,
}

impl Coeffs {
    pub fn build(self, a_max: f64) -> CoefficientSet {
        let Coeffs {
            d0,
            d1,
            m0,
            m1,
            b0,
            p,
            c,
            ..
        } = self;
        CoefficientSet::linear(
            move |a, x| d0 + d1 * x * (1.0 + a),
            move |a, x| m0 + m1 * a * (1.0 + x),
            move |a, x| b0 * (a / a_max).powf(p) * (1.0 + c * (PI * x).cos()),
            d0,
        )
    }

    pub fn bc(self) -> Boundary {
        if self.dirichlet {
            Boundary::Dirichlet
        } else {
            Boundary::Neumann
        }
    }

    pub fn operator(self, a_max: f64, n_age: usize, n_x: usize) -> EvolutionOperator {
        let age = AgeGrid::new(a_max, n_age).unwrap();
        let space = SpaceGrid::unit(n_x, self.bc()).unwrap();
        EvolutionOperator::new(self.build(a_max), age, space).unwrap()
    }
}

pub fn coeffs() -> impl Strategy<Value = Coeffs> {
    (
        0.02f64..1.0,
        0.0f64..1.0,
        0.0f64..1.0,
        0.0f64..1.0,
        0.5f64..8.0,
        0.0f64..3.0,
        0.0f64..0.9,
        any::<bool>(),
    )
        .prop_map(|(d0, d1, m0, m1, b0, p, c, dirichlet)| Coeffs {
            d0,
            d1,
            m0,
            m1,
            b0,
            p,
            c,
            dirichlet,
        })
}

pub fn field(op: &EvolutionOperator, values: &[f64]) -> AgeSpaceField {
    let n = op.age_grid().n_age() * op.n_x();
    let v: Vec<f64> = (0..n).map(|i| values[i % values.len()]).collect();
    AgeSpaceField::from_values(*op.age_grid(), *op.space_grid(), v).unwrap()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
