//! Shared fixtures for the criterion benches.

use agediff_core::{AgeGrid, AgeSpaceField, EvolutionOperator, Normalization, QuasilinearModel};

/// Example I on an `n_x` by `n_age` grid over `(0, 1)^2`.
pub fn example1(n_x: usize, n_age: usize) -> QuasilinearModel {
    QuasilinearModel::example1(1.0, n_x, AgeGrid::new(1.0, n_age).unwrap(), Normalization::Discrete).unwrap()
}

/// The linearization of [`example1`] at the zero field.
pub fn example1_linear(n_x: usize, n_age: usize) -> EvolutionOperator {
    example1(n_x, n_age).linear_operator().unwrap()
}

/// A smooth positive initial datum vanishing at the Dirichlet ends.
pub fn initial(op: &EvolutionOperator) -> AgeSpaceField {
    AgeSpaceField::from_fn(*op.age_grid(), *op.space_grid(), |a, x| (1.0 + a) * x * (1.0 - x))
}
