//! Solvers for linear and quasilinear age- and space-structured population
//! models on uniform one-dimensional grids.

#![allow(clippy::needless_range_loop)]

pub mod elliptic;
pub mod equilibrium;
pub mod error;
pub mod evolution;
pub mod generator;
pub mod grid;
pub mod renewal;
pub mod roots;
pub mod scalar;
pub mod spectral;
pub mod tridiag;

pub use elliptic::{assemble, validate_assumptions, AssumptionReport, CoefficientSet, OperatorMatrix, Rate};
pub use equilibrium::{
    bifurcation_point, certify, continue_branch, example1_lower_bound, frozen_q, solve_equilibrium, solve_from,
    verify_example1_bounds, BoundsReport, Branch, BranchPoint, EquilibriumOptions, Example2Params, FreezeMode,
    ModelKind, Normalization, QuasilinearModel, Residuals,
};
pub use error::{Error, Result};
pub use evolution::{EvolutionOperator, Frozen};
pub use generator::{assemble_discrete_generator, dominant_eigenvalue, DiscreteGenerator, DominantEigenvalue};
pub use grid::{field_norm, integrate_age, AgeGrid, AgeSpaceField, Boundary, NormSpec, SpaceGrid, SpatialProfile};
pub use renewal::{
    apply_semigroup, births, simulate, simulate_semilinear, solve_birth_history, BirthHistory, SemilinearDeath,
    Trajectory,
};
pub use scalar::{
    gurtin_maccamy_equilibrium, malthusian_scalar, net_reproduction, renewal_limit, renewal_limit_at, renewal_simulate,
    GmEquilibrium, ScalarOrbit, ScalarRates,
};
pub use spectral::{
    assemble_q, classify, malthusian, perron, perron_from, projection, spectral_radius, stable_field, verify_aeg,
    AegReport, Classification, PerronPair, Projection, ReproductionOperator, SpectralOptions, SpectralResult,
};
pub use tridiag::{ThomasFactor, Tridiagonal};
