//! Scenario files, the runner behind the `agediff` binary, and its outputs.

pub mod error;
pub mod expr;
pub mod output;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use run::{build_model, execute, RunRecord};
pub use scenario::{load_scenario, load_with_overrides, parse_scenario, Scenario};
