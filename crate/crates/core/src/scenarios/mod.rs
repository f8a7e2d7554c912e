//! Volatility-controlled paths, discrete stochastic integrals and Monte-Carlo
//! upper expectations.

pub mod family;
pub mod path;

pub use family::{
    derive_seed, mean_and_se, pairwise_sum, upper_expectation, upper_expectation_of_values, ControlMean, FamilyMember,
    ScenarioFamily, UpperExpectation,
};
pub use path::{grid_steps, ito_integral, qv_integral, simulate_scenario, ScenarioPath, VolatilityControl};
