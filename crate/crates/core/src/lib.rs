//! Numerical toolkit for quadratic G-BSDEs: the G-heat and generator PDEs,
//! the backward cascade over a time partition, scenario simulation under
//! volatility uncertainty, and checks of the surrounding estimates.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix `f64`.

pub mod analysis;
pub mod cascade;
pub mod error;
pub mod gcore;
pub mod gpde;
pub mod real;
pub mod scenarios;

pub use error::{Error, Result};
pub use real::Real;

pub type Band = gcore::VolatilityBand<f64>;
pub type Partition = gcore::TimePartition<f64>;
pub type Generator = gcore::GeneratorSpec<f64>;
pub type Terminal = gcore::TerminalSpec<f64>;
pub type PathDriver = gcore::PathGenerator<f64>;
pub type PathPayoff = gcore::PathTerminal<f64>;
pub type Ledger = gcore::DerivativeLedger<f64>;
pub type Grid = gpde::SpaceGrid<f64>;
pub type Solution = gpde::GridSolution<f64>;
pub type Cascade = cascade::CascadeSolution<f64>;
