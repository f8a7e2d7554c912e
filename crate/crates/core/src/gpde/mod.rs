//! One-dimensional fully nonlinear parabolic solvers.

pub mod grid;
pub mod scheme;
pub mod solution;

pub use grid::{ParamGrid, ParamTable, SpaceGrid};
pub use scheme::{
    conditional_g_expectation, solve_g_heat, solve_generator_pde, solve_parametric, stitch_table, GridConfig,
    SchemeConfig,
};
pub use solution::{extract_derivatives, GridSolution, Sample, SolutionMeta};
