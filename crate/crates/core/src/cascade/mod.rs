//! Backward cascade of parametric PDEs, one per partition interval, and the
//! solution triple `(Y, Z, K)` read off along scenario paths.

pub mod paths;
pub mod solve;

pub use paths::{
    build_solution_paths, generator_arguments, path_residual, path_triple, residual_check, residual_refinement, triples_for_paths,
    PathTriple, PathsSummary, Rejection, ResidualReport, SolutionPaths,
};
pub use solve::{solve_cascade, CascadeConfig, CascadeSolution, DerivativeCheck};
