//! Bands, partitions, generators, path embedding, mollifiers and the
//! derivative-bound ledger.

pub mod band;
pub mod embed;
pub mod expr;
pub mod generator;
pub mod ledger;
pub mod mollifier;
pub mod partition;
pub mod presets;

pub use band::{g_function, VolatilityBand};
pub use embed::{discretize_path_generator, discretize_path_terminal, embed_path, stopped_sample_path, PiecewiseLinearPath};
pub use expr::Expr;
pub use generator::{GeneratorConstants, GeneratorSpec, Modulus, PathGenerator, PathTerminal, TerminalSpec};
pub use ledger::{derivative_bound_ledger, DerivativeLedger};
pub use mollifier::{mollify_generator_tx, mollify_generator_yz, Mollifier};
pub use partition::TimePartition;
pub use presets::{
    generator_from_expr, generator_preset, path_generator_preset, path_terminal_preset, terminal_from_expr, terminal_preset,
    Params, PresetRef, GENERATOR_PRESETS, PATH_GENERATOR_PRESETS, PATH_TERMINAL_PRESETS, TERMINAL_PRESETS,
};
