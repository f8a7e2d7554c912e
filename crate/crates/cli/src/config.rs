//! Experiment configuration: a versioned JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use gbsde::cascade::CascadeConfig;
use gbsde::gcore::{
    generator_from_expr, generator_preset, path_generator_preset, path_terminal_preset, terminal_from_expr,
    terminal_preset, GeneratorConstants, Params, PresetRef, TimePartition, VolatilityBand,
};
use gbsde::gpde::{SchemeConfig, SpaceGrid};
use gbsde::scenarios::{derive_seed, grid_steps, ScenarioFamily, VolatilityControl};
use gbsde::analysis::PipelineConfig;
use gbsde::{Band, Generator, PathDriver, PathPayoff, Partition, Terminal};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub band: BandConfig,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default = "default_generator")]
    pub generator: DriverConfig,
    #[serde(default = "default_terminal")]
    pub terminal: PayoffConfig,
    #[serde(default)]
    pub scenarios: ScenarioConfig,
    #[serde(default)]
    pub gheat: GHeatConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

fn default_generator() -> DriverConfig {
    DriverConfig::preset(PresetRef::new("constant-driver"))
}

fn default_terminal() -> PayoffConfig {
    PayoffConfig::preset(PresetRef::new("zero"))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            band: BandConfig { sigma_lo: 0.5, sigma_hi: 1.0 },
            horizon: 1.0,
            partition: PartitionConfig::default(),
            cascade: CascadeConfig::default(),
            generator: default_generator(),
            terminal: default_terminal(),
            scenarios: ScenarioConfig::default(),
            gheat: GHeatConfig::default(),
            approx: ApproxConfig::default(),
            analysis: AnalysisConfig::default(),
            output: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

/// Exactly one of the three forms; `{}` means two equal intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyadic_level: Option<u32>,
}

/// A generator given either by preset (`id`, `params`) or by expression
/// (`expr`, `constants`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<GeneratorConstants>,
}

impl DriverConfig {
    pub fn preset(p: PresetRef) -> Self {
        Self { id: Some(p.id), params: p.params, expr: None, constants: None }
    }

    pub fn build(&self, dim: usize) -> Result<Generator, CliError> {
        match (&self.id, &self.expr, &self.constants) {
            (Some(id), None, None) => {
                Ok(generator_preset(&PresetRef { id: id.clone(), params: self.params.clone() }, dim).map_err(config("generator"))?)
            }
            (None, Some(src), Some(c)) if self.params.is_empty() => {
                if !c.modulus.is_valid() || [c.m0, c.l_x, c.l_y, c.l_z].iter().any(|v| !(*v >= 0.0)) {
                    return Err(CliError::Config("generator.constants: constants must be nonnegative and the modulus valid".into()));
                }
                Ok(generator_from_expr(src, dim, *c).map_err(config("generator.expr"))?)
            }
            (None, Some(_), None) => Err(CliError::Config("generator: an expression needs `constants`".into())),
            _ => Err(CliError::Config("generator: give either `id` (with optional `params`) or `expr` with `constants`".into())),
        }
    }

    pub fn preset_ref(&self) -> Option<PresetRef> {
        self.id.as_ref().map(|id| PresetRef { id: id.clone(), params: self.params.clone() })
    }
}

/// A terminal function given by preset or by expression with declared
/// `bound` and `lipschitz` constants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl PayoffConfig {
    pub fn preset(p: PresetRef) -> Self {
        Self { id: Some(p.id), params: p.params, expr: None, bound: None, lipschitz: None }
    }

    pub fn build(&self, dim: usize, field: &str) -> Result<Terminal, CliError> {
        match (&self.id, &self.expr) {
            (Some(id), None) if self.bound.is_none() && self.lipschitz.is_none() => {
                Ok(terminal_preset(&PresetRef { id: id.clone(), params: self.params.clone() }, dim).map_err(config(field))?)
            }
            (None, Some(src)) if self.params.is_empty() => {
                let bound = self.bound.unwrap_or(f64::INFINITY);
                let lip = self.lipschitz.unwrap_or(f64::INFINITY);
                if !(bound >= 0.0 && lip >= 0.0) {
                    return Err(CliError::Config(format!("{field}: `bound` and `lipschitz` must be nonnegative")));
                }
                Ok(terminal_from_expr(src, dim, bound, lip).map_err(config(field))?)
            }
            _ => Err(CliError::Config(format!(
                "{field}: give either `id` (with optional `params`) or `expr` (with optional `bound`, `lipschitz`)"
            ))),
        }
    }

    pub fn preset_ref(&self) -> Option<PresetRef> {
        self.id.as_ref().map(|id| PresetRef { id: id.clone(), params: self.params.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    #[default]
    Standard,
    Extremes,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub paths: usize,
    pub family: FamilyKind,
    /// Controls of a `custom` family; the constant extremes are added when missing.
    pub controls: Vec<VolatilityControl>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { dt: 1.0 / 256.0, paths: 128, family: FamilyKind::Standard, controls: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GHeatConfig {
    pub terminal: PayoffConfig,
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
    pub scheme: SchemeConfig,
    pub tolerance: f64,
}

impl Default for GHeatConfig {
    fn default() -> Self {
        Self {
            terminal: PayoffConfig::preset(PresetRef::new("quad-convex")),
            x_min: -6.0,
            x_max: 6.0,
            nodes: 401,
            scheme: SchemeConfig::default(),
            tolerance: 5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxConfig {
    pub generator: PresetRef,
    pub terminal: PresetRef,
    /// Horizon of the pipeline runs; the top-level horizon when absent.
    /// Levels are absolute meshes `2^-n`, so the horizon fixes how many
    /// intervals (and frozen axes) each level has.
    pub horizon: Option<f64>,
    pub pipeline: PipelineConfig,
    /// Largest Y₀ gap between levels accepted for a path-independent generator.
    pub invariance_tolerance: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            generator: PresetRef::new("clamped-running-max"),
            terminal: PresetRef::new("clamped-running-max"),
            horizon: Some(0.25),
            pipeline: PipelineConfig::default(),
            invariance_tolerance: 1e-2,
        }
    }
}

/// Which checks `verify` and `solve` run, and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub derivative_bounds: bool,
    pub all_presets: bool,
    pub residual: bool,
    pub residual_levels: usize,
    pub residual_tolerance: f64,
    pub apriori: bool,
    pub moments: Vec<f64>,
    pub bmo_buckets: usize,
    pub closed_form_tolerance: f64,
    pub upper_expectation: bool,
    pub qv_band: bool,
    pub bmo: bool,
    pub constant_z: f64,
    pub doleans: bool,
    pub girsanov: bool,
    pub tilt: bool,
    pub tilt_tolerance: f64,
    pub linearization: bool,
    pub linearization_shift: f64,
    pub linearization_eps: f64,
    pub stability: bool,
    pub stability_deltas: Vec<f64>,
    pub stability_tolerance: f64,
    pub embedding: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            derivative_bounds: true,
            all_presets: true,
            residual: true,
            residual_levels: 3,
            residual_tolerance: 5e-2,
            apriori: true,
            moments: vec![1.0, 2.0],
            bmo_buckets: 4,
            closed_form_tolerance: 1e-2,
            upper_expectation: true,
            qv_band: true,
            bmo: true,
            constant_z: 1.0,
            doleans: true,
            girsanov: true,
            tilt: true,
            tilt_tolerance: 1e-3,
            linearization: true,
            linearization_shift: 0.05,
            linearization_eps: 1e-3,
            stability: true,
            stability_deltas: vec![0.1, 0.05, 0.025],
            stability_tolerance: 1e-2,
            embedding: true,
        }
    }
}

fn config(field: &str) -> impl Fn(gbsde::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{field}: {e}"))
}

/// The parsed and validated pieces of a configuration.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub band: Band,
    pub partition: Partition,
    pub generator: Generator,
    pub terminal: Terminal,
}

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&src)
    }

    pub fn band(&self) -> Result<Band, CliError> {
        VolatilityBand::new(self.band.sigma_lo, self.band.sigma_hi).map_err(config("band"))
    }

    pub fn partition(&self) -> Result<Partition, CliError> {
        let p = &self.partition;
        let r = match (p.intervals, &p.times, p.dyadic_level) {
            (None, None, None) => TimePartition::uniform(self.horizon, 2),
            (Some(n), None, None) => TimePartition::uniform(self.horizon, n),
            (None, Some(t), None) => {
                if t.last().is_some_and(|&e| (e - self.horizon).abs() > 1e-12) {
                    return Err(CliError::Config("partition.times: the last time must equal the horizon".into()));
                }
                TimePartition::new(t.clone())
            }
            (None, None, Some(n)) => TimePartition::dyadic(self.horizon, n),
            _ => return Err(CliError::Config("partition: give only one of `intervals`, `times`, `dyadic_level`".into())),
        };
        r.map_err(config("partition"))
    }

    pub fn family(&self, band: &Band, horizon: f64) -> Result<ScenarioFamily, CliError> {
        let s = &self.scenarios;
        let seed = derive_seed(self.seed, 1);
        let r = match s.family {
            FamilyKind::Standard => ScenarioFamily::standard(*band, s.dt, horizon, s.paths, seed),
            FamilyKind::Extremes => ScenarioFamily::extremes(*band, s.dt, horizon, s.paths, seed),
            FamilyKind::Custom => {
                let mut controls = vec![
                    VolatilityControl::Constant { sigma: band.sigma_lo() },
                    VolatilityControl::Constant { sigma: band.sigma_hi() },
                ];
                for c in &s.controls {
                    if !controls.contains(c) {
                        controls.push(c.clone());
                    }
                }
                ScenarioFamily::from_controls(*band, s.dt, horizon, controls, s.paths, seed)
            }
        };
        r.map_err(config("scenarios"))
    }

    pub fn approx_presets(&self) -> Result<(PathDriver, PathPayoff), CliError> {
        let h = path_generator_preset(&self.approx.generator).map_err(config("approx.generator"))?;
        let xi = path_terminal_preset(&self.approx.terminal).map_err(config("approx.terminal"))?;
        Ok((h, xi))
    }

    pub fn approx_horizon(&self) -> f64 {
        self.approx.horizon.unwrap_or(self.horizon)
    }

    pub fn gheat_grid(&self) -> Result<SpaceGrid<f64>, CliError> {
        let g = &self.gheat;
        SpaceGrid::new(g.x_min, g.x_max, g.nodes).map_err(config("gheat"))
    }

    /// Parses every part of the configuration that later commands rely on.
    pub fn validate(self) -> Result<Experiment, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Config(format!("horizon: must be positive, got {}", self.horizon)));
        }
        let band = self.band()?;
        let partition = self.partition()?;
        let dim = partition.intervals();
        let generator = self.generator.build(dim)?;
        let terminal = self.terminal.build(dim, "terminal")?;
        self.gheat.terminal.build(1, "gheat.terminal")?;
        self.gheat_grid()?;
        self.approx_presets()?;
        if let Some(h) = self.approx.horizon {
            if !(h > 0.0) {
                return Err(CliError::Config(format!("approx.horizon: must be positive, got {h}")));
            }
        }
        grid_steps(self.scenarios.dt, self.horizon).map_err(config("scenarios.dt"))?;
        if self.scenarios.paths == 0 {
            return Err(CliError::Config("scenarios.paths: must be at least 1".into()));
        }
        self.family(&band, self.horizon)?;
        let a = &self.analysis;
        if a.residual_levels == 0 {
            return Err(CliError::Config("analysis.residual_levels: must be at least 1".into()));
        }
        if a.stability_deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(CliError::Config("analysis.stability_deltas: shifts must be positive".into()));
        }
        if a.moments.iter().any(|p| !(*p > 0.0)) {
            return Err(CliError::Config("analysis.moments: orders must be positive".into()));
        }
        if !(a.linearization_eps > 0.0) {
            return Err(CliError::Config("analysis.linearization_eps: must be positive".into()));
        }
        Ok(Experiment { config: self, band, partition, generator, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0}}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let e = cfg.validate().unwrap();
        assert_eq!(e.partition.intervals(), 2);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0, "sigma_mid": 0.7}}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("band") && msg.contains("sigma_mid"), "{msg}");
        let err = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "band": {"sigma_lo": 0.5, "sigma_hi": 1.0}, "cascade": {"grid": {"nodes": 3}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cascade.grid"), "{err}");
    }

    #[test]
    fn semantic_errors_are_configuration_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.band.sigma_lo = 2.0;
        assert!(matches!(cfg.clone().validate(), Err(CliError::Config(m)) if m.starts_with("band")));
        cfg = ExperimentConfig::default();
        cfg.generator = DriverConfig::preset(PresetRef::new("no-such-driver"));
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("no-such-driver")));
        cfg = ExperimentConfig::default();
        cfg.partition = PartitionConfig { intervals: Some(2), times: None, dyadic_level: Some(1) };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        cfg = ExperimentConfig::default();
        cfg.schema_version = 2;
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("schema_version")));
    }

    #[test]
    fn expression_drivers_need_constants() {
        let mut cfg = ExperimentConfig::default();
        cfg.generator = DriverConfig { id: None, params: Params::new(), expr: Some("abs(y) + x1".into()), constants: None };
        assert!(cfg.clone().validate().is_err());
        cfg.generator.constants = Some(GeneratorConstants {
            m0: 1.0,
            l_x: 1.0,
            l_y: 1.0,
            l_z: 0.0,
            modulus: gbsde::gcore::Modulus::Zero,
        });
        let e = cfg.validate().unwrap();
        assert_eq!(e.generator.eval(0.0, &[0.5, 0.0], 0.0, 0.0), 0.5);
    }
}
