use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{nonincreasing, Check};
use crate::cascade::{build_solution_paths, solve_cascade, CascadeConfig, SolutionPaths};
use crate::error::{Error, Result};
use crate::gcore::{
    discretize_path_generator, discretize_path_terminal, mollify_generator_tx, mollify_generator_yz, Mollifier,
    PathGenerator, PathTerminal, TimePartition, VolatilityBand,
};
use crate::scenarios::{upper_expectation, ScenarioFamily, ScenarioPath, UpperExpectation};

/// Grid indices of the knots of `partition`, or a configuration error naming
/// `level` when the scenario grid cannot resolve it.
fn level_knots(partition: &TimePartition<f64>, times: &[f64], dt: f64, level: u32) -> Result<Vec<usize>> {
    let knots: Vec<usize> = partition
        .times()
        .iter()
        .map(|&t| {
            let j = (t / dt).round();
            if j < 0.0 || j as usize >= times.len() || (times[j as usize] - t).abs() > 1e-9 * dt.max(1.0) {
                Err(Error::config(format!("level {level}: knot {t} is not on the scenario grid (dt = {dt})")))
            } else {
                Ok(j as usize)
            }
        })
        .collect::<Result<_>>()?;
    if knots.windows(2).any(|w| w[1] - w[0] < 2) {
        return Err(Error::config(format!(
            "level {level}: partition mesh {} is too fine for the scenario grid (dt = {dt})",
            partition.mesh()
        )));
    }
    Ok(knots)
}

/// `sup_t ‖B^{n,t} − B^t‖_∞` on the grid, and the largest
/// `sup_{s ∈ [t_{i−1}, t_i]} |B_s − B_{t_{i−1}}|` over the intervals.
///
/// For `t` in `[t_{k−1}, t_k]` the embedded path interpolates `B` linearly on
/// every completed interval and on `[t_{k−1}, t]`, and both paths are frozen
/// after `t`, so the gap is the largest chord deviation seen so far.
pub fn path_embedding_gap(times: &[f64], b: &[f64], knots: &[usize]) -> (f64, f64) {
    let (mut err, mut osc) = (0.0f64, 0.0f64);
    for w in knots.windows(2) {
        let (a, e) = (w[0], w[1]);
        for j in a + 1..=e {
            let slope = (b[j] - b[a]) / (times[j] - times[a]);
            for i in a + 1..j {
                err = err.max((b[i] - b[a] - slope * (times[i] - times[a])).abs());
            }
            osc = osc.max((b[j] - b[a]).abs());
        }
    }
    (err, osc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingEstimate {
    pub level: u32,
    pub intervals: usize,
    pub moment: f64,
    /// `Ê[sup_t ‖B^{n,t} − B^t‖_∞^moment]`.
    pub error: UpperExpectation,
    /// `Ê[(2 max_i sup |B_s − B_{t_{i−1}}|)^moment]`.
    pub oscillation_bound: UpperExpectation,
    pub checks: Vec<Check>,
}

/// Upper expectation of the `moment`-th power of the embedding gap at dyadic
/// level `level` (mesh `≤ 2^-level`) over `family`.
pub fn embedding_error(level: u32, family: &ScenarioFamily, moment: f64) -> Result<EmbeddingEstimate> {
    family.validate()?;
    if !(moment > 0.0) {
        return Err(Error::domain(format!("moment must be positive, got {moment}")));
    }
    let partition = TimePartition::dyadic(family.horizon, level)?;
    let template = crate::scenarios::simulate_scenario(&family.members[0].control, &family.band, 0, 0, family.dt, family.horizon)?;
    let knots = level_knots(&partition, &template.times, family.dt, level)?;
    let gaps = |p: &ScenarioPath| path_embedding_gap(&p.times, &p.b, &knots);
    let error = upper_expectation(&|p: &ScenarioPath| gaps(p).0.powf(moment), family)?;
    let oscillation_bound = upper_expectation(&|p: &ScenarioPath| (2.0 * gaps(p).1).powf(moment), family)?;
    let tol = 3.0 * (error.std_err.powi(2) + oscillation_bound.std_err.powi(2)).sqrt();
    let checks = vec![Check::at_most(
        format!("embedding gap at level {level} below twice the oscillation"),
        error.estimate,
        oscillation_bound.estimate + tol,
    )];
    Ok(EmbeddingEstimate { level, intervals: partition.intervals(), moment, error, oscillation_bound, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub levels: Vec<u32>,
    /// Level `n` uses mollifier index `mollifier_base · 2^n`.
    pub mollifier_base: usize,
    pub tx_pairs: usize,
    pub yz_pairs: usize,
    /// Moment used for the embedding-error decay check.
    pub moment: f64,
    pub cascade: CascadeConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cascade = CascadeConfig::default();
        cascade.grid.space_nodes = 61;
        cascade.grid.param_nodes = 9;
        Self { levels: vec![2, 3, 4], mollifier_base: 8, tx_pairs: 4, yz_pairs: 4, moment: 3.0, cascade, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: u32,
    pub intervals: usize,
    pub mollifier_index: usize,
    pub y0: f64,
    /// `|Y₀^n − Y₀^{n−1}|` against the previous level.
    pub y0_gap: Option<f64>,
    /// `sup |Y^n − Y^{n−1}|` over the shared paths and grid times.
    pub sup_gap: Option<f64>,
    pub rejected: usize,
    pub embedding: EmbeddingEstimate,
    /// First moment of the embedding gap.
    pub embedding_mean: f64,
    /// `σ̄² T w^h(Ê‖B^{n,t} − B^t‖_∞)`, the generator gap bound along paths.
    pub generator_gap_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub generator: String,
    pub terminal: String,
    pub levels: Vec<LevelReport>,
    /// Ratios of successive embedding-error estimates at the configured moment.
    pub embedding_ratios: Vec<f64>,
    pub checks: Vec<Check>,
}

impl ApproxReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn sup_gap(a: &SolutionPaths, b: &SolutionPaths) -> f64 {
    let index: std::collections::HashMap<(usize, u64), &crate::cascade::PathTriple> =
        a.paths.iter().map(|p| ((p.member, p.path_index), p)).collect();
    b.paths
        .par_iter()
        .filter_map(|q| index.get(&(q.member, q.path_index)).map(|p| (p, q)))
        .map(|(p, q)| p.y.iter().zip(&q.y).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())))
        .reduce(|| 0.0, f64::max)
}

/// Discretizes `h` and `xi` on dyadic partitions, mollifies the generator in
/// `(t, x)` and then `(y, z)`, solves each cascade and reads `Y` along the
/// shared scenario family.
pub fn approximation_pipeline(
    h: &PathGenerator<f64>,
    xi: &PathTerminal<f64>,
    band: &VolatilityBand<f64>,
    family: &ScenarioFamily,
    config: &PipelineConfig,
) -> Result<ApproxReport> {
    family.validate()?;
    if config.levels.is_empty() || config.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("pipeline levels must be a nonempty increasing list"));
    }
    let horizon = family.horizon;
    let mut levels: Vec<LevelReport> = Vec::new();
    let mut prev: Option<SolutionPaths> = None;
    let mut checks = Vec::new();
    for &n in &config.levels {
        let wrap = |e: Error| match e {
            Error::Configuration(m) if !m.starts_with("level") => Error::Configuration(format!("level {n}: {m}")),
            Error::Interval { ref source, .. } if matches!(**source, Error::Configuration(_)) => {
                Error::Configuration(format!("level {n}: {e}"))
            }
            other => other,
        };
        let partition = TimePartition::dyadic(horizon, n)?;
        let template = crate::scenarios::simulate_scenario(&family.members[0].control, band, 0, 0, family.dt, horizon)?;
        level_knots(&partition, &template.times, family.dt, n)?;
        let dim = partition.intervals();
        let index = config.mollifier_base << n;
        let seed = crate::scenarios::derive_seed(config.seed, n as u64);
        let rho_tx = Mollifier::symmetric_sampled(index, dim + 1, config.tx_pairs, seed).map_err(wrap)?;
        let rho_yz = Mollifier::symmetric_sampled(index, 2, config.yz_pairs, seed ^ 1).map_err(wrap)?;
        let f = discretize_path_generator(h, &partition);
        let f = mollify_generator_tx(&f, &rho_tx, horizon).map_err(wrap)?;
        let f = mollify_generator_yz(&f, &rho_yz).map_err(wrap)?;
        let phi = discretize_path_terminal(xi, &partition);
        let cas = solve_cascade(&f, &phi, &partition, band, &config.cascade).map_err(wrap)?;
        let paths = build_solution_paths(&cas, family).map_err(wrap)?;
        let embedding = embedding_error(n, family, config.moment)?;
        let embedding_mean = embedding_error(n, family, 1.0)?.error.estimate;
        let y0 = cas.y0();
        let (y0_gap, sup) = match (&prev, levels.last()) {
            (Some(p), Some(l)) => (Some((y0 - l.y0).abs()), Some(sup_gap(p, &paths))),
            _ => (None, None),
        };
        log::info!("level {n}: N = {dim}, Y0 = {y0}, gap = {y0_gap:?}");
        levels.push(LevelReport {
            level: n,
            intervals: dim,
            mollifier_index: index,
            y0,
            y0_gap,
            sup_gap: sup,
            rejected: paths.rejected.len(),
            generator_gap_bound: band.var_hi() * horizon * h.modulus.eval(embedding_mean),
            embedding,
            embedding_mean,
        });
        prev = Some(paths);
    }
    let y0_gaps: Vec<f64> = levels.iter().filter_map(|l| l.y0_gap).collect();
    let sup_gaps: Vec<f64> = levels.iter().filter_map(|l| l.sup_gap).collect();
    let errs: Vec<f64> = levels.iter().map(|l| l.embedding.error.estimate).collect();
    let embedding_ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    checks.push(Check::flag("successive Y0 gaps nonincreasing", nonincreasing(&y0_gaps, 0.0)));
    checks.push(Check::flag("successive sup-path Y gaps nonincreasing", nonincreasing(&sup_gaps, 0.0)));
    for (w, r) in config.levels.windows(2).zip(&embedding_ratios) {
        checks.push(Check::at_most(
            format!("embedding error decay from level {} to {} (√2 / ratio)", w[0], w[1]),
            std::f64::consts::SQRT_2 / r,
            1.0,
        ));
    }
    for l in &levels {
        checks.extend(l.embedding.checks.iter().cloned());
    }
    Ok(ApproxReport { generator: h.id.clone(), terminal: xi.id.clone(), levels, embedding_ratios, checks })
}
