use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcore::{derivative_bound_ledger, DerivativeLedger, GeneratorSpec, TerminalSpec, TimePartition, VolatilityBand};
use crate::gpde::{solve_parametric, stitch_table, GridConfig, GridSolution, ParamTable};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub grid: GridConfig,
    /// Clamp `z` at 1.1 × the ledger bound inside the generator.
    pub truncate_z: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { grid: GridConfig::default(), truncate_z: true }
    }
}

/// The backward cascade `u^N, …, u^1` and its stitching tables.
#[derive(Debug, Clone)]
pub struct CascadeSolution<T> {
    pub partition: TimePartition<T>,
    pub band: VolatilityBand<T>,
    pub generator: GeneratorSpec<T>,
    pub terminal: TerminalSpec<T>,
    /// `intervals[k − 1]` solves on `[t_{k−1}, t_k]`.
    pub intervals: Vec<GridSolution<T>>,
    /// `stitch[k − 1]` is `x^(k−1) ↦ u^k(t_{k−1}, x^(k−1), 0)`; `stitch[0]` is `Y_0`.
    pub stitch: Vec<ParamTable<T>>,
    pub ledger: DerivativeLedger<T>,
    pub z_bound: Option<T>,
    /// Sanity ceiling `M₀ (1 + σ̄²T) e^{σ̄² L_y T}` for `|Y|`.
    pub m_y: f64,
    pub warnings: Vec<String>,
}

/// Per-interval comparison of `max |D_x u^k|` with the ledger bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub interval: usize,
    pub max_interior_du: f64,
    pub ledger_bound: f64,
    pub dx: f64,
    pub pass: bool,
}

impl<T: Real> CascadeSolution<T> {
    pub fn intervals_len(&self) -> usize {
        self.intervals.len()
    }

    pub fn y0(&self) -> T {
        self.stitch[0].values[0]
    }

    pub fn interval(&self, k: usize) -> &GridSolution<T> {
        &self.intervals[k - 1]
    }

    /// `|D_x u^k| ≤ L^k + 10 dx` on interior nodes.
    pub fn derivative_checks(&self) -> Vec<DerivativeCheck> {
        self.intervals
            .iter()
            .enumerate()
            .map(|(i, sol)| {
                let max = sol.max_interior_du().as_f64();
                let bound = self.ledger.bounds[i].as_f64();
                let dx = sol.grid.dx().as_f64();
                DerivativeCheck { interval: i + 1, max_interior_du: max, ledger_bound: bound, dx, pass: max <= bound + 10.0 * dx }
            })
            .collect()
    }

    /// Largest `|u^k(t_k, x^(k−1), x_k) − u^{k+1}(t_k, x^(k−1), x_k, 0)|` over the
    /// parameter nodes shared by both intervals.
    pub fn stitching_gap(&self) -> Result<T> {
        let mut worst = T::zero();
        for k in 1..self.intervals.len() {
            let here = &self.intervals[k - 1];
            let next = &self.intervals[k];
            let tk = self.partition.time(k);
            let axis = next.params.axes[k - 1];
            for p in 0..here.n_params() {
                let mut point = here.params.point(p);
                for x in axis.nodes() {
                    let a = here.sample(tk, &point, x)?.u;
                    point.push(x);
                    let b = next.sample(tk, &point, T::zero())?.u;
                    point.pop();
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Solves the cascade backward from `k = N` to `k = 1`.
///
/// Interval `k` freezes `x_1 … x_{k−1}` on the parameter axes, carries `x_k` on
/// its space grid, and pads the generator with `N − k` zeros. Its terminal
/// data is `φ` for `k = N` and the previous interval's stitching table otherwise.
pub fn solve_cascade<T: Real>(
    f: &GeneratorSpec<T>,
    phi: &TerminalSpec<T>,
    partition: &TimePartition<T>,
    band: &VolatilityBand<T>,
    config: &CascadeConfig,
) -> Result<CascadeSolution<T>> {
    let n = partition.intervals();
    if f.dim() != n {
        return Err(Error::Shape { expected: n, actual: f.dim() });
    }
    if phi.dim() != n {
        return Err(Error::Shape { expected: n, actual: phi.dim() });
    }
    let c = f.constants;
    let ledger = derivative_bound_ledger(T::lit(phi.lipschitz), T::lit(c.l_x), T::lit(c.l_y), band, partition)?;
    let z_bound = (config.truncate_z && ledger.truncation().is_finite()).then(|| ledger.truncation());
    let mut intervals: Vec<GridSolution<T>> = Vec::with_capacity(n);
    let mut stitch: Vec<ParamTable<T>> = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let wrap = |e: Error| e.in_interval(k);
        let grid = config.grid.space_grid(band, partition.gap(k)).map_err(wrap)?;
        let params = config.grid.params_for(band, partition, k).map_err(wrap)?;
        let next = stitch.last();
        let terminal = |p: &[T], x: T| -> Result<T> {
            let mut full = Vec::with_capacity(p.len() + 1);
            full.extend_from_slice(p);
            full.push(x);
            match next {
                None => Ok(phi.eval(&full)),
                Some(table) => table.eval(&full).map_err(|e| match e {
                    Error::Range(m) => Error::range(format!("stitching into interval {}: {m}", k + 1)),
                    other => other,
                }),
            }
        };
        let interval = (partition.time(k - 1), partition.time(k));
        let sol = solve_parametric(f, params, &terminal, band, interval, &grid, &config.grid.scheme, z_bound).map_err(wrap)?;
        log::debug!("interval {k}: {} params, {} steps of {}", sol.n_params(), sol.steps, sol.dt);
        stitch.push(stitch_table(&sol, interval.0).map_err(wrap)?);
        intervals.push(sol);
    }
    intervals.reverse();
    stitch.reverse();
    let horizon = partition.horizon().as_f64();
    let s2 = band.var_hi().as_f64();
    let m0 = c.m0 + phi.bound;
    let m_y = m0 * (1.0 + s2 * horizon) * (s2 * c.l_y * horizon).exp();
    let mut warnings = Vec::new();
    for (i, sol) in intervals.iter().enumerate() {
        let max = sol.max_abs_u().as_f64();
        if max > m_y {
            let msg = format!("interval {}: max |u| = {max} exceeds the ceiling M_y = {m_y}", i + 1);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(CascadeSolution {
        partition: partition.clone(),
        band: *band,
        generator: f.clone(),
        terminal: phi.clone(),
        intervals,
        stitch,
        ledger,
        z_bound,
        m_y,
        warnings,
    })
}
