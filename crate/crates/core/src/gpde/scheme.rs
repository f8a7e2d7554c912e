//! Explicit monotone scheme for `∂_t u ± G(D²u + 2f) = 0` in one space variable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{ParamGrid, ParamTable, SpaceGrid};
use super::solution::{extract_derivatives, GridSolution};
use crate::error::{Error, Result};
use crate::gcore::{GeneratorSpec, TerminalSpec, TimePartition, VolatilityBand};
use crate::real::Real;

/// Time stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Safety factor in `dt ≤ cfl · dx² / σ̄²`; the scheme is monotone up to 0.5.
    pub cfl: f64,
    /// Requested step; must respect the CFL bound. `None` picks the largest allowed.
    pub dt: Option<f64>,
    /// Number of time levels kept per solution (endpoints included).
    pub max_stored_levels: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { cfl: 0.4, dt: None, max_stored_levels: 65 }
    }
}

impl SchemeConfig {
    /// Number of uniform steps covering `length` and the resulting step size.
    pub fn time_steps<T: Real>(&self, length: T, grid: &SpaceGrid<T>, band: &VolatilityBand<T>) -> Result<(usize, T)> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::config(format!("CFL factor must lie in (0, 0.5], got {}", self.cfl)));
        }
        if self.max_stored_levels < 2 {
            return Err(Error::config("at least two stored time levels are required"));
        }
        let dx = grid.dx();
        let limit = T::lit(self.cfl) * dx * dx / band.var_hi();
        let target = match self.dt {
            Some(dt) => {
                let dt = T::lit(dt);
                if !(dt > T::zero()) {
                    return Err(Error::config(format!("time step must be positive, got {dt}")));
                }
                if dt > limit {
                    return Err(Error::config(format!(
                        "CFL violated: dt = {dt} exceeds {} · dx²/σ̄² = {limit} (dx = {dx})",
                        self.cfl
                    )));
                }
                dt
            }
            None => limit,
        };
        let steps = (length / target - T::lit(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
        Ok((steps, length / T::from_usize_lossy(steps)))
    }
}

/// Step indices kept in storage: `0`, every `stride`-th step, and `steps`.
fn stored_indices(steps: usize, max_levels: usize) -> Vec<usize> {
    if steps + 1 <= max_levels {
        return (0..=steps).collect();
    }
    let stride = steps.div_ceil(max_levels - 1);
    let mut out: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *out.last().expect("non-empty") != steps {
        out.push(steps);
    }
    out
}

/// Per-interval widths and node counts for cascade-type solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Half-width of every grid in units of `σ̄ √Δt_k`.
    pub width: f64,
    pub space_nodes: usize,
    /// Nodes per frozen-increment axis.
    pub param_nodes: usize,
    pub scheme: SchemeConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { width: 6.0, space_nodes: 101, param_nodes: 21, scheme: SchemeConfig::default() }
    }
}

impl GridConfig {
    pub fn space_grid<T: Real>(&self, band: &VolatilityBand<T>, gap: T) -> Result<SpaceGrid<T>> {
        SpaceGrid::centered(T::lit(self.width) * band.sigma_hi() * gap.sqrt(), self.space_nodes)
    }

    /// Axis for the increment of interval `k` when it is frozen in later intervals.
    pub fn param_axis<T: Real>(&self, band: &VolatilityBand<T>, gap: T) -> Result<SpaceGrid<T>> {
        SpaceGrid::centered(T::lit(self.width) * band.sigma_hi() * gap.sqrt(), self.param_nodes)
    }

    /// Axes `x_1 … x_{k−1}` frozen on interval `k` (1-based).
    pub fn params_for<T: Real>(
        &self,
        band: &VolatilityBand<T>,
        partition: &TimePartition<T>,
        k: usize,
    ) -> Result<ParamGrid<T>> {
        let axes = (1..k).map(|j| self.param_axis(band, partition.gap(j))).collect::<Result<Vec<_>>>()?;
        let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
        match total {
            Some(n) if n <= 1 << 20 => Ok(ParamGrid::new(axes)),
            _ => Err(Error::config(format!(
                "{} frozen axes with {} nodes each is too large a parameter grid",
                k - 1,
                self.param_nodes
            ))),
        }
    }
}

/// Forward G-heat equation `∂_t u − G(D²u) = 0`, `u(0, ·) = φ`, on `[0, horizon]`.
///
/// Boundary nodes take `D²u = 0`, so they stay at their initial values.
pub fn solve_g_heat<T: Real>(
    phi: &TerminalSpec<T>,
    band: &VolatilityBand<T>,
    horizon: T,
    grid: &SpaceGrid<T>,
    scheme: &SchemeConfig,
) -> Result<GridSolution<T>> {
    if phi.dim() != 1 {
        return Err(Error::config(format!("G-heat data must depend on one variable, `{}` has {}", phi.id, phi.dim())));
    }
    if !(horizon > T::zero()) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let (steps, dt) = scheme.time_steps(horizon, grid, band)?;
    let keep = stored_indices(steps, scheme.max_stored_levels);
    let m = grid.len();
    let dx = grid.dx();
    let h2 = dx * dx;
    let mut u: Vec<T> = grid.nodes().iter().map(|&x| phi.eval(&[x])).collect();
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericFailure { step: 0, t: 0.0, detail: format!("initial value at node {i} is not finite") });
    }
    let mut next = u.clone();
    let mut stored = Vec::with_capacity(keep.len() * m);
    let mut keep_iter = keep.iter().peekable();
    for n in 0..=steps {
        if keep_iter.peek() == Some(&&n) {
            stored.extend_from_slice(&u);
            keep_iter.next();
        }
        if n == steps {
            break;
        }
        for i in 1..m - 1 {
            let a = (u[i + 1] - T::two() * u[i] + u[i - 1]) / h2;
            next[i] = u[i] + dt * band.g(a);
        }
        next[0] = u[0];
        next[m - 1] = u[m - 1];
        if next.iter().any(|v| !v.is_finite()) {
            let t = T::from_usize_lossy(n + 1) * dt;
            return Err(Error::NumericFailure { step: n + 1, t: t.as_f64(), detail: "non-finite value in G-heat sweep".into() });
        }
        std::mem::swap(&mut u, &mut next);
    }
    let times = keep.iter().map(|&n| if n == steps { horizon } else { T::from_usize_lossy(n) * dt }).collect();
    Ok(finish(stored, (T::zero(), horizon), times, *grid, ParamGrid::new(vec![]), steps, dt))
}

fn finish<T: Real>(
    u: Vec<T>,
    interval: (T, T),
    times: Vec<T>,
    grid: SpaceGrid<T>,
    params: ParamGrid<T>,
    steps: usize,
    dt: T,
) -> GridSolution<T> {
    let m = grid.len();
    let mut du = vec![T::zero(); u.len()];
    let mut d2u = vec![T::zero(); u.len()];
    for ((row, a), b) in u.chunks_exact(m).zip(du.chunks_exact_mut(m)).zip(d2u.chunks_exact_mut(m)) {
        extract_derivatives(row, grid.dx(), a, b);
    }
    GridSolution { interval, times, grid, params, steps, dt, u, du, d2u }
}

/// The backward problem shared by every frozen-parameter slice of one interval.
struct Backward<'a, T> {
    f: &'a GeneratorSpec<T>,
    band: &'a VolatilityBand<T>,
    interval: (T, T),
    grid: &'a SpaceGrid<T>,
    z_bound: Option<T>,
    steps: usize,
    dt: T,
    keep: Vec<usize>,
}

impl<T: Real> Backward<'_, T> {
    fn time(&self, n: usize) -> T {
        if n == self.steps {
            self.interval.1
        } else {
            self.interval.0 + T::from_usize_lossy(n) * self.dt
        }
    }

    /// Returns `u` at the kept levels, earliest first.
    fn sweep(&self, frozen: &[T], terminal: Vec<T>) -> Result<Vec<T>> {
        let m = self.grid.len();
        let dx = self.grid.dx();
        let h2 = dx * dx;
        let two = T::two();
        let nodes = self.grid.nodes();
        let live = frozen.len();
        let mut x = vec![T::zero(); self.f.dim()];
        x[..live].copy_from_slice(frozen);
        let clamp = |z: T| match self.z_bound {
            Some(b) if b.is_finite() => z.clamp_to(-b, b),
            _ => z,
        };
        let mut u = terminal;
        let mut next = u.clone();
        let mut stored = vec![T::zero(); self.keep.len() * m];
        let mut slot = self.keep.len();
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        for n in (0..=self.steps).rev() {
            if slot > 0 && self.keep[slot - 1] == n {
                slot -= 1;
                stored[slot * m..(slot + 1) * m].copy_from_slice(&u);
            }
            if n == 0 {
                break;
            }
            let t = self.time(n);
            for i in 0..m {
                let (d2, du) = if i == 0 {
                    (T::zero(), (-three * u[0] + four * u[1] - u[2]) / (two * dx))
                } else if i == m - 1 {
                    (T::zero(), (three * u[i] - four * u[i - 1] + u[i - 2]) / (two * dx))
                } else {
                    ((u[i + 1] - two * u[i] + u[i - 1]) / h2, (u[i + 1] - u[i - 1]) / (two * dx))
                };
                x[live] = nodes[i];
                let z = clamp(du);
                let fv = self.f.eval(t, &x, u[i], z);
                if !fv.is_finite() {
                    return Err(Error::Generator {
                        id: self.f.id.clone(),
                        t: t.as_f64(),
                        x: x.iter().map(|v| v.as_f64()).collect(),
                        y: u[i].as_f64(),
                        z: z.as_f64(),
                    });
                }
                next[i] = u[i] + self.dt * self.band.g(d2 + two * fv);
            }
            if let Some(i) = next.iter().position(|v| !v.is_finite()) {
                return Err(Error::NumericFailure {
                    step: self.steps - n + 1,
                    t: self.time(n - 1).as_f64(),
                    detail: format!("non-finite value at node {i}"),
                });
            }
            std::mem::swap(&mut u, &mut next);
        }
        Ok(stored)
    }
}

/// Backward equation `∂_t u + G(D²u + 2f(t, frozen, x, 0…0, u, Du)) = 0` on
/// `[t_a, t_b]` with `u(t_b, ·) = terminal`; `x` occupies the slot right
/// after the frozen increments and `z` is clamped to `±z_bound` when given.
#[allow(clippy::too_many_arguments)]
pub fn solve_generator_pde<T: Real>(
    f: &GeneratorSpec<T>,
    frozen: &[T],
    terminal: impl Fn(T) -> T,
    band: &VolatilityBand<T>,
    interval: (T, T),
    grid: &SpaceGrid<T>,
    scheme: &SchemeConfig,
    z_bound: Option<T>,
) -> Result<GridSolution<T>> {
    let data: Vec<T> = grid.nodes().into_iter().map(terminal).collect();
    let pg = ParamGrid::new(vec![]);
    let bw = backward(f, frozen.len(), band, interval, grid, scheme, z_bound)?;
    let stored = bw.sweep(frozen, data)?;
    let times = bw.keep.iter().map(|&n| bw.time(n)).collect();
    Ok(finish(stored, interval, times, *grid, pg, bw.steps, bw.dt))
}

fn backward<'a, T: Real>(
    f: &'a GeneratorSpec<T>,
    frozen: usize,
    band: &'a VolatilityBand<T>,
    interval: (T, T),
    grid: &'a SpaceGrid<T>,
    scheme: &SchemeConfig,
    z_bound: Option<T>,
) -> Result<Backward<'a, T>> {
    if frozen >= f.dim() {
        return Err(Error::config(format!(
            "generator `{}` takes {} increments; cannot freeze {frozen} and keep a live one",
            f.id,
            f.dim()
        )));
    }
    let (ta, tb) = interval;
    if !(tb > ta) {
        return Err(Error::domain(format!("interval [{ta}, {tb}] is empty")));
    }
    let (steps, dt) = scheme.time_steps(tb - ta, grid, band)?;
    Ok(Backward { f, band, interval, grid, z_bound, steps, dt, keep: stored_indices(steps, scheme.max_stored_levels) })
}

/// [`solve_generator_pde`] for every point of a frozen-parameter tensor grid.
///
/// `terminal(p, x)` gives the data at parameter point `p` and live value `x`.
#[allow(clippy::too_many_arguments)]
pub fn solve_parametric<T: Real>(
    f: &GeneratorSpec<T>,
    params: ParamGrid<T>,
    terminal: &(dyn Fn(&[T], T) -> Result<T> + Sync),
    band: &VolatilityBand<T>,
    interval: (T, T),
    grid: &SpaceGrid<T>,
    scheme: &SchemeConfig,
    z_bound: Option<T>,
) -> Result<GridSolution<T>> {
    let bw = backward(f, params.dim(), band, interval, grid, scheme, z_bound)?;
    let nodes = grid.nodes();
    let slices: Vec<Vec<T>> = (0..params.len())
        .into_par_iter()
        .map(|p| {
            let point = params.point(p);
            let data = nodes.iter().map(|&x| terminal(&point, x)).collect::<Result<Vec<T>>>()?;
            bw.sweep(&point, data)
        })
        .collect::<Result<_>>()?;
    let times = bw.keep.iter().map(|&n| bw.time(n)).collect();
    Ok(finish(slices.concat(), interval, times, *grid, params, bw.steps, bw.dt))
}

/// `Ê_{t_i}[φ(B_{t_1}, B_{t_2} − B_{t_1}, …)]` as a function of the first `i`
/// increments, tabulated on the parameter axes of `config`. For `i = 0` the
/// table is a scalar.
pub fn conditional_g_expectation<T: Real>(
    phi: &TerminalSpec<T>,
    partition: &TimePartition<T>,
    i: usize,
    band: &VolatilityBand<T>,
    config: &GridConfig,
) -> Result<ParamTable<T>> {
    let n = partition.intervals();
    if phi.dim() != n {
        return Err(Error::Shape { expected: n, actual: phi.dim() });
    }
    if i > n {
        return Err(Error::domain(format!("conditioning level {i} exceeds the {n} intervals")));
    }
    let zero = GeneratorSpec::zero(n);
    let scheme = SchemeConfig { max_stored_levels: 2, ..config.scheme };
    let mut table: Option<ParamTable<T>> = None;
    if i == n {
        let grid = config.params_for(band, partition, n + 1)?;
        let values = (0..grid.len()).map(|p| phi.eval(&grid.point(p))).collect();
        return ParamTable::new(grid, values);
    }
    for k in (i + 1..=n).rev() {
        let grid = config.space_grid(band, partition.gap(k))?;
        let params = config.params_for(band, partition, k).map_err(|e| e.in_interval(k))?;
        let next = table.take();
        let terminal = |p: &[T], x: T| -> Result<T> {
            let mut full = p.to_vec();
            full.push(x);
            match &next {
                None => Ok(phi.eval(&full)),
                Some(tab) => tab.eval(&full).map_err(|e| e.in_interval(k)),
            }
        };
        let sol = solve_parametric(&zero, params.clone(), &terminal, band, (partition.time(k - 1), partition.time(k)), &grid, &scheme, None)
            .map_err(|e| e.in_interval(k))?;
        table = Some(stitch_table(&sol, partition.time(k - 1))?);
    }
    Ok(table.expect("at least one interval was solved"))
}

/// `p ↦ u(t, p, 0)` over the solution's parameter grid.
pub fn stitch_table<T: Real>(sol: &GridSolution<T>, t: T) -> Result<ParamTable<T>> {
    let values = (0..sol.n_params())
        .map(|p| {
            let point = sol.params.point(p);
            sol.sample(t, &point, T::zero()).map(|s| s.u)
        })
        .collect::<Result<Vec<T>>>()?;
    ParamTable::new(sol.params.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::generator::{GeneratorConstants, Modulus};

    fn band() -> VolatilityBand<f64> {
        VolatilityBand::new(0.5, 1.0).unwrap()
    }

    fn terminal(id: &str, f: fn(f64) -> f64) -> TerminalSpec<f64> {
        TerminalSpec::new(id, 1, f64::INFINITY, f64::INFINITY, move |x: &[f64]| f(x[0]))
    }

    fn grid() -> SpaceGrid<f64> {
        SpaceGrid::new(-6.0, 6.0, 241).unwrap()
    }

    #[test]
    fn stored_indices_cover_endpoints() {
        assert_eq!(stored_indices(4, 65), vec![0, 1, 2, 3, 4]);
        let k = stored_indices(1000, 65);
        assert_eq!(k[0], 0);
        assert_eq!(*k.last().unwrap(), 1000);
        assert!(k.len() <= 65);
    }

    #[test]
    fn cfl_is_enforced() {
        let g = grid();
        let ok = SchemeConfig { dt: Some(1e-4), ..Default::default() };
        assert!(ok.time_steps(1.0, &g, &band()).is_ok());
        let bad = SchemeConfig { dt: Some(1e-2), ..Default::default() };
        assert!(matches!(bad.time_steps(1.0, &g, &band()), Err(Error::Configuration(_))));
        let unstable = SchemeConfig { cfl: 0.8, ..Default::default() };
        assert!(unstable.time_steps(1.0, &g, &band()).is_err());
    }

    #[test]
    fn affine_data_is_preserved() {
        let sol = solve_g_heat(&terminal("x", |x| x), &band(), 1.0, &grid(), &SchemeConfig::default()).unwrap();
        let last = sol.levels() - 1;
        for (x, u) in grid().nodes().iter().zip(sol.u_level(0, last)) {
            assert!((x - u).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_oracles_and_convexity_selection() {
        let b = band();
        let s = SchemeConfig::default();
        let up = solve_g_heat(&terminal("x2", |x| x * x), &b, 1.0, &grid(), &s).unwrap();
        let down = solve_g_heat(&terminal("-x2", |x| -x * x), &b, 1.0, &grid(), &s).unwrap();
        // closed forms x² + σ̄²t and −x² − σ̲²t
        for x in [-1.0, 0.0, 0.7] {
            assert!((up.sample(1.0, &[], x).unwrap().u - (x * x + 1.0)).abs() < 5e-3);
            assert!((down.sample(1.0, &[], x).unwrap().u - (-x * x - 0.25)).abs() < 5e-3);
        }
        assert!((up.sample(1.0, &[], 1.0).unwrap().du - 2.0).abs() < 1e-2);
    }

    #[test]
    fn classical_band_matches_heat_kernel() {
        let b = VolatilityBand::classical(1.0).unwrap();
        let sol = solve_g_heat(&terminal("exp", |x| x.clamp(-5.0, 5.0).exp()), &b, 1.0, &grid(), &SchemeConfig::default())
            .unwrap();
        assert!((sol.sample(1.0, &[], 0.0).unwrap().u - 0.5f64.exp()).abs() < 1e-2);
    }

    #[test]
    fn constant_driver_closed_form() {
        let c = 0.3;
        let f = GeneratorSpec::constant(1, c);
        let sol =
            solve_generator_pde(&f, &[], |_| 0.0, &band(), (0.0, 1.0), &grid(), &SchemeConfig::default(), None).unwrap();
        for lev in 0..sol.levels() {
            let t = sol.times[lev];
            for &u in sol.u_level(0, lev) {
                assert!((u - c * (1.0 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_y_matches_the_ode() {
        let alpha = 0.8;
        let f = GeneratorSpec::new(
            "ay",
            1,
            GeneratorConstants { m0: 0.0, l_x: 0.0, l_y: alpha, l_z: 0.0, modulus: Modulus::Zero },
            move |_, _, y: f64, _| alpha * y,
        );
        let b = VolatilityBand::classical(0.9).unwrap();
        let sol =
            solve_generator_pde(&f, &[], |_| 2.0, &b, (0.0, 1.0), &grid(), &SchemeConfig::default(), None).unwrap();
        let exact = 2.0 * (0.81f64 * alpha).exp();
        let got = sol.sample(0.0, &[], 0.0).unwrap().u;
        assert!((got - exact).abs() / exact < 1e-2, "{got} vs {exact}");
    }

    #[test]
    fn zero_driver_is_the_time_reversed_g_heat() {
        let b = band();
        let s = SchemeConfig::default();
        let phi = terminal("tanh", |x| (2.0 * x).tanh());
        let heat = solve_g_heat(&phi, &b, 0.5, &grid(), &s).unwrap();
        let back = solve_generator_pde(&GeneratorSpec::zero(1), &[], |x| phi.eval(&[x]), &b, (0.0, 0.5), &grid(), &s, None)
            .unwrap();
        assert_eq!(heat.steps, back.steps);
        let diff = heat
            .u_level(0, heat.levels() - 1)
            .iter()
            .zip(back.u_level(0, 0))
            .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn generator_failures_are_reported() {
        let bad = GeneratorSpec::new(
            "nan",
            1,
            GeneratorConstants { m0: 0.0, l_x: 0.0, l_y: 0.0, l_z: 0.0, modulus: Modulus::Zero },
            |t, _, _, _: f64| if t < 0.5 { f64::NAN } else { 0.0 },
        );
        let err = solve_generator_pde(&bad, &[], |_| 0.0, &band(), (0.0, 1.0), &grid(), &SchemeConfig::default(), None)
            .unwrap_err();
        assert!(matches!(err, Error::Generator { .. }), "{err}");
    }

    #[test]
    fn conditional_expectations() {
        let b = band();
        let cfg = GridConfig { space_nodes: 121, param_nodes: 21, ..Default::default() };
        let p1 = TimePartition::uniform(1.0, 1).unwrap();
        let id = TerminalSpec::new("x", 1, f64::INFINITY, 1.0, |x: &[f64]| x[0]);
        let e0 = conditional_g_expectation(&id, &p1, 0, &b, &cfg).unwrap();
        assert!(e0.scalar().unwrap().abs() < 1e-12);
        let sq = TerminalSpec::new("x2", 1, f64::INFINITY, f64::INFINITY, |x: &[f64]| x[0] * x[0]);
        let e0 = conditional_g_expectation(&sq, &p1, 0, &b, &cfg).unwrap();
        assert!((e0.scalar().unwrap() - 1.0).abs() < 5e-3);
        let p2 = TimePartition::uniform(1.0, 2).unwrap();
        let prod = TerminalSpec::new("x1x2", 2, f64::INFINITY, f64::INFINITY, |x: &[f64]| x[0] * x[1]);
        let e1 = conditional_g_expectation(&prod, &p2, 1, &b, &cfg).unwrap();
        for x1 in [-2.0, -0.3, 0.0, 1.1, 2.5] {
            assert!(e1.eval(&[x1]).unwrap().abs() < 1e-10, "{x1}");
        }
    }
}
