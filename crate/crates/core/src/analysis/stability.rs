use std::collections::HashMap;

use serde::Serialize;

use super::martingale::{bmo_norm, BmoEstimate};
use super::report::{decreasing, nonincreasing, Check};
use crate::cascade::{build_solution_paths, generator_arguments, solve_cascade, CascadeConfig, CascadeSolution, PathTriple, SolutionPaths};
use crate::error::{Error, Result};
use crate::gcore::GeneratorSpec;
use crate::scenarios::{upper_expectation_of_values, ScenarioFamily, UpperExpectation};

/// Lipschitz cutoff equal to 1 on `[−ε, ε]`, 0 outside `[−2ε, 2ε]`, linear between.
pub fn tent_cutoff(x: f64, eps: f64) -> f64 {
    let a = x.abs();
    if a <= eps {
        1.0
    } else if a >= 2.0 * eps {
        0.0
    } else {
        2.0 - a / eps
    }
}

/// The linearization coefficients `(â, b̂, m̂, ĥ)` along one pair of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationSeries {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
}

/// `h¹` and `h²` are evaluated at the path's generator arguments `x[j]`.
pub fn linearization_coefficients(
    p1: &PathTriple,
    p2: &PathTriple,
    times: &[f64],
    x: &[Vec<f64>],
    h1: &GeneratorSpec<f64>,
    h2: &GeneratorSpec<f64>,
    eps: f64,
) -> LinearizationSeries {
    let n = times.len();
    let mut out = LinearizationSeries {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
    };
    for j in 0..n {
        let (t, xs) = (times[j], &x[j]);
        let (y1, y2, z1, z2) = (p1.y[j], p2.y[j], p1.z[j], p2.z[j]);
        let (dy, dz) = (y1 - y2, z1 - z2);
        let hy = h1.eval(t, xs, y1, z1) - h1.eval(t, xs, y2, z1);
        let hz = h1.eval(t, xs, y2, z1) - h1.eval(t, xs, y2, z2);
        let (ly, lz) = (tent_cutoff(dy, eps), tent_cutoff(dz, eps));
        out.a.push(if dy != 0.0 { (1.0 - ly) * hy / dy } else { 0.0 });
        out.b.push(if dz != 0.0 { (1.0 - lz) * hz / (dz * dz) * dz } else { 0.0 });
        out.m.push(ly * hy + lz * hz);
        out.h.push(h1.eval(t, xs, y2, z2) - h2.eval(t, xs, y2, z2));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub eps: f64,
    pub points: usize,
    /// Largest `|â| − L_y`, `|b̂| − L_z(1 + |Z¹| + |Z²|)`, `|m̂| − 2ε(L_y + L_z(1 + 2ε + 2|Z¹|))`.
    pub a_excess: f64,
    pub b_excess: f64,
    pub m_excess: f64,
    pub checks: Vec<Check>,
}

/// Pairs the paths of two runs on the same scenarios by `(member, path index)`.
fn paired<'a>(r1: &'a SolutionPaths, r2: &'a SolutionPaths) -> Result<Vec<(&'a PathTriple, &'a PathTriple)>> {
    if r1.times != r2.times || r1.labels != r2.labels {
        return Err(Error::config("the two runs use different scenario grids or families"));
    }
    let index: HashMap<(usize, u64), &PathTriple> = r2.paths.iter().map(|p| ((p.member, p.path_index), p)).collect();
    let out: Vec<_> = r1
        .paths
        .iter()
        .filter_map(|p| index.get(&(p.member, p.path_index)).map(|q| (p, *q)))
        .collect();
    if out.iter().any(|(p, q)| p.b != q.b) {
        return Err(Error::config("paired paths differ; the runs must share seeds"));
    }
    if out.is_empty() {
        return Err(Error::config("the two runs share no paths"));
    }
    Ok(out)
}

fn same_discretization(c1: &CascadeSolution<f64>, c2: &CascadeSolution<f64>) -> Result<()> {
    let g = |c: &CascadeSolution<f64>| c.intervals.iter().map(|s| (s.grid, s.params.clone(), s.times.clone())).collect::<Vec<_>>();
    if c1.partition != c2.partition || c1.band != c2.band || g(c1) != g(c2) {
        return Err(Error::config("the two cascades use different partitions, bands or grids"));
    }
    Ok(())
}

fn scheme_generator(c: &CascadeSolution<f64>) -> GeneratorSpec<f64> {
    match c.z_bound {
        Some(m) => c.generator.truncated_in_z(m),
        None => c.generator.clone(),
    }
}

/// Checks the pointwise bounds on `(â, b̂, m̂)` over every shared path.
pub fn linearization_check(
    run1: (&CascadeSolution<f64>, &SolutionPaths),
    run2: (&CascadeSolution<f64>, &SolutionPaths),
    eps: f64,
) -> Result<LinearizationReport> {
    same_discretization(run1.0, run2.0)?;
    let pairs = paired(run1.1, run2.1)?;
    let (h1, h2) = (scheme_generator(run1.0), scheme_generator(run2.0));
    let (ly, lz) = (h1.constants.l_y, h1.constants.l_z);
    let slack = |bound: f64| 1e-12 * (1.0 + bound);
    let (mut ae, mut be, mut me) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut points = 0;
    let times = &run1.1.times;
    for (p, q) in pairs {
        let x = generator_arguments(run1.0, times, &p.b)?;
        let s = linearization_coefficients(p, q, times, &x, &h1, &h2, eps);
        for j in 0..times.len() {
            let (z1, z2) = (p.z[j], q.z[j]);
            let bb = lz * (1.0 + z1.abs() + z2.abs());
            let mb = 2.0 * eps * (ly + lz * (1.0 + 2.0 * eps + 2.0 * z1.abs()));
            ae = ae.max(s.a[j].abs() - ly - slack(ly));
            be = be.max(s.b[j].abs() - bb - slack(bb));
            me = me.max(s.m[j].abs() - mb - slack(mb));
        }
        points += times.len();
    }
    let checks = vec![
        Check::at_most("max |â| − L_y", ae, 0.0),
        Check::at_most("max |b̂| − L_z(1 + |Z¹| + |Z²|)", be, 0.0),
        Check::at_most("max |m̂| − 2ε(L_y + L_z(1 + 2ε + 2|Z¹|))", me, 0.0),
    ];
    Ok(LinearizationReport { eps, points, a_excess: ae, b_excess: be, m_excess: me, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMoment {
    pub p: f64,
    pub estimate: UpperExpectation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    pub paths: usize,
    pub sup_abs_y: f64,
    pub bmo: BmoEstimate,
    pub k_moments: Vec<KMoment>,
    pub finite: bool,
}

/// `sup |Y|` over paths, the G-BMO estimate of `Z` and `Ê[|K_T|^p]` for each `p`.
pub fn apriori_report(paths: &SolutionPaths, p_list: &[f64], eval_times: &[f64], buckets: usize) -> Result<AprioriReport> {
    let bmo = bmo_norm(&paths.z_paths(), &paths.labels, &paths.times, eval_times, buckets)?;
    let by_member = paths.k_terminal_by_member();
    let k_moments: Vec<KMoment> = p_list
        .iter()
        .map(|&p| {
            let (labels, values): (Vec<String>, Vec<Vec<f64>>) = paths
                .labels
                .iter()
                .cloned()
                .zip(by_member.iter().map(|v| v.iter().map(|k| k.abs().powf(p)).collect::<Vec<f64>>()))
                .filter(|(_, v)| !v.is_empty())
                .unzip();
            KMoment { p, estimate: upper_expectation_of_values(&labels, &values) }
        })
        .collect();
    let sup_abs_y = paths.max_abs_y();
    let finite = sup_abs_y.is_finite() && bmo.value.is_finite() && k_moments.iter().all(|k| k.estimate.estimate.is_finite());
    Ok(AprioriReport { paths: paths.paths.len(), sup_abs_y, bmo, k_moments, finite })
}

/// Agreement of the `K` moments of two reports (e.g. `n` and `2n` paths)
/// within three combined standard errors.
pub fn apriori_agreement(a: &AprioriReport, b: &AprioriReport) -> Vec<Check> {
    a.k_moments
        .iter()
        .zip(&b.k_moments)
        .map(|(x, y)| {
            let tol = 3.0 * (x.estimate.std_err.powi(2) + y.estimate.std_err.powi(2)).sqrt() + 1e-12;
            Check::near(format!("Ê[|K_T|^{}] under path doubling", x.p), y.estimate.estimate, x.estimate.estimate, tol)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `max |Y¹ − Y²|` over paths and times.
    pub sup_y_gap: f64,
    /// `Ê[∫ |Z¹ − Z²|² dt]`.
    pub z_gap: f64,
    /// `max |Y¹_T − Y²_T|`.
    pub terminal_gap: f64,
    /// `Ê[∫ |h¹ − h²|(Y², Z²) d⟨B⟩]`.
    pub generator_gap: f64,
    /// `sup_y_gap / (terminal_gap + generator_gap)`, zero when both driving gaps vanish.
    pub implied_ratio: f64,
}

pub fn stability_gap(
    run1: (&CascadeSolution<f64>, &SolutionPaths),
    run2: (&CascadeSolution<f64>, &SolutionPaths),
) -> Result<StabilityReport> {
    same_discretization(run1.0, run2.0)?;
    let pairs = paired(run1.1, run2.1)?;
    let (h1, h2) = (scheme_generator(run1.0), scheme_generator(run2.0));
    let times = &run1.1.times;
    let n = times.len();
    let members = run1.1.labels.len();
    let (mut zg, mut hg) = (vec![Vec::new(); members], vec![Vec::new(); members]);
    let (mut sup_y, mut term) = (0.0f64, 0.0f64);
    for (p, q) in pairs {
        let x = generator_arguments(run1.0, times, &p.b)?;
        let mut zi = 0.0;
        let mut hi = 0.0;
        for j in 0..n {
            sup_y = sup_y.max((p.y[j] - q.y[j]).abs());
            if j + 1 < n {
                zi += (p.z[j] - q.z[j]).powi(2) * (times[j + 1] - times[j]);
                let d = h1.eval(times[j], &x[j], q.y[j], q.z[j]) - h2.eval(times[j], &x[j], q.y[j], q.z[j]);
                hi += d.abs() * (p.qv[j + 1] - p.qv[j]);
            }
        }
        term = term.max((p.y[n - 1] - q.y[n - 1]).abs());
        zg[p.member].push(zi);
        hg[p.member].push(hi);
    }
    let upper = |v: Vec<Vec<f64>>| {
        let (l, v): (Vec<String>, Vec<Vec<f64>>) =
            run1.1.labels.iter().cloned().zip(v).filter(|(_, v)| !v.is_empty()).unzip();
        upper_expectation_of_values(&l, &v).estimate
    };
    let (z_gap, generator_gap) = (upper(zg), upper(hg));
    let driving = term + generator_gap;
    let implied_ratio = if driving > 0.0 { sup_y / driving } else { 0.0 };
    Ok(StabilityReport { sup_y_gap: sup_y, z_gap, terminal_gap: term, generator_gap, implied_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySweep {
    pub deltas: Vec<f64>,
    /// `e^{2σ̄² L_y T}`.
    pub factor: f64,
    pub reports: Vec<StabilityReport>,
    pub checks: Vec<Check>,
}

/// Compares `base` with runs whose terminal condition is shifted by each `δ`
/// (taken in decreasing order).
pub fn stability_sweep(
    base: &CascadeSolution<f64>,
    base_paths: &SolutionPaths,
    config: &CascadeConfig,
    family: &ScenarioFamily,
    deltas: &[f64],
    tol: f64,
) -> Result<StabilitySweep> {
    let mut deltas = deltas.to_vec();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let t = base.partition.horizon();
    let factor = (2.0 * base.band.var_hi() * base.generator.constants.l_y * t).exp();
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for &d in &deltas {
        let phi = base.terminal.shifted(d);
        let other = solve_cascade(&base.generator, &phi, &base.partition, &base.band, config)?;
        let paths = build_solution_paths(&other, family)?;
        let r = stability_gap((base, base_paths), (&other, &paths))?;
        checks.push(Check::at_most(format!("sup-Y gap for δ = {d}"), r.sup_y_gap, factor * d + tol));
        reports.push(r);
    }
    let y: Vec<f64> = reports.iter().map(|r| r.sup_y_gap).collect();
    let z: Vec<f64> = reports.iter().map(|r| r.z_gap).collect();
    checks.push(Check::flag("sup-Y gap weakly monotone in δ", nonincreasing(&y, 0.0)));
    // a terminal shift that leaves Z untouched gives gaps at rounding level
    let vanishing = z.iter().all(|&v| v <= 1e-20);
    checks.push(Check::flag("Z gap decreases with δ or vanishes", decreasing(&z) || vanishing));
    Ok(StabilitySweep { deltas, factor, reports, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_is_between_the_indicators() {
        let eps = 0.1;
        for i in -300..=300 {
            let x = i as f64 * 1e-3;
            let l = tent_cutoff(x, eps);
            let lo = if x.abs() <= eps { 1.0 } else { 0.0 };
            let hi = if x.abs() <= 2.0 * eps { 1.0 } else { 0.0 };
            assert!(lo <= l && l <= hi, "x = {x}");
        }
    }
}
