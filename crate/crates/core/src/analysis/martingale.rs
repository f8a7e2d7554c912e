use rayon::prelude::*;
use serde::Serialize;

use super::report::Check;
use crate::cascade::SolutionPaths;
use crate::error::{Error, Result};
use crate::scenarios::{mean_and_se, pairwise_sum, ControlMean, ScenarioFamily, ScenarioPath, UpperExpectation};

/// A `Z` series along one path with the path data it is integrated against.
#[derive(Debug, Clone, Copy)]
pub struct ZPath<'a> {
    pub member: usize,
    pub b: &'a [f64],
    pub qv: &'a [f64],
    pub z: &'a [f64],
}

impl SolutionPaths {
    pub fn z_paths(&self) -> Vec<ZPath<'_>> {
        self.paths.iter().map(|p| ZPath { member: p.member, b: &p.b, qv: &p.qv, z: &p.z }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmoControl {
    pub control: String,
    pub value: f64,
    pub at_time: f64,
    pub paths: usize,
}

/// Squared G-BMO norm with deterministic evaluation times in place of
/// stopping times, hence a lower bound of the supremum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmoEstimate {
    pub value: f64,
    pub eval_times: Vec<f64>,
    pub buckets: usize,
    pub per_control: Vec<BmoControl>,
    pub warnings: Vec<String>,
}

/// Fewer paths than this in a history bucket triggers a warning.
pub const MIN_BUCKET: usize = 32;

/// For each control and evaluation time `τ`, the conditional mean of
/// `∫_τ^T Z² d⟨B⟩` given the history is estimated by sorting paths on `B_τ`
/// into `buckets` equal-count groups and averaging inside each; the largest
/// group mean is kept. The result is the maximum over controls and times.
pub fn bmo_norm(
    series: &[ZPath<'_>],
    labels: &[String],
    times: &[f64],
    eval_times: &[f64],
    buckets: usize,
) -> Result<BmoEstimate> {
    if buckets == 0 {
        return Err(Error::config("bmo_norm needs at least one bucket"));
    }
    let dt = times.get(1).map_or(1.0, |t| t - times[0]);
    let idx: Vec<usize> = eval_times
        .iter()
        .map(|&tau| {
            let j = (tau / dt).round();
            if j < 0.0 || j as usize >= times.len() || (times[j as usize] - tau).abs() > 1e-9 * dt.max(1.0) {
                Err(Error::range(format!("evaluation time {tau} is not a grid time")))
            } else {
                Ok(j as usize)
            }
        })
        .collect::<Result<_>>()?;
    for s in series {
        if s.z.len() + 1 < times.len() || s.qv.len() != times.len() || s.b.len() != times.len() {
            return Err(Error::Shape { expected: times.len(), actual: s.z.len() });
        }
    }
    let mut per_control = Vec::new();
    let mut warnings = Vec::new();
    for (m, label) in labels.iter().enumerate() {
        let own: Vec<&ZPath> = series.iter().filter(|s| s.member == m).collect();
        if own.is_empty() {
            continue;
        }
        let mut best = BmoControl { control: label.clone(), value: 0.0, at_time: 0.0, paths: own.len() };
        for (&j, &tau) in idx.iter().zip(eval_times) {
            let mut keyed: Vec<(f64, f64)> = own
                .par_iter()
                .map(|s| {
                    let tail = (j..times.len() - 1).map(|i| s.z[i] * s.z[i] * (s.qv[i + 1] - s.qv[i])).sum::<f64>();
                    (s.b[j], tail)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nb = if j == 0 { 1 } else { buckets.min(keyed.len()) };
            let size = keyed.len() / nb;
            if size < MIN_BUCKET {
                let w = format!("{label}: {size} paths per history bucket at τ = {tau}");
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            for g in 0..nb {
                let hi = if g + 1 == nb { keyed.len() } else { (g + 1) * size };
                let vals: Vec<f64> = keyed[g * size..hi].iter().map(|p| p.1).collect();
                let mean = pairwise_sum(&vals) / vals.len() as f64;
                if mean > best.value {
                    best.value = mean;
                    best.at_time = tau;
                }
            }
        }
        per_control.push(best);
    }
    let value = per_control.iter().map(|c| c.value).fold(0.0, f64::max);
    Ok(BmoEstimate { value, eval_times: eval_times.to_vec(), buckets, per_control, warnings })
}

/// `exp(∫ Z dB − ½ ∫ Z² d⟨B⟩)` with left-point sums; `None` on overflow.
pub fn doleans_series(z: &[f64], b: &[f64], qv: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(b.len());
    let mut log = 0.0;
    out.push(1.0);
    for j in 0..b.len() - 1 {
        log += z[j] * (b[j + 1] - b[j]) - 0.5 * z[j] * z[j] * (qv[j + 1] - qv[j]);
        let v = log.exp();
        if !v.is_finite() {
            return None;
        }
        out.push(v);
    }
    Some(out)
}

pub fn doleans_exponential(z: &[f64], path: &ScenarioPath) -> Result<Vec<f64>> {
    if z.len() + 1 < path.times.len() {
        return Err(Error::Shape { expected: path.times.len(), actual: z.len() });
    }
    doleans_series(z, &path.b, &path.qv).ok_or_else(|| Error::Scenario {
        control: path.control.clone(),
        path: path.path_index,
        detail: "stochastic exponential overflowed".into(),
    })
}

/// `B̃ = B − ∫ Z d⟨B⟩`; the quadratic variation is carried over unchanged.
pub fn girsanov_shift(path: &ScenarioPath, z: &[f64]) -> Result<ScenarioPath> {
    let drift = crate::scenarios::qv_integral(z, path)?;
    let mut out = path.clone();
    for (b, d) in out.b.iter_mut().zip(drift) {
        *b -= d;
    }
    Ok(out)
}

/// `Z` supplied as a function of the path.
pub type ZFn = dyn Fn(&ScenarioPath) -> Vec<f64> + Sync;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoleansReport {
    pub per_control: Vec<ControlMean>,
    pub excluded: usize,
    pub upper_minus_one: f64,
    pub upper_one_minus: f64,
    pub max_std_err: f64,
    pub checks: Vec<Check>,
}

/// Per-control means of `E(Z)_T` and the two signed upper expectations of
/// `E(Z)_T − 1`. Each control is held to 3 standard errors; the two maxima
/// over the family use a Bonferroni level.
pub fn doleans_check(family: &ScenarioFamily, z: &ZFn) -> Result<DoleansReport> {
    let zq = bonferroni_z(family.members.len());
    let mut per_control = Vec::new();
    let mut excluded = 0;
    let mut checks = Vec::new();
    for (i, m) in family.members.iter().enumerate() {
        let vals = family.map_member(i, &|p: &ScenarioPath| {
            let zz = z(p);
            doleans_series(&zz, &p.b, &p.qv).map(|e| *e.last().unwrap())
        })?;
        excluded += vals.iter().filter(|v| v.is_none()).count();
        let vals: Vec<f64> = vals.into_iter().flatten().collect();
        let (mean, se) = mean_and_se(&vals);
        let label = m.control.label();
        checks.push(Check::near(format!("E(Z)_T mean under {label}"), mean, 1.0, 3.0 * se));
        per_control.push(ControlMean { control: label, paths: vals.len(), mean, std_err: se });
    }
    let max_se = per_control.iter().map(|c| c.std_err).fold(0.0, f64::max);
    let upper_minus_one = per_control.iter().map(|c| c.mean - 1.0).fold(f64::NEG_INFINITY, f64::max);
    let upper_one_minus = per_control.iter().map(|c| 1.0 - c.mean).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::near("upper expectation of E(Z)_T − 1", upper_minus_one, 0.0, zq * max_se));
    checks.push(Check::near("upper expectation of 1 − E(Z)_T", upper_one_minus, 0.0, zq * max_se));
    checks.push(Check::at_most("overflowed paths", excluded as f64, 0.0));
    Ok(DoleansReport { per_control, excluded, upper_minus_one, upper_one_minus, max_std_err: max_se, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovReport {
    pub qv_identical: bool,
    /// `Σ E(Z)_T B̃_T / Σ E(Z)_T` per control.
    pub weighted_means: Vec<ControlMean>,
    pub checks: Vec<Check>,
}

/// Ratio estimator with a delta-method standard error.
fn weighted_mean(w: &[f64], x: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let wx: Vec<f64> = w.iter().zip(x).map(|(a, b)| a * b).collect();
    let sw = pairwise_sum(w);
    let r = pairwise_sum(&wx) / sw;
    if w.len() < 2 {
        return (r, 0.0);
    }
    let e2: Vec<f64> = w.iter().zip(x).map(|(a, b)| (a * (b - r)).powi(2)).collect();
    let mw = sw / n;
    (r, (pairwise_sum(&e2) / (n * (n - 1.0))).sqrt() / mw)
}

/// Two-sided normal quantile that keeps the family-wise level of `m`
/// simultaneous tests at that of a single 3-SE test.
pub fn bonferroni_z(m: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let alpha = 2.0 * (1.0 - Normal::standard().cdf(3.0)) / m.max(1) as f64;
    Normal::standard().inverse_cdf(1.0 - 0.5 * alpha)
}

/// Shifts every path by `∫ Z d⟨B⟩`, checks that `⟨B⟩` is untouched and that
/// the `E(Z)`-weighted mean of the shifted `B_T` vanishes per control, at a
/// Bonferroni level over the controls.
pub fn girsanov_check(family: &ScenarioFamily, z: &ZFn) -> Result<GirsanovReport> {
    let zq = bonferroni_z(family.members.len());
    let mut qv_identical = true;
    let mut weighted_means = Vec::new();
    let mut checks = Vec::new();
    for (i, m) in family.members.iter().enumerate() {
        let vals = family.map_member(i, &|p: &ScenarioPath| -> Result<(bool, Option<(f64, f64)>)> {
            let zz = z(p);
            let shifted = girsanov_shift(p, &zz)?;
            let same = shifted.qv == p.qv && shifted.times == p.times;
            let e = doleans_series(&zz, &p.b, &p.qv).map(|e| (*e.last().unwrap(), shifted.terminal()));
            Ok((same, e))
        })?;
        let mut w = Vec::with_capacity(vals.len());
        let mut x = Vec::with_capacity(vals.len());
        for v in vals {
            let (same, e) = v?;
            qv_identical &= same;
            if let Some((a, b)) = e {
                w.push(a);
                x.push(b);
            }
        }
        let (mean, se) = weighted_mean(&w, &x);
        let label = m.control.label();
        checks.push(Check::near(format!("tilted mean of shifted B_T under {label}"), mean, 0.0, zq * se));
        weighted_means.push(ControlMean { control: label, paths: w.len(), mean, std_err: se });
    }
    checks.insert(0, Check::flag("quadratic variation of the shifted path is unchanged", qv_identical));
    Ok(GirsanovReport { qv_identical, weighted_means, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltReport {
    /// Per-control means of `E(Z)_T K_T`.
    pub tilted: UpperExpectation,
    pub max_terminal_k: f64,
    pub tolerance: f64,
    pub checks: Vec<Check>,
}

/// `sup_P E^P[E(Z)_T K_T]` over the family, with `Z` the cascade's own `Z`.
/// The supremum should vanish while every `K_T ≤ 0`.
pub fn decreasing_martingale_under_tilt(paths: &SolutionPaths, tol: f64) -> Result<TiltReport> {
    let mut values = vec![Vec::new(); paths.labels.len()];
    let mut max_kt = f64::NEG_INFINITY;
    for p in &paths.paths {
        let e = doleans_series(&p.z, &p.b, &p.qv).ok_or_else(|| Error::Scenario {
            control: p.control.clone(),
            path: p.path_index,
            detail: "stochastic exponential overflowed".into(),
        })?;
        let kt = *p.k.last().unwrap();
        max_kt = max_kt.max(kt);
        values[p.member].push(e.last().unwrap() * kt);
    }
    let (labels, values): (Vec<String>, Vec<Vec<f64>>) =
        paths.labels.iter().cloned().zip(values).filter(|(_, v)| !v.is_empty()).unzip();
    let tilted = crate::scenarios::upper_expectation_of_values(&labels, &values);
    let eps = 3.0 * tilted.std_err + tol;
    let quad = 2.0 * paths.quadrature_error();
    let checks = vec![
        Check::near("tilted upper expectation of K_T", tilted.estimate, 0.0, eps),
        Check::at_most("largest K_T", max_kt, quad),
    ];
    Ok(TiltReport { tilted, max_terminal_k: max_kt, tolerance: eps, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::VolatilityBand;

    fn family(paths: usize) -> ScenarioFamily {
        ScenarioFamily::standard(VolatilityBand::new(0.5, 1.0).unwrap(), 0.01, 1.0, paths, 11).unwrap()
    }

    #[test]
    fn bonferroni_level_reduces_to_three_for_one_test() {
        assert!((bonferroni_z(1) - 3.0).abs() < 1e-6);
        assert!(bonferroni_z(18) > 3.5 && bonferroni_z(18) < 4.0);
    }

    #[test]
    fn zero_z_gives_unit_exponential_and_no_shift() {
        let p = family(1).simulate_member(3).unwrap().remove(0);
        let z = vec![0.0; p.steps()];
        assert!(doleans_exponential(&z, &p).unwrap().iter().all(|&v| v == 1.0));
        assert_eq!(girsanov_shift(&p, &z).unwrap(), p);
    }

    #[test]
    fn constant_z_bmo_matches_closed_form() {
        let fam = family(40);
        let sims = fam.simulate_all().unwrap();
        let zc = 0.7;
        let z = vec![zc; fam.steps()];
        let series: Vec<ZPath> = sims
            .iter()
            .enumerate()
            .flat_map(|(m, ps)| ps.iter().map(move |p| (m, p)))
            .map(|(m, p)| ZPath { member: m, b: &p.b, qv: &p.qv, z: &z })
            .collect();
        let labels: Vec<String> = fam.members.iter().map(|m| m.control.label()).collect();
        let times = sims[0][0].times.clone();
        let est = bmo_norm(&series, &labels, &times, &[0.0, 0.5], 4).unwrap();
        assert!((est.value - zc * zc).abs() < 1e-12);
        assert_eq!(est.per_control[1].at_time, 0.0);
        let zero = vec![0.0; fam.steps()];
        let series0: Vec<ZPath> = series.iter().map(|s| ZPath { z: &zero, ..*s }).collect();
        assert_eq!(bmo_norm(&series0, &labels, &times, &[0.0], 4).unwrap().value, 0.0);
    }

    #[test]
    fn off_grid_evaluation_time_is_rejected() {
        let fam = family(2);
        let p = fam.simulate_member(0).unwrap();
        let z = vec![1.0; fam.steps()];
        let s = [ZPath { member: 0, b: &p[0].b, qv: &p[0].qv, z: &z }];
        assert!(bmo_norm(&s, &["a".into()], &p[0].times, &[0.005], 2).is_err());
    }

    #[test]
    fn weighted_mean_with_equal_weights_is_plain_mean() {
        let (m, se) = weighted_mean(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]);
        let (m2, se2) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - m2).abs() < 1e-14 && (se - se2).abs() < 1e-14);
    }
}
