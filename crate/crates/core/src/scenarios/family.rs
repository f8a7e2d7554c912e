use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{empty_path, grid_steps, simulate_into, ScenarioPath, VolatilityControl};
use crate::error::{Error, Result};
use crate::gcore::VolatilityBand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMember {
    pub control: VolatilityControl,
    pub paths: usize,
    pub seed: u64,
}

/// A finite set of volatility controls standing in for the measures of the
/// representation `Ê = sup_P E^P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFamily {
    pub band: VolatilityBand<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub members: Vec<FamilyMember>,
}

/// splitmix64 finalizer; spreads a base seed over family members.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ScenarioFamily {
    /// Constant `σ̲` and `σ̄`, eight bang-bang controls switching at `T/2`,
    /// `T/4`, `3T/4`, `T/8` in both directions, and eight piecewise-random ones.
    pub fn standard(band: VolatilityBand<f64>, dt: f64, horizon: f64, paths: usize, seed: u64) -> Result<Self> {
        let (lo, hi) = (band.sigma_lo(), band.sigma_hi());
        let mut controls = vec![VolatilityControl::Constant { sigma: lo }, VolatilityControl::Constant { sigma: hi }];
        for frac in [0.5, 0.25, 0.75, 0.125] {
            let s = frac * horizon;
            controls.push(VolatilityControl::BangBang { levels: vec![lo, hi], switch_times: vec![s] });
            controls.push(VolatilityControl::BangBang { levels: vec![hi, lo], switch_times: vec![s] });
        }
        for k in 0..8 {
            controls.push(VolatilityControl::PiecewiseRandom { seed: derive_seed(seed ^ 0xC0_47_01, k), hold: 1 });
        }
        Self::from_controls(band, dt, horizon, controls, paths, seed)
    }

    /// Only the two constant extremes.
    pub fn extremes(band: VolatilityBand<f64>, dt: f64, horizon: f64, paths: usize, seed: u64) -> Result<Self> {
        let controls = vec![
            VolatilityControl::Constant { sigma: band.sigma_lo() },
            VolatilityControl::Constant { sigma: band.sigma_hi() },
        ];
        Self::from_controls(band, dt, horizon, controls, paths, seed)
    }

    pub fn from_controls(
        band: VolatilityBand<f64>,
        dt: f64,
        horizon: f64,
        controls: Vec<VolatilityControl>,
        paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let members = controls
            .into_iter()
            .enumerate()
            .map(|(i, control)| FamilyMember { control, paths, seed: derive_seed(seed, i as u64) })
            .collect();
        let fam = Self { band, dt, horizon, members };
        fam.validate()?;
        Ok(fam)
    }

    /// Checks grid divisibility, control ranges, and that both constant
    /// extremes are present.
    pub fn validate(&self) -> Result<()> {
        let steps = grid_steps(self.dt, self.horizon)?;
        for m in &self.members {
            m.control.values(&self.band, steps, self.dt)?;
            if m.paths == 0 {
                return Err(Error::config(format!("control {} has no paths", m.control.label())));
            }
        }
        let has = |s: f64| {
            self.members.iter().any(|m| matches!(m.control, VolatilityControl::Constant { sigma } if sigma == s))
        };
        if !has(self.band.sigma_lo()) || !has(self.band.sigma_hi()) {
            return Err(Error::config("a scenario family must contain the constant controls σ̲ and σ̄"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        grid_steps(self.dt, self.horizon).unwrap_or(0)
    }

    pub fn with_paths(&self, paths: usize) -> Self {
        let mut out = self.clone();
        out.members.iter_mut().for_each(|m| m.paths = paths);
        out
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let out = Self { dt, ..self.clone() };
        out.validate()?;
        Ok(out)
    }

    /// All paths of member `i`, in path-index order.
    pub fn simulate_member(&self, i: usize) -> Result<Vec<ScenarioPath>> {
        let m = &self.members[i];
        let sigma = m.control.values(&self.band, self.steps(), self.dt)?;
        let template = empty_path(m.control.label(), sigma, self.dt, self.horizon);
        Ok((0..m.paths as u64)
            .into_par_iter()
            .map(|k| {
                let mut p = template.clone();
                let s = std::mem::take(&mut p.sigma);
                simulate_into(&mut p, &s, m.seed, k);
                p.sigma = s;
                p
            })
            .collect())
    }

    pub fn simulate_all(&self) -> Result<Vec<Vec<ScenarioPath>>> {
        (0..self.members.len()).map(|i| self.simulate_member(i)).collect()
    }

    /// Applies `functional` to every path of member `i` without keeping them.
    pub fn map_member<R: Send>(
        &self,
        i: usize,
        functional: &(dyn Fn(&ScenarioPath) -> R + Sync),
    ) -> Result<Vec<R>> {
        let m = &self.members[i];
        let sigma = m.control.values(&self.band, self.steps(), self.dt)?;
        let template = empty_path(m.control.label(), sigma.clone(), self.dt, self.horizon);
        const CHUNK: u64 = 256;
        let n = m.paths as u64;
        let chunks: Vec<Vec<R>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut p = template.clone();
                (c * CHUNK..((c + 1) * CHUNK).min(n))
                    .map(|k| {
                        simulate_into(&mut p, &sigma, m.seed, k);
                        functional(&p)
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Sum in a fixed binary-tree order, independent of thread scheduling.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Sample mean and its standard error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlMean {
    pub control: String,
    pub paths: usize,
    pub mean: f64,
    pub std_err: f64,
}

/// `max` over the family of per-control Monte-Carlo means.
///
/// A finite family only sees some of the measures, so the estimate is a lower
/// bound of `Ê[ξ]` up to Monte-Carlo error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperExpectation {
    pub estimate: f64,
    pub std_err: f64,
    pub argmax: usize,
    pub per_control: Vec<ControlMean>,
}

impl UpperExpectation {
    pub fn argmax_control(&self) -> &str {
        &self.per_control[self.argmax].control
    }

    fn from_means(per_control: Vec<ControlMean>) -> Self {
        let argmax = per_control
            .iter()
            .enumerate()
            .fold(0, |best, (i, c)| if c.mean > per_control[best].mean { i } else { best });
        Self { estimate: per_control[argmax].mean, std_err: per_control[argmax].std_err, argmax, per_control }
    }

    /// Largest standard error over the family.
    pub fn max_std_err(&self) -> f64 {
        self.per_control.iter().map(|c| c.std_err).fold(0.0, f64::max)
    }
}

pub fn upper_expectation(
    functional: &(dyn Fn(&ScenarioPath) -> f64 + Sync),
    family: &ScenarioFamily,
) -> Result<UpperExpectation> {
    family.validate()?;
    let mut per_control = Vec::with_capacity(family.members.len());
    for (i, m) in family.members.iter().enumerate() {
        let values = family.map_member(i, functional)?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Scenario {
                control: m.control.label(),
                path: k as u64,
                detail: format!("functional returned {}", values[k]),
            });
        }
        let (mean, std_err) = mean_and_se(&values);
        per_control.push(ControlMean { control: m.control.label(), paths: values.len(), mean, std_err });
    }
    Ok(UpperExpectation::from_means(per_control))
}

/// Same reduction for values already computed per member and path.
pub fn upper_expectation_of_values(labels: &[String], values: &[Vec<f64>]) -> UpperExpectation {
    let per_control = labels
        .iter()
        .zip(values)
        .map(|(l, v)| {
            let (mean, std_err) = mean_and_se(v);
            ControlMean { control: l.clone(), paths: v.len(), mean, std_err }
        })
        .collect();
    UpperExpectation::from_means(per_control)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> VolatilityBand<f64> {
        VolatilityBand::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn standard_family_shape() {
        let f = ScenarioFamily::standard(band(), 0.01, 1.0, 10, 7).unwrap();
        assert_eq!(f.members.len(), 18);
        let mut bad = f.clone();
        bad.members.remove(1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert!((pairwise_sum(&x) - x.iter().sum::<f64>()).abs() < 1e-10);
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_member_matches_simulate_member() {
        let f = ScenarioFamily::standard(band(), 0.05, 1.0, 300, 1).unwrap();
        let direct: Vec<f64> = f.simulate_member(5).unwrap().iter().map(|p| p.terminal()).collect();
        let streamed = f.map_member(5, &|p: &ScenarioPath| p.terminal()).unwrap();
        assert_eq!(direct, streamed);
    }

    #[test]
    fn failures_name_the_control() {
        let f = ScenarioFamily::extremes(band(), 0.1, 1.0, 5, 1).unwrap();
        let err = upper_expectation(&|p: &ScenarioPath| if p.path_index == 3 { f64::NAN } else { 0.0 }, &f).unwrap_err();
        match err {
            Error::Scenario { path, control, .. } => {
                assert_eq!(path, 3);
                assert!(control.starts_with("constant"));
            }
            other => panic!("{other}"),
        }
    }
}
