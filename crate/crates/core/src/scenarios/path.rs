use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcore::VolatilityBand;

/// Volatility process `h` used to realize one measure `P_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VolatilityControl {
    Constant { sigma: f64 },
    /// `levels[j]` is used on `[switch_times[j−1], switch_times[j])`.
    BangBang { levels: Vec<f64>, switch_times: Vec<f64> },
    /// Uniform draws in the band, redrawn every `hold` steps; the draws
    /// depend only on `seed`, so every path of the control shares them.
    PiecewiseRandom {
        seed: u64,
        #[serde(default = "one")]
        hold: usize,
    },
}

fn one() -> usize {
    1
}

impl VolatilityControl {
    pub fn label(&self) -> String {
        match self {
            VolatilityControl::Constant { sigma } => format!("constant({sigma})"),
            VolatilityControl::BangBang { levels, switch_times } => {
                let mut s = format!("bang-bang({}", levels[0]);
                for (t, l) in switch_times.iter().zip(&levels[1..]) {
                    s += &format!(" |{t}| {l}");
                }
                s + ")"
            }
            VolatilityControl::PiecewiseRandom { seed, hold } => format!("piecewise-random(seed={seed},hold={hold})"),
        }
    }

    /// `h` on each of the `steps` grid intervals.
    pub fn values(&self, band: &VolatilityBand<f64>, steps: usize, dt: f64) -> Result<Vec<f64>> {
        let out = match self {
            VolatilityControl::Constant { sigma } => vec![*sigma; steps],
            VolatilityControl::BangBang { levels, switch_times } => {
                if levels.len() != switch_times.len() + 1 {
                    return Err(Error::config("bang-bang control needs exactly one more level than switch times"));
                }
                if switch_times.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::config("bang-bang switch times must be nondecreasing"));
                }
                (0..steps)
                    .map(|j| {
                        let t = j as f64 * dt;
                        // a switch applies from the first step starting at or after it
                        let idx = switch_times.partition_point(|&s| s <= t + 1e-9 * dt);
                        levels[idx]
                    })
                    .collect()
            }
            VolatilityControl::PiecewiseRandom { seed, hold } => {
                if *hold == 0 {
                    return Err(Error::config("piecewise-random control needs hold >= 1"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (lo, hi) = (band.sigma_lo(), band.sigma_hi());
                let mut v = Vec::with_capacity(steps);
                let mut cur = lo;
                for j in 0..steps {
                    if j % hold == 0 {
                        cur = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                    }
                    v.push(cur);
                }
                v
            }
        };
        if let Some(s) = out.iter().find(|&&s| !band.contains(s)) {
            return Err(Error::domain(format!(
                "control {} takes the value {s} outside [{}, {}]",
                self.label(),
                band.sigma_lo(),
                band.sigma_hi()
            )));
        }
        Ok(out)
    }
}

/// One simulated path on the uniform grid `t_j = j dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioPath {
    pub control: String,
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub b: Vec<f64>,
    pub qv: Vec<f64>,
    /// `h` on `[t_j, t_{j+1})`.
    pub sigma: Vec<f64>,
}

impl ScenarioPath {
    pub fn steps(&self) -> usize {
        self.sigma.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    pub fn terminal(&self) -> f64 {
        *self.b.last().expect("non-empty grid")
    }

    /// Grid index of `t`, which must be a grid time up to rounding.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let j = (t / self.dt).round();
        if j < 0.0 || j as usize >= self.times.len() || (j * self.dt - t).abs() > 1e-9 * self.dt.max(1.0) {
            return Err(Error::range(format!("time {t} is not on the scenario grid (dt = {})", self.dt)));
        }
        Ok(j as usize)
    }

    /// Every `factor`-th grid point of this path. A coarse step carries the
    /// effective volatility `√(Δ⟨B⟩ / Δt)`.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        let n = self.steps();
        if factor == 0 || n % factor != 0 {
            return Err(Error::config(format!("cannot coarsen {n} steps by a factor {factor}")));
        }
        let pick = |v: &[f64]| -> Vec<f64> { v.iter().step_by(factor).copied().collect() };
        let dt = self.dt * factor as f64;
        let qv = pick(&self.qv);
        let sigma = qv.windows(2).map(|w| ((w[1] - w[0]) / dt).sqrt()).collect();
        Ok(Self {
            control: self.control.clone(),
            seed: self.seed,
            path_index: self.path_index,
            dt,
            times: pick(&self.times),
            b: pick(&self.b),
            qv,
            sigma,
        })
    }
}

/// Number of steps of size `dt` in `[0, horizon]`; `dt` must divide `horizon`.
pub fn grid_steps(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::config(format!("dt = {dt} and horizon = {horizon} must be positive")));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::config(format!("dt = {dt} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Stream for path `path_index` of a control seeded with `seed`.
pub(crate) fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Fills `path` in place from precomputed control values.
pub(crate) fn simulate_into(path: &mut ScenarioPath, sigma: &[f64], seed: u64, path_index: u64) {
    let mut rng = path_rng(seed, path_index);
    let sq = path.dt.sqrt();
    path.seed = seed;
    path.path_index = path_index;
    let (mut b, mut q) = (0.0, 0.0);
    path.b[0] = 0.0;
    path.qv[0] = 0.0;
    for (j, &h) in sigma.iter().enumerate() {
        let xi: f64 = rng.sample(StandardNormal);
        b += h * sq * xi;
        q += h * h * path.dt;
        path.b[j + 1] = b;
        path.qv[j + 1] = q;
    }
}

pub(crate) fn empty_path(control: String, sigma: Vec<f64>, dt: f64, horizon: f64) -> ScenarioPath {
    let n = sigma.len();
    let times = (0..=n).map(|j| if j == n { horizon } else { j as f64 * dt }).collect();
    ScenarioPath { control, seed: 0, path_index: 0, dt, times, b: vec![0.0; n + 1], qv: vec![0.0; n + 1], sigma }
}

/// `B_{t_{j+1}} − B_{t_j} = h_j √dt ξ_j`, `⟨B⟩_{t_{j+1}} − ⟨B⟩_{t_j} = h_j² dt`.
pub fn simulate_scenario(
    control: &VolatilityControl,
    band: &VolatilityBand<f64>,
    seed: u64,
    path_index: u64,
    dt: f64,
    horizon: f64,
) -> Result<ScenarioPath> {
    let steps = grid_steps(dt, horizon)?;
    let sigma = control.values(band, steps, dt)?;
    let mut path = empty_path(control.label(), sigma, dt, horizon);
    let sigma = std::mem::take(&mut path.sigma);
    simulate_into(&mut path, &sigma, seed, path_index);
    path.sigma = sigma;
    Ok(path)
}

fn check_len(eta: &[f64], path: &ScenarioPath) -> Result<()> {
    let n = path.times.len();
    if eta.len() != n && eta.len() != n - 1 {
        return Err(Error::Shape { expected: n, actual: eta.len() });
    }
    Ok(())
}

/// Cumulative `Σ_{j<i} η_{t_j} (X_{t_{j+1}} − X_{t_j})`; `η` is read at left endpoints.
fn left_sums(eta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..x.len() - 1 {
        acc += eta[j] * (x[j + 1] - x[j]);
        out.push(acc);
    }
    out
}

/// `∫_0^{t_i} η dB` for every grid time.
pub fn ito_integral(eta: &[f64], path: &ScenarioPath) -> Result<Vec<f64>> {
    check_len(eta, path)?;
    Ok(left_sums(eta, &path.b))
}

/// `∫_0^{t_i} η d⟨B⟩` for every grid time.
pub fn qv_integral(eta: &[f64], path: &ScenarioPath) -> Result<Vec<f64>> {
    check_len(eta, path)?;
    Ok(left_sums(eta, &path.qv))
}
