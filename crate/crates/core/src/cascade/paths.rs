use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::solve::CascadeSolution;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scenarios::{mean_and_se, upper_expectation_of_values, ScenarioFamily, ScenarioPath, UpperExpectation};

/// `(Y, Z, K)` read off the cascade along one scenario path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathTriple {
    pub member: usize,
    pub control: String,
    pub path_index: u64,
    pub b: Vec<f64>,
    pub qv: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub k: Vec<f64>,
    /// Generator value along the path, as used by the scheme.
    pub f: Vec<f64>,
    /// `Σ |trapezoid − left point|` plus a rounding allowance over the `K` steps.
    pub quadrature_error: f64,
}

/// A path that left the tabulated region of some interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub control: String,
    pub path_index: u64,
    pub t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPaths {
    pub times: Vec<f64>,
    pub dt: f64,
    pub labels: Vec<String>,
    pub y0: f64,
    pub m_y: f64,
    pub m_z: f64,
    pub paths: Vec<PathTriple>,
    pub rejected: Vec<Rejection>,
}

/// Deterministic digest of a [`SolutionPaths`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathsSummary {
    pub y0: f64,
    pub dt: f64,
    pub paths: usize,
    pub rejected: usize,
    pub m_y: f64,
    pub m_z: f64,
    pub max_abs_y: f64,
    pub max_abs_z: f64,
    /// Largest single-step increase of `K` (zero when `K` is nonincreasing).
    pub max_k_increase: f64,
    pub quadrature_error: f64,
    pub k_terminal: UpperExpectation,
}

impl SolutionPaths {
    pub fn max_abs_y(&self) -> f64 {
        self.paths.iter().flat_map(|p| p.y.iter()).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_z(&self) -> f64 {
        self.paths.iter().flat_map(|p| p.z.iter()).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_k_increase(&self) -> f64 {
        self.paths
            .iter()
            .flat_map(|p| p.k.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    pub fn quadrature_error(&self) -> f64 {
        self.paths.iter().map(|p| p.quadrature_error).fold(0.0, f64::max)
    }

    /// `K_T` per path, grouped by family member.
    pub fn k_terminal_by_member(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for p in &self.paths {
            out[p.member].push(*p.k.last().expect("non-empty path"));
        }
        out
    }

    /// Per-control means of `K_T` and their maximum.
    pub fn k_terminal(&self) -> UpperExpectation {
        let (labels, values): (Vec<String>, Vec<Vec<f64>>) = self
            .labels
            .iter()
            .cloned()
            .zip(self.k_terminal_by_member())
            .filter(|(_, v)| !v.is_empty())
            .unzip();
        upper_expectation_of_values(&labels, &values)
    }

    pub fn summary(&self) -> PathsSummary {
        PathsSummary {
            y0: self.y0,
            dt: self.dt,
            paths: self.paths.len(),
            rejected: self.rejected.len(),
            m_y: self.m_y,
            m_z: self.m_z,
            max_abs_y: self.max_abs_y(),
            max_abs_z: self.max_abs_z(),
            max_k_increase: self.max_k_increase(),
            quadrature_error: self.quadrature_error(),
            k_terminal: self.k_terminal(),
        }
    }

    /// Long-format CSV with columns `scenario,t,B,qv,Y,Z,K`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "scenario,t,B,qv,Y,Z,K")?;
        for p in &self.paths {
            let name = format!("{}#{}", p.control, p.path_index).replace(',', ";");
            for j in 0..self.times.len() {
                writeln!(w, "{name},{},{},{},{},{},{}", self.times[j], p.b[j], p.qv[j], p.y[j], p.z[j], p.k[j])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct PointValue {
    u: f64,
    du: f64,
    d2u: f64,
    f: f64,
}

struct Walker<'a, T> {
    cas: &'a CascadeSolution<T>,
    path: &'a ScenarioPath,
    knots: &'a [usize],
}

impl<T: Real> Walker<'_, T> {
    /// Values of interval `k` at grid index `j`, with `x_k` read as the live increment.
    fn point(&self, k: usize, j: usize) -> Result<PointValue> {
        let n = self.cas.intervals.len();
        let b = &self.path.b;
        let mut x = vec![T::zero(); n];
        for i in 1..k {
            x[i - 1] = T::lit(b[self.knots[i]] - b[self.knots[i - 1]]);
        }
        x[k - 1] = T::lit(b[j] - b[self.knots[k - 1]]);
        let t = T::lit(self.path.times[j]);
        let s = self.cas.interval(k).sample(t, &x[..k - 1], x[k - 1])?;
        let z = match self.cas.z_bound {
            Some(m) => s.du.clamp_to(-m, m),
            None => s.du,
        };
        let f = self.cas.generator.eval(t, &x, s.u, z);
        if !f.is_finite() {
            return Err(Error::Generator {
                id: self.cas.generator.id.clone(),
                t: t.as_f64(),
                x: x.iter().map(|v| v.as_f64()).collect(),
                y: s.u.as_f64(),
                z: z.as_f64(),
            });
        }
        Ok(PointValue { u: s.u.as_f64(), du: s.du.as_f64(), d2u: s.d2u.as_f64(), f: f.as_f64() })
    }
}

/// Grid indices of the partition knots; the scenario grid must contain them.
fn knot_indices<T: Real>(cas: &CascadeSolution<T>, path: &ScenarioPath) -> Result<Vec<usize>> {
    if (path.horizon() - cas.partition.horizon().as_f64()).abs() > 1e-9 {
        return Err(Error::config(format!(
            "scenario horizon {} differs from the partition horizon {}",
            path.horizon(),
            cas.partition.horizon()
        )));
    }
    cas.partition
        .times()
        .iter()
        .map(|t| {
            path.index_of(t.as_f64())
                .map_err(|_| Error::config(format!("the scenario grid (dt = {}) does not contain the knot {t}", path.dt)))
        })
        .collect()
}

/// Generator arguments `(x_1, …, x_{k−1}, B_t − B_{t_{k−1}}, 0, …, 0)` at every
/// grid time, with `k` the left-closed interval containing the time.
pub fn generator_arguments<T: Real>(cas: &CascadeSolution<T>, times: &[f64], b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = cas.intervals.len();
    let dt = times.get(1).map_or(1.0, |t| t - times[0]);
    let knots: Vec<usize> = cas
        .partition
        .times()
        .iter()
        .map(|t| {
            let j = (t.as_f64() / dt).round() as usize;
            if j < times.len() && (times[j] - t.as_f64()).abs() <= 1e-9 * dt.max(1.0) {
                Ok(j)
            } else {
                Err(Error::config(format!("the scenario grid (dt = {dt}) does not contain the knot {t}")))
            }
        })
        .collect::<Result<_>>()?;
    let mut kk = 1;
    Ok((0..times.len())
        .map(|j| {
            while kk < n && j >= knots[kk] {
                kk += 1;
            }
            let mut x = vec![0.0; n];
            for i in 1..kk {
                x[i - 1] = b[knots[i]] - b[knots[i - 1]];
            }
            x[kk - 1] = b[j] - b[knots[kk - 1]];
            x
        })
        .collect())
}

/// Evaluates `(Y, Z, K)` along one path.
///
/// `Y_t = u^k(t, B^k_t)` on `[t_{k−1}, t_k)`, `Z_t = D_x u^k`, and `K` is the
/// trapezoid sum of `½ Γ d⟨B⟩ − G(Γ) dt` with `Γ = D²u + 2f`, both endpoints
/// of a step read from the interval that contains the step. A path leaving a
/// spatial grid returns a range error naming the time.
pub fn path_triple<T: Real>(cas: &CascadeSolution<T>, member: usize, path: &ScenarioPath) -> Result<PathTriple> {
    let knots = knot_indices(cas, path)?;
    let walker = Walker { cas, path, knots: &knots };
    let n = cas.intervals.len();
    let len = path.times.len();
    let band = cas.band.cast::<f64>();
    let (mut y, mut z, mut fv) = (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
    let mut k = Vec::with_capacity(len);
    k.push(0.0);
    let mut quad = 0.0;
    let at = |kk: usize, j: usize| {
        walker.point(kk, j).map_err(|e| match e {
            Error::Range(m) => Error::range(format!("t = {}: {m}", path.times[j])),
            other => other,
        })
    };
    let mut kk = 1;
    for j in 0..len {
        while kk < n && j >= knots[kk] {
            kk += 1;
        }
        let here = at(kk, j)?;
        y.push(here.u);
        z.push(here.du);
        fv.push(here.f);
        if j + 1 == len {
            break;
        }
        let next = at(kk, j + 1)?;
        let ga = here.d2u + 2.0 * here.f;
        let gb = next.d2u + 2.0 * next.f;
        let dq = path.qv[j + 1] - path.qv[j];
        let dt = path.times[j + 1] - path.times[j];
        let trap = 0.25 * (ga + gb) * dq - 0.5 * (band.g(ga) + band.g(gb)) * dt;
        let left = 0.5 * ga * dq - band.g(ga) * dt;
        let roundoff = 4.0 * f64::EPSILON * (0.5 * (ga.abs() + gb.abs()) * dq + (band.g(ga).abs() + band.g(gb).abs()) * dt);
        quad += (trap - left).abs() + roundoff;
        k.push(k[j] + trap);
    }
    Ok(PathTriple {
        member,
        control: path.control.clone(),
        path_index: path.path_index,
        b: path.b.clone(),
        qv: path.qv.clone(),
        y,
        z,
        k,
        f: fv,
        quadrature_error: quad,
    })
}

/// Triples for already simulated paths of several members; paths leaving the
/// grid are collected as rejections.
pub fn triples_for_paths<T: Real>(cas: &CascadeSolution<T>, members: &[(String, Vec<ScenarioPath>)]) -> Result<SolutionPaths> {
    let first = members
        .iter()
        .find_map(|(_, p)| p.first())
        .ok_or_else(|| Error::config("no scenario paths were supplied"))?;
    knot_indices(cas, first)?;
    let times = first.times.clone();
    let dt = first.dt;
    let mut paths = Vec::new();
    let mut rejected = Vec::new();
    for (i, (_, ps)) in members.iter().enumerate() {
        if ps.iter().any(|p| p.times.len() != times.len()) {
            return Err(Error::Shape { expected: times.len(), actual: ps[0].times.len() });
        }
        let out: Vec<Result<PathTriple>> = ps.par_iter().map(|p| path_triple(cas, i, p)).collect();
        for (p, r) in ps.iter().zip(out) {
            match r {
                Ok(t) => paths.push(t),
                Err(Error::Range(detail)) => {
                    let t = detail
                        .strip_prefix("t = ")
                        .and_then(|s| s.split(':').next())
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(f64::NAN);
                    rejected.push(Rejection { control: p.control.clone(), path_index: p.path_index, t, detail })
                }
                Err(e) => {
                    return Err(Error::Scenario { control: p.control.clone(), path: p.path_index, detail: e.to_string() })
                }
            }
        }
    }
    if !rejected.is_empty() {
        log::warn!("{} scenario paths left the spatial grid and were rejected", rejected.len());
    }
    if paths.is_empty() {
        return Err(Error::range(format!("all {} scenario paths left the spatial grid", rejected.len())));
    }
    Ok(SolutionPaths {
        times,
        dt,
        labels: members.iter().map(|(l, _)| l.clone()).collect(),
        y0: cas.y0().as_f64(),
        m_y: cas.m_y,
        m_z: cas.ledger.m_z.as_f64(),
        paths,
        rejected,
    })
}

/// Simulates `family` and reads `(Y, Z, K)` along every path.
pub fn build_solution_paths<T: Real>(cas: &CascadeSolution<T>, family: &ScenarioFamily) -> Result<SolutionPaths> {
    family.validate()?;
    let members = simulate_family(family)?;
    triples_for_paths(cas, &members)
}

fn simulate_family(family: &ScenarioFamily) -> Result<Vec<(String, Vec<ScenarioPath>)>> {
    (0..family.members.len())
        .map(|i| Ok((family.members[i].control.label(), family.simulate_member(i)?)))
        .collect()
}

/// Residual of the backward equation along each path, with left-point sums:
/// `R_t = Y_t − Y_T − ∫_t^T f d⟨B⟩ + ∫_t^T Z dB + K_T − K_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub dt: f64,
    pub paths: usize,
    pub max: f64,
    pub mean_path_max: f64,
    pub std_err_path_max: f64,
}

pub fn path_residual(p: &PathTriple) -> Vec<f64> {
    let n = p.y.len();
    let mut r = vec![0.0; n];
    let mut tail = 0.0;
    for j in (0..n - 1).rev() {
        tail += p.f[j] * (p.qv[j + 1] - p.qv[j]) - p.z[j] * (p.b[j + 1] - p.b[j]);
        r[j] = p.y[j] - p.y[n - 1] - tail + p.k[n - 1] - p.k[j];
    }
    r
}

pub fn residual_check(paths: &SolutionPaths) -> ResidualReport {
    let per: Vec<f64> = paths
        .paths
        .iter()
        .map(|p| path_residual(p).iter().fold(0.0, |a: f64, v| a.max(v.abs())))
        .collect();
    let (mean, se) = mean_and_se(&per);
    ResidualReport {
        dt: paths.dt,
        paths: per.len(),
        max: per.iter().copied().fold(0.0, f64::max),
        mean_path_max: mean,
        std_err_path_max: se,
    }
}

/// Residuals on `levels` nested grids built from the same paths: the family's
/// `dt` is the finest grid and each coarser one keeps every other point.
/// Reports are ordered from coarse to fine.
pub fn residual_refinement<T: Real>(
    cas: &CascadeSolution<T>,
    family: &ScenarioFamily,
    levels: usize,
) -> Result<Vec<ResidualReport>> {
    family.validate()?;
    if levels == 0 {
        return Err(Error::config("a refinement study needs at least one level"));
    }
    let fine = simulate_family(family)?;
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let factor = 1usize << (levels - 1 - l);
        let members = fine
            .iter()
            .map(|(label, ps)| Ok((label.clone(), ps.iter().map(|p| p.coarsened(factor)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(residual_check(&triples_for_paths(cas, &members)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{solve_cascade, CascadeConfig};
    use crate::gcore::presets::{generator_preset, terminal_preset, PresetRef};
    use crate::gcore::{TimePartition, VolatilityBand};

    fn setup(c: f64) -> (CascadeSolution<f64>, ScenarioFamily) {
        let band = VolatilityBand::new(0.5, 1.0).unwrap();
        let p = TimePartition::uniform(1.0, 2).unwrap();
        let f = generator_preset(&PresetRef::new("constant-driver").with("c", c), 2).unwrap();
        let phi = terminal_preset(&PresetRef::new("zero"), 2).unwrap();
        let mut cfg = CascadeConfig::default();
        cfg.grid.space_nodes = 61;
        cfg.grid.param_nodes = 11;
        let cas = solve_cascade(&f, &phi, &p, &band, &cfg).unwrap();
        let fam = ScenarioFamily::standard(band, 0.01, 1.0, 8, 3).unwrap();
        (cas, fam)
    }

    #[test]
    fn constant_driver_k_matches_closed_form() {
        let c = 0.3;
        let (cas, fam) = setup(c);
        let sp = build_solution_paths(&cas, &fam).unwrap();
        assert!(sp.rejected.is_empty());
        assert!(sp.max_k_increase() <= 2.0 * sp.quadrature_error());
        let kt = sp.k_terminal();
        assert_eq!(kt.argmax_control(), "constant(1)");
        assert!(kt.estimate.abs() < 1e-10);
        assert!((kt.per_control[0].mean - c * (0.25 - 1.0)).abs() < 1e-10);
        for p in &sp.paths {
            for (t, y) in sp.times.iter().zip(&p.y) {
                assert!((y - c * (1.0 - t)).abs() < 1e-10);
            }
        }
        assert!(residual_check(&sp).max < 1e-10);
    }

    #[test]
    fn knots_must_lie_on_the_scenario_grid() {
        let (cas, fam) = setup(0.1);
        let fam = fam.with_dt(0.2).unwrap();
        assert!(matches!(build_solution_paths(&cas, &fam), Err(Error::Configuration(_))));
    }

    #[test]
    fn csv_has_one_row_per_grid_time() {
        let (cas, fam) = setup(0.1);
        let fam = fam.with_paths(1).with_dt(0.1).unwrap();
        let sp = build_solution_paths(&cas, &fam).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.csv");
        sp.write_csv(&file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        assert_eq!(text.lines().count(), 1 + 18 * 11);
        assert!(text.starts_with("scenario,t,B,qv,Y,Z,K\n"));
    }
}
