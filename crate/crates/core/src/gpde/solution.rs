use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{ParamGrid, SpaceGrid};
use crate::error::{Error, Result};
use crate::real::Real;

/// `u`, `D_x u`, `D²_x u` on one interval, for every frozen-parameter point.
///
/// Arrays are flattened as `[param][level][node]`. Only a subset of the time
/// steps is kept; `times` lists the stored levels in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution<T> {
    pub interval: (T, T),
    pub times: Vec<T>,
    pub grid: SpaceGrid<T>,
    pub params: ParamGrid<T>,
    /// Number of explicit steps actually taken and their length.
    pub steps: usize,
    pub dt: T,
    pub u: Vec<T>,
    pub du: Vec<T>,
    pub d2u: Vec<T>,
}

/// Interpolated values at an off-grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub u: T,
    pub du: T,
    pub d2u: T,
}

/// Central differences inside, one-sided second-order stencils at the ends.
pub fn extract_derivatives<T: Real>(u: &[T], dx: T, du: &mut [T], d2u: &mut [T]) {
    let m = u.len();
    let two = T::two();
    let h2 = dx * dx;
    for i in 1..m - 1 {
        du[i] = (u[i + 1] - u[i - 1]) / (two * dx);
        d2u[i] = (u[i + 1] - two * u[i] + u[i - 1]) / h2;
    }
    let (three, four, five) = (T::lit(3.0), T::lit(4.0), T::lit(5.0));
    du[0] = (-three * u[0] + four * u[1] - u[2]) / (two * dx);
    du[m - 1] = (three * u[m - 1] - four * u[m - 2] + u[m - 3]) / (two * dx);
    if m >= 4 {
        d2u[0] = (two * u[0] - five * u[1] + four * u[2] - u[3]) / h2;
        d2u[m - 1] = (two * u[m - 1] - five * u[m - 2] + four * u[m - 3] - u[m - 4]) / h2;
    } else {
        d2u[0] = d2u[1];
        d2u[m - 1] = d2u[m - 2];
    }
}

impl<T: Real> GridSolution<T> {
    pub fn levels(&self) -> usize {
        self.times.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    #[inline]
    fn offset(&self, p: usize, level: usize) -> usize {
        (p * self.times.len() + level) * self.grid.len()
    }

    pub fn u_level(&self, p: usize, level: usize) -> &[T] {
        let o = self.offset(p, level);
        &self.u[o..o + self.grid.len()]
    }

    pub fn du_level(&self, p: usize, level: usize) -> &[T] {
        let o = self.offset(p, level);
        &self.du[o..o + self.grid.len()]
    }

    pub fn d2u_level(&self, p: usize, level: usize) -> &[T] {
        let o = self.offset(p, level);
        &self.d2u[o..o + self.grid.len()]
    }

    /// Recomputes `du`, `d2u` from `u` (what the solver stores).
    pub fn extract_derivatives(&self) -> (Vec<T>, Vec<T>) {
        let m = self.grid.len();
        let mut du = vec![T::zero(); self.u.len()];
        let mut d2u = vec![T::zero(); self.u.len()];
        for ((u, a), b) in self.u.chunks_exact(m).zip(du.chunks_exact_mut(m)).zip(d2u.chunks_exact_mut(m)) {
            extract_derivatives(u, self.grid.dx(), a, b);
        }
        (du, d2u)
    }

    fn time_bracket(&self, t: T) -> Result<(usize, T)> {
        let (ta, tb) = self.interval;
        let tol = (tb - ta) * T::lit(1e-9);
        if t < ta - tol || t > tb + tol {
            return Err(Error::range(format!("time {t} outside interval [{ta}, {tb}]")));
        }
        let t = t.clamp_to(ta, tb);
        let n = self.times.len();
        if n == 1 {
            return Ok((0, T::zero()));
        }
        let j = self.times[1..].partition_point(|&s| s < t).min(n - 2);
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        Ok((j, w.clamp_to(T::zero(), T::one())))
    }

    /// Linear in time, multilinear in the frozen parameters, linear in `x`.
    pub fn sample(&self, t: T, params: &[T], x: T) -> Result<Sample<T>> {
        let (j, wt) = self.time_bracket(t)?;
        let (i, wx) = self.grid.bracket(x)?;
        let corners = self.params.corners(params)?;
        let mut out = Sample { u: T::zero(), du: T::zero(), d2u: T::zero() };
        let one = T::one();
        let single_level = self.times.len() == 1;
        for (p, wp) in corners {
            let levels: &[(usize, T)] = if single_level { &[(0, one)] } else { &[(j, one - wt), (j + 1, wt)] };
            for &(lev, wl) in levels {
                if wl == T::zero() {
                    continue;
                }
                let o = self.offset(p, lev) + i;
                let w = wp * wl;
                let lerp = |a: &[T]| a[o] * (one - wx) + a[o + 1] * wx;
                out.u = out.u + w * lerp(&self.u);
                out.du = out.du + w * lerp(&self.du);
                out.d2u = out.d2u + w * lerp(&self.d2u);
            }
        }
        Ok(out)
    }

    /// Largest `|du|` over non-boundary nodes, all levels and parameters.
    pub fn max_interior_du(&self) -> T {
        let m = self.grid.len();
        self.du
            .chunks_exact(m)
            .flat_map(|row| row[1..m - 1].iter())
            .fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn max_abs_u(&self) -> T {
        self.u.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    /// Writes `header.json` and `u.csv`, `du.csv`, `d2u.csv` (one row per
    /// parameter point and stored level, leading columns `param,t`).
    pub fn write_dir(&self, dir: &Path, meta: &SolutionMeta) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = SolutionHeader {
            meta: meta.clone(),
            interval: (self.interval.0.as_f64(), self.interval.1.as_f64()),
            grid: self.grid.cast(),
            params: self.params.axes.iter().map(|a| a.cast()).collect(),
            times: self.times.iter().map(|t| t.as_f64()).collect(),
            steps: self.steps,
            dt: self.dt.as_f64(),
        };
        fs::write(dir.join("header.json"), serde_json::to_string_pretty(&header)? + "\n")?;
        for (name, data) in [("u", &self.u), ("du", &self.du), ("d2u", &self.d2u)] {
            let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("{name}.csv")))?);
            write!(w, "param,t")?;
            for i in 0..self.grid.len() {
                write!(w, ",x{i}")?;
            }
            writeln!(w)?;
            for p in 0..self.n_params() {
                for (lev, t) in self.times.iter().enumerate() {
                    write!(w, "{p},{}", t.as_f64())?;
                    let o = self.offset(p, lev);
                    for v in &data[o..o + self.grid.len()] {
                        write!(w, ",{}", v.as_f64())?;
                    }
                    writeln!(w)?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<(Self, SolutionMeta)> {
        let header: SolutionHeader = serde_json::from_str(&fs::read_to_string(dir.join("header.json"))?)?;
        let params = ParamGrid::new(header.params.iter().map(|a| a.cast()).collect());
        let expected = params.len() * header.times.len() * header.grid.len();
        let read = |name: &str| -> Result<Vec<T>> {
            let mut rdr = csv::Reader::from_path(dir.join(format!("{name}.csv"))).map_err(|e| Error::Io(e.to_string()))?;
            let mut out = Vec::with_capacity(expected);
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
                for field in rec.iter().skip(2) {
                    let v: f64 = field.parse().map_err(|_| Error::Io(format!("{name}.csv: bad number `{field}`")))?;
                    out.push(T::lit(v));
                }
            }
            if out.len() != expected {
                return Err(Error::Shape { expected, actual: out.len() });
            }
            Ok(out)
        };
        let sol = GridSolution {
            interval: (T::lit(header.interval.0), T::lit(header.interval.1)),
            times: header.times.iter().map(|&t| T::lit(t)).collect(),
            grid: header.grid.cast(),
            params,
            steps: header.steps,
            dt: T::lit(header.dt),
            u: read("u")?,
            du: read("du")?,
            d2u: read("d2u")?,
        };
        Ok((sol, header.meta))
    }
}

/// Descriptive fields carried in the serialized header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub equation: String,
    pub generator: String,
    pub terminal: String,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub interval_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionHeader {
    #[serde(flatten)]
    meta: SolutionMeta,
    interval: (f64, f64),
    grid: SpaceGrid<f64>,
    params: Vec<SpaceGrid<f64>>,
    times: Vec<f64>,
    steps: usize,
    dt: f64,
}
