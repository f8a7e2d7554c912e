//! Piecewise-linear embedding of increment vectors into stopped paths, and the
//! induced discretization of path-dependent generators.

use serde::Serialize;

use super::generator::{GeneratorConstants, GeneratorSpec, PathGenerator, PathTerminal, TerminalSpec};
use super::partition::TimePartition;
use crate::error::{Error, Result};
use crate::real::Real;

/// A continuous-from-the-right piecewise-linear function given by its knots.
/// Consecutive knots may share a time, which encodes a jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinearPath<T> {
    knots: Vec<(T, T)>,
}

impl<T: Real> PiecewiseLinearPath<T> {
    pub fn new(knots: Vec<(T, T)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("a path needs at least one knot"));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::domain("knot times must be nondecreasing"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    pub fn start(&self) -> T {
        self.knots[0].0
    }

    pub fn end(&self) -> T {
        self.knots[self.knots.len() - 1].0
    }

    /// Value at `s`, constant extrapolation outside the knot span. At a jump the
    /// later value is returned.
    pub fn eval(&self, s: T) -> T {
        let k = &self.knots;
        if s < k[0].0 {
            return k[0].1;
        }
        // last knot with time <= s
        let idx = k.partition_point(|&(t, _)| t <= s);
        let (t0, v0) = k[idx - 1];
        if idx == k.len() {
            return v0;
        }
        let (t1, v1) = k[idx];
        if t1 == t0 {
            return v1;
        }
        v0 + (v1 - v0) * (s - t0) / (t1 - t0)
    }

    /// `sup_s ω(s)`; attained at a knot.
    pub fn running_max(&self) -> T {
        self.knots.iter().map(|k| k.1).fold(T::neg_infinity(), T::max)
    }

    /// `sup_{r ≤ s} ω(r)`.
    pub fn max_until(&self, s: T) -> T {
        let mut m = self.eval(s).max(self.knots[0].1);
        for &(t, v) in &self.knots {
            if t > s {
                break;
            }
            m = m.max(v);
        }
        m
    }

    /// `∫ ω(s) ds` over the knot span.
    pub fn integral(&self) -> T {
        self.knots
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::half())
            .fold(T::zero(), |a, b| a + b)
    }

    /// Exact sup-norm distance. The difference of two piecewise-linear
    /// functions is piecewise linear on the merged breakpoints, so checking
    /// left and right limits at every breakpoint is enough.
    pub fn sup_distance(&self, other: &Self) -> T {
        let mut times: Vec<T> = self.knots.iter().chain(other.knots.iter()).map(|k| k.0).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite knot times"));
        times.dedup();
        times
            .iter()
            .map(|&s| {
                let right = (self.eval(s) - other.eval(s)).abs();
                let left = (self.left_limit(s) - other.left_limit(s)).abs();
                right.max(left)
            })
            .fold(T::zero(), T::max)
    }

    fn left_limit(&self, s: T) -> T {
        let k = &self.knots;
        let idx = k.partition_point(|&(t, _)| t < s);
        if idx == 0 {
            return k[0].1;
        }
        if idx < k.len() && k[idx].0 == s {
            // first knot at time s carries the left limit
            return k[idx].1;
        }
        self.eval(s)
    }
}

/// Builds the piecewise-linear path through the cumulative sums of `x`,
/// stopped at `t`.
///
/// With `t ∈ (t_{k−1}, t_k]` the path interpolates `Σ_{j≤i} x_j` at `t_i` for
/// `i < k`, rises linearly on `[t_{k−1}, t]` to `Σ_{j≤k} x_j` and stays there
/// until `T`. At `t = 0` the live segment has zero length and the path is the
/// constant `x_1` after an initial jump from 0.
pub fn embed_path<T: Real>(x: &[T], partition: &TimePartition<T>, t: T) -> Result<PiecewiseLinearPath<T>> {
    let n = partition.intervals();
    if x.len() != n {
        return Err(Error::Shape { expected: n, actual: x.len() });
    }
    let k = partition.locate(t)?;
    let mut knots = Vec::with_capacity(k + 2);
    let mut sum = T::zero();
    knots.push((T::zero(), T::zero()));
    for i in 1..k {
        sum = sum + x[i - 1];
        knots.push((partition.time(i), sum));
    }
    sum = sum + x[k - 1];
    knots.push((t, sum));
    let horizon = partition.horizon();
    if t < horizon {
        knots.push((horizon, sum));
    }
    Ok(PiecewiseLinearPath { knots })
}

/// `f̄(t, x, y, z) := h(t, ω^{x,t}, y, z)` on the increments of `partition`.
///
/// The result returns NaN for `t` outside `[0, T]`, which the PDE solver
/// reports as a generator failure.
pub fn discretize_path_generator<T: Real>(h: &PathGenerator<T>, partition: &TimePartition<T>) -> GeneratorSpec<T> {
    let n = partition.intervals();
    let constants = GeneratorConstants {
        m0: h.m0,
        l_x: h.l_path,
        l_y: h.l_y,
        l_z: h.l_z,
        modulus: h.modulus,
    };
    let h = h.clone();
    let part = partition.clone();
    let id = format!("{}@N={}", h.id, n);
    let affine = h.affine_yz;
    GeneratorSpec::new(id, n, constants, move |t, x: &[T], y, z| match embed_path(x, &part, t) {
        Ok(path) => h.eval(t, &path, y, z),
        Err(_) => T::nan(),
    })
    .with_affine_yz(affine)
}

/// `φ^n(x) := ξ(ω^{x,T})`, the terminal value on the embedded full path.
pub fn discretize_path_terminal<T: Real>(xi: &PathTerminal<T>, partition: &TimePartition<T>) -> TerminalSpec<T> {
    let n = partition.intervals();
    let part = partition.clone();
    let horizon = partition.horizon();
    let xi2 = xi.clone();
    TerminalSpec::new(format!("{}@N={}", xi.id, n), n, xi.bound, xi.lipschitz, move |x: &[T]| {
        match embed_path(x, &part, horizon) {
            Ok(path) => xi2.eval(&path),
            Err(_) => T::nan(),
        }
    })
}

/// Stopped path `B_{· ∧ t}` sampled on a grid, as a piecewise-linear path.
pub fn stopped_sample_path<T: Real>(times: &[T], values: &[T], t: T) -> Result<PiecewiseLinearPath<T>> {
    if times.len() != values.len() {
        return Err(Error::Shape { expected: times.len(), actual: values.len() });
    }
    let mut knots: Vec<(T, T)> = Vec::with_capacity(times.len());
    let mut last = values[0];
    for (&s, &v) in times.iter().zip(values) {
        if s <= t {
            knots.push((s, v));
            last = v;
        } else {
            break;
        }
    }
    if let Some(&end) = times.last() {
        if end > t {
            knots.push((end, last));
        }
    }
    PiecewiseLinearPath::new(knots)
}
