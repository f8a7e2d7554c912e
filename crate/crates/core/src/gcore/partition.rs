use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition<T> {
    times: Vec<T>,
}

impl<T: Real> TimePartition<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a partition needs at least the two endpoints 0 and T"));
        }
        if times[0] != T::zero() {
            return Err(Error::domain(format!("partition must start at 0, got {}", times[0])));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::domain(format!(
                    "partition times must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn uniform(horizon: T, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::domain("a partition needs at least one interval"));
        }
        if !(horizon > T::zero()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let n = T::from_usize_lossy(intervals);
        let mut times: Vec<T> = (0..=intervals).map(|i| horizon * T::from_usize_lossy(i) / n).collect();
        times[intervals] = horizon;
        Self::new(times)
    }

    /// Smallest uniform power-of-two partition with mesh `≤ 2^-level`.
    /// Partitions built this way are nested: level `m ≤ n` gives `π^m ⊂ π^n`.
    pub fn dyadic(horizon: T, level: u32) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let target = T::lit(2f64.powi(-(level as i32)));
        let mut n = 1usize;
        while horizon / T::from_usize_lossy(n) > target * (T::one() + T::lit(1e-12)) {
            n *= 2;
            if n > 1 << 24 {
                return Err(Error::config(format!("dyadic level {level} is too fine for horizon {horizon}")));
            }
        }
        Self::uniform(horizon, n)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty")
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// `t_k`, for `k = 0..=N`.
    pub fn time(&self, k: usize) -> T {
        self.times[k]
    }

    /// Length of interval `k` (1-based): `t_k − t_{k−1}`.
    pub fn gap(&self, k: usize) -> T {
        self.times[k] - self.times[k - 1]
    }

    pub fn mesh(&self) -> T {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(T::zero(), T::max)
    }

    /// 1-based index `k` of the closed interval `[t_{k−1}, t_k]` containing `t`,
    /// choosing the earliest one at interior knots (`t = t_k` maps to `k`).
    pub fn locate(&self, t: T) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= T::zero() && t <= horizon) {
            return Err(Error::domain(format!("time {t} outside [0, {horizon}]")));
        }
        let n = self.intervals();
        let idx = self.times[1..].partition_point(|&tk| tk < t);
        Ok((idx + 1).min(n))
    }

    /// 1-based index of the half-open interval `[t_{k−1}, t_k)` containing `t`
    /// (the last interval is closed on the right).
    pub fn locate_left(&self, t: T) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= T::zero() && t <= horizon) {
            return Err(Error::domain(format!("time {t} outside [0, {horizon}]")));
        }
        let n = self.intervals();
        let idx = self.times[1..].partition_point(|&tk| tk <= t);
        Ok((idx + 1).min(n))
    }

    /// Whether every knot of `self` is a knot of `finer` (within `tol`).
    pub fn is_refined_by(&self, finer: &TimePartition<T>, tol: T) -> bool {
        self.times.iter().all(|&t| finer.times.iter().any(|&s| (s - t).abs() <= tol))
    }
}
