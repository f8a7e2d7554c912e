use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform nodes `x_min = x_0 < … < x_{m−1} = x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid<T> {
    x_min: T,
    x_max: T,
    m: usize,
}

impl<T: Real> SpaceGrid<T> {
    pub fn new(x_min: T, x_max: T, m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::config(format!("space grid needs at least 3 nodes, got {m}")));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::config(format!("space grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, m })
    }

    /// `[−half_width, half_width]`.
    pub fn centered(half_width: T, m: usize) -> Result<Self> {
        Self::new(-half_width, half_width, m)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_usize_lossy(self.m - 1)
    }

    #[inline]
    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.m {
            self.x_max
        } else {
            self.x_min + self.dx() * T::from_usize_lossy(i)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.m).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// `(i, w)` with `x = (1 − w) x_i + w x_{i+1}`, `i ≤ m − 2`.
    #[inline]
    pub fn bracket(&self, x: T) -> Result<(usize, T)> {
        if !self.contains(x) {
            return Err(Error::range(format!("{x} outside grid [{}, {}]", self.x_min, self.x_max)));
        }
        let s = (x - self.x_min) / self.dx();
        let i = s.floor().to_usize().unwrap_or(0).min(self.m - 2);
        Ok((i, s - T::from_usize_lossy(i)))
    }

    pub fn cast<U: Real>(&self) -> SpaceGrid<U> {
        SpaceGrid { x_min: U::lit(self.x_min.as_f64()), x_max: U::lit(self.x_max.as_f64()), m: self.m }
    }
}

/// Tensor product of uniform axes, flattened row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid<T> {
    pub axes: Vec<SpaceGrid<T>>,
}

impl<T: Real> ParamGrid<T> {
    pub fn new(axes: Vec<SpaceGrid<T>>) -> Self {
        Self { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of tensor points (1 for the empty grid).
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, mut flat: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            *slot = axis.node(flat % axis.len());
            flat /= axis.len();
        }
        out
    }

    /// Flat indices and weights of the `2^d` corners around `x`.
    pub fn corners(&self, x: &[T]) -> Result<Vec<(usize, T)>> {
        if x.len() != self.axes.len() {
            return Err(Error::Shape { expected: self.axes.len(), actual: x.len() });
        }
        let mut out = vec![(0usize, T::one())];
        for (axis, &xi) in self.axes.iter().zip(x) {
            let (i, w) = axis.bracket(xi).map_err(|e| match e {
                Error::Range(m) => Error::range(format!("parameter {m}")),
                other => other,
            })?;
            let mut next = Vec::with_capacity(out.len() * 2);
            for (flat, wt) in out {
                let base = flat * axis.len() + i;
                if w < T::one() {
                    next.push((base, wt * (T::one() - w)));
                }
                if w > T::zero() {
                    next.push((base + 1, wt * w));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Values on a [`ParamGrid`], evaluated by multilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamTable<T> {
    pub grid: ParamGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> ParamTable<T> {
    pub fn new(grid: ParamGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape { expected: grid.len(), actual: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn eval(&self, x: &[T]) -> Result<T> {
        Ok(self
            .grid
            .corners(x)?
            .into_iter()
            .map(|(i, w)| w * self.values[i])
            .fold(T::zero(), |a, b| a + b))
    }

    /// The single value of a table over zero parameters.
    pub fn scalar(&self) -> Option<T> {
        (self.grid.dim() == 0).then(|| self.values[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation_and_nodes() {
        assert!(SpaceGrid::new(0.0, 1.0, 2).is_err());
        assert!(SpaceGrid::new(1.0, 1.0, 5).is_err());
        let g = SpaceGrid::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.bracket(0.25).unwrap(), (2, 0.5));
        assert_eq!(g.bracket(1.0).unwrap(), (3, 1.0));
        assert!(matches!(g.bracket(1.5), Err(Error::Range(_))));
    }

    #[test]
    fn multilinear_is_exact_on_bilinear_functions() {
        let a = SpaceGrid::new(-1.0, 1.0, 5).unwrap();
        let b = SpaceGrid::new(0.0, 3.0, 4).unwrap();
        let grid = ParamGrid::new(vec![a, b]);
        let f = |p: &[f64]| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        let table = ParamTable::new(grid, values).unwrap();
        for x in [[0.3, 2.2], [-1.0, 0.0], [0.99, 2.999], [1.0, 3.0]] {
            assert!((table.eval(&x).unwrap() - f(&x)).abs() < 1e-12);
        }
        assert!(table.eval(&[0.0]).is_err());
        assert!(table.eval(&[0.0, 3.5]).is_err());
    }

    #[test]
    fn empty_grid_is_a_scalar() {
        let t = ParamTable::new(ParamGrid::<f64>::new(vec![]), vec![4.0]).unwrap();
        assert_eq!(t.scalar(), Some(4.0));
        assert_eq!(t.eval(&[]).unwrap(), 4.0);
    }
}
