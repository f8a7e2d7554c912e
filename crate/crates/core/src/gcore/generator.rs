//! Generators and terminal functions together with their declared constants.
//!
//! Constants (`m0`, Lipschitz coefficients, modulus) are supplied by whoever
//! builds the generator; the `sample_*` helpers only spot-check them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::embed::PiecewiseLinearPath;
use crate::real::Real;

pub type DriverFn<T> = dyn Fn(T, &[T], T, T) -> T + Send + Sync;
pub type TerminalFn<T> = dyn Fn(&[T]) -> T + Send + Sync;
pub type PathDriverFn<T> = dyn Fn(T, &PiecewiseLinearPath<T>, T, T) -> T + Send + Sync;
pub type PathTerminalFn<T> = dyn Fn(&PiecewiseLinearPath<T>) -> T + Send + Sync;

/// Concave, sub-additive modulus of continuity with `w(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Modulus {
    Zero,
    Linear { slope: f64 },
    Holder { scale: f64, exponent: f64 },
    Capped { slope: f64, cap: f64 },
}

impl Modulus {
    pub fn eval<T: Real>(&self, delta: T) -> T {
        let d = delta.max(T::zero());
        match *self {
            Modulus::Zero => T::zero(),
            Modulus::Linear { slope } => T::lit(slope) * d,
            Modulus::Holder { scale, exponent } => T::lit(scale) * d.powf(T::lit(exponent)),
            Modulus::Capped { slope, cap } => (T::lit(slope) * d).min(T::lit(cap)),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Modulus::Zero => true,
            Modulus::Linear { slope } => slope >= 0.0,
            Modulus::Holder { scale, exponent } => scale >= 0.0 && exponent > 0.0 && exponent <= 1.0,
            Modulus::Capped { slope, cap } => slope >= 0.0 && cap >= 0.0,
        }
    }
}

/// Declared constants of a generator, reported alongside every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConstants {
    /// Bound on `|f(t, x, 0, 0)|`.
    pub m0: f64,
    /// Lipschitz constant in the increments `x` (sum-of-absolute-differences metric).
    pub l_x: f64,
    pub l_y: f64,
    /// Local Lipschitz coefficient in `z`: `|Δf| ≤ l_z (1 + |z¹| + |z²|) |Δz|`.
    pub l_z: f64,
    pub modulus: Modulus,
}

/// A driver `f(t, x_1, …, x_N, y, z)`.
#[derive(Clone)]
pub struct GeneratorSpec<T> {
    pub id: String,
    dim: usize,
    eval: Arc<DriverFn<T>>,
    pub constants: GeneratorConstants,
    /// Set when `f` is affine in `(y, z)`; symmetric mollification leaves it unchanged.
    pub affine_yz: bool,
}

impl<T> fmt::Debug for GeneratorSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .finish()
    }
}

impl<T: Real> GeneratorSpec<T> {
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        constants: GeneratorConstants,
        eval: impl Fn(T, &[T], T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), dim, eval: Arc::new(eval), constants, affine_yz: false }
    }

    pub fn from_arc(id: impl Into<String>, dim: usize, constants: GeneratorConstants, eval: Arc<DriverFn<T>>) -> Self {
        Self { id: id.into(), dim, eval, constants, affine_yz: false }
    }

    pub fn with_affine_yz(mut self, affine: bool) -> Self {
        self.affine_yz = affine;
        self
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, T::zero()).renamed("zero")
    }

    pub fn constant(dim: usize, c: T) -> Self {
        let constants = GeneratorConstants {
            m0: c.abs().as_f64(),
            l_x: 0.0,
            l_y: 0.0,
            l_z: 0.0,
            modulus: Modulus::Zero,
        };
        Self::new(format!("constant({c})"), dim, constants, move |_, _, _, _| c).with_affine_yz(true)
    }

    pub fn renamed(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Number of increment arguments `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, t: T, x: &[T], y: T, z: T) -> T {
        (self.eval)(t, x, y, z)
    }

    pub fn function(&self) -> Arc<DriverFn<T>> {
        Arc::clone(&self.eval)
    }

    /// Same generator evaluated with `z` clamped to `[-bound, bound]`.
    pub fn truncated_in_z(&self, bound: T) -> Self {
        let inner = Arc::clone(&self.eval);
        let mut out = self.clone();
        out.id = format!("{}|z<={}", self.id, bound);
        out.eval = Arc::new(move |t, x: &[T], y, z| inner(t, x, y, z.clamp_to(-bound, bound)));
        out
    }

    /// Largest violation of the declared `m0` bound on the given sample points.
    pub fn sample_m0_excess(&self, samples: &[(T, Vec<T>)]) -> f64 {
        samples
            .iter()
            .map(|(t, x)| self.eval(*t, x, T::zero(), T::zero()).abs().as_f64() - self.constants.m0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of the declared `(y, z)` local Lipschitz inequality
    /// over pairs `(t, x, y¹, z¹, y², z²)`.
    pub fn sample_lipschitz_excess(&self, samples: &[(T, Vec<T>, T, T, T, T)]) -> f64 {
        let c = &self.constants;
        samples
            .iter()
            .map(|(t, x, y1, z1, y2, z2)| {
                let lhs = (self.eval(*t, x, *y1, *z1) - self.eval(*t, x, *y2, *z2)).abs().as_f64();
                let rhs = c.l_y * (*y1 - *y2).abs().as_f64()
                    + c.l_z * (1.0 + z1.abs().as_f64() + z2.abs().as_f64()) * (*z1 - *z2).abs().as_f64();
                lhs - rhs
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of the declared modulus in `(t, x)`.
    pub fn sample_modulus_excess(&self, samples: &[(T, Vec<T>, T, Vec<T>, T, T)]) -> f64 {
        samples
            .iter()
            .map(|(t1, x1, t2, x2, y, z)| {
                let lhs = (self.eval(*t1, x1, *y, *z) - self.eval(*t2, x2, *y, *z)).abs();
                let dist = (*t1 - *t2).abs() + x1.iter().zip(x2).map(|(a, b)| (*a - *b).abs()).sum::<T>();
                (lhs - self.constants.modulus.eval(dist)).as_f64()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Terminal function `φ(x_1, …, x_N)`.
#[derive(Clone)]
pub struct TerminalSpec<T> {
    pub id: String,
    dim: usize,
    phi: Arc<TerminalFn<T>>,
    /// `sup |φ|`; `f64::INFINITY` for unbounded presets.
    pub bound: f64,
    /// Lipschitz constant in the sum-of-absolute-differences metric.
    pub lipschitz: f64,
}

impl<T> fmt::Debug for TerminalSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalSpec")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl<T: Real> TerminalSpec<T> {
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        bound: f64,
        lipschitz: f64,
        phi: impl Fn(&[T]) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), dim, phi: Arc::new(phi), bound, lipschitz }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::new(format!("constant({c})"), dim, c.abs().as_f64(), 0.0, move |_| c)
    }

    pub fn renamed(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        (self.phi)(x)
    }

    pub fn function(&self) -> Arc<TerminalFn<T>> {
        Arc::clone(&self.phi)
    }

    /// Pointwise shift `φ + δ`.
    pub fn shifted(&self, delta: T) -> Self {
        let inner = Arc::clone(&self.phi);
        Self {
            id: format!("{}+{}", self.id, delta),
            dim: self.dim,
            phi: Arc::new(move |x: &[T]| inner(x) + delta),
            bound: self.bound + delta.abs().as_f64(),
            lipschitz: self.lipschitz,
        }
    }

    pub fn sample_bound_excess(&self, samples: &[Vec<T>]) -> f64 {
        samples
            .iter()
            .map(|x| self.eval(x).abs().as_f64() - self.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample_lipschitz_excess(&self, pairs: &[(Vec<T>, Vec<T>)]) -> f64 {
        pairs
            .iter()
            .map(|(a, b)| {
                let lhs = (self.eval(a) - self.eval(b)).abs().as_f64();
                let dist: f64 = a.iter().zip(b).map(|(p, q)| (*p - *q).abs().as_f64()).sum();
                lhs - self.lipschitz * dist
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Path-dependent driver `h(t, ω, y, z)`; `ω` is a stopped path on `[0, T]`.
#[derive(Clone)]
pub struct PathGenerator<T> {
    pub id: String,
    eval: Arc<PathDriverFn<T>>,
    pub m0: f64,
    pub l_y: f64,
    pub l_z: f64,
    /// Lipschitz constant in `ω` for the sup norm (0 when `h` ignores the path).
    pub l_path: f64,
    pub modulus: Modulus,
    /// Whether `h` reads anything from `ω`; path-free generators are level-invariant.
    pub path_dependent: bool,
    pub affine_yz: bool,
}

impl<T> fmt::Debug for PathGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathGenerator").field("id", &self.id).field("l_path", &self.l_path).finish()
    }
}

impl<T: Real> PathGenerator<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        m0: f64,
        l_y: f64,
        l_z: f64,
        l_path: f64,
        modulus: Modulus,
        path_dependent: bool,
        eval: impl Fn(T, &PiecewiseLinearPath<T>, T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), eval: Arc::new(eval), m0, l_y, l_z, l_path, modulus, path_dependent, affine_yz: false }
    }

    pub fn with_affine_yz(mut self, affine: bool) -> Self {
        self.affine_yz = affine;
        self
    }

    #[inline]
    pub fn eval(&self, t: T, path: &PiecewiseLinearPath<T>, y: T, z: T) -> T {
        (self.eval)(t, path, y, z)
    }
}

/// Path-dependent terminal value `ξ(ω)`.
#[derive(Clone)]
pub struct PathTerminal<T> {
    pub id: String,
    eval: Arc<PathTerminalFn<T>>,
    pub bound: f64,
    /// Lipschitz constant in `ω` for the sup norm.
    pub lipschitz: f64,
}

impl<T> fmt::Debug for PathTerminal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathTerminal").field("id", &self.id).finish()
    }
}

impl<T: Real> PathTerminal<T> {
    pub fn new(
        id: impl Into<String>,
        bound: f64,
        lipschitz: f64,
        eval: impl Fn(&PiecewiseLinearPath<T>) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), eval: Arc::new(eval), bound, lipschitz }
    }

    #[inline]
    pub fn eval(&self, path: &PiecewiseLinearPath<T>) -> T {
        (self.eval)(path)
    }
}
