//! Bump-kernel mollifiers and the two smoothing steps applied to generators.

use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generator::{GeneratorConstants, GeneratorSpec};
use crate::error::{Error, Result};
use crate::real::Real;

/// Unnormalized bump `exp(1 / (|u|² − 1))` on the open unit ball.
pub fn bump(u: &[f64]) -> f64 {
    let r2: f64 = u.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Discrete rule for `∫ g(v) ρ_n(v) dv` with `ρ_n(v) = n^d ρ(n v)`.
///
/// Nodes are stored already scaled to the `1/n` ball.
#[derive(Debug, Clone, Serialize)]
pub struct Mollifier<T> {
    n: usize,
    dim: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> Mollifier<T> {
    /// Tensor Gauss–Legendre rule on `[-1, 1]^dim` weighted by the bump.
    pub fn gauss_legendre(n: usize, dim: usize, nodes_per_axis: usize) -> Result<Self> {
        check_shape(n, dim)?;
        let deg = NonZeroUsize::new(nodes_per_axis)
            .ok_or_else(|| Error::config("Gauss-Legendre rule needs at least one node per axis"))?;
        let total = nodes_per_axis
            .checked_pow(dim as u32)
            .filter(|&c| c <= 1 << 22)
            .ok_or_else(|| Error::config(format!("{nodes_per_axis}^{dim} tensor nodes is too many")))?;
        let rule = GaussLegendre::new(deg);
        let pairs = rule.as_node_weight_pairs();
        let mut pts = Vec::with_capacity(total * dim);
        let mut ws = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        let mut u = vec![0.0; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                u[a] = pairs[i].0;
                w *= pairs[i].1;
            }
            let k = bump(&u) * w;
            if k > 0.0 {
                pts.extend_from_slice(&u);
                ws.push(k);
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes_per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        Self::from_unit_rule(n, dim, pts, ws)
    }

    /// `pairs` antithetic pairs `±u`, `u` uniform on the unit ball, weighted by
    /// the bump. The rule is symmetric, so it integrates odd functions to zero.
    pub fn symmetric_sampled(n: usize, dim: usize, pairs: usize, seed: u64) -> Result<Self> {
        check_shape(n, dim)?;
        if pairs == 0 {
            return Err(Error::config("sampled mollifier needs at least one node pair"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(2 * pairs * dim);
        let mut ws = Vec::with_capacity(2 * pairs);
        let mut u = vec![0.0; dim];
        while ws.len() < 2 * pairs {
            for v in u.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let k = bump(&u);
            if k <= 0.0 {
                continue;
            }
            pts.extend_from_slice(&u);
            pts.extend(u.iter().map(|v| -v));
            ws.push(k);
            ws.push(k);
        }
        Self::from_unit_rule(n, dim, pts, ws)
    }

    fn from_unit_rule(n: usize, dim: usize, unit_nodes: Vec<f64>, raw_weights: Vec<f64>) -> Result<Self> {
        let total: f64 = raw_weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::config(format!(
                "mollifier quadrature underflow: weights sum to {total} (n = {n}, dim = {dim})"
            )));
        }
        let scale = 1.0 / n as f64;
        Ok(Self {
            n,
            dim,
            nodes: unit_nodes.iter().map(|&v| T::lit(v * scale)).collect(),
            weights: raw_weights.iter().map(|&w| T::lit(w / total)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn radius(&self) -> T {
        T::one() / T::from_usize_lossy(self.n)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// `Σ w_i g(v_i)`.
    pub fn integrate(&self, mut g: impl FnMut(&[T]) -> T) -> T {
        self.iter().map(|(v, w)| w * g(v)).fold(T::zero(), |a, b| a + b)
    }
}

fn check_shape(n: usize, dim: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("mollifier index n must be positive"));
    }
    if dim == 0 {
        return Err(Error::config("mollifier dimension must be positive"));
    }
    Ok(())
}

/// `f^n(t, x, y, z) = ∫ f(t, x, y − ỹ, z − z̃) ρ_n(ỹ, z̃)`.
pub fn mollify_generator_yz<T: Real>(f: &GeneratorSpec<T>, rho: &Mollifier<T>) -> Result<GeneratorSpec<T>> {
    if rho.dim() != 2 {
        return Err(Error::config(format!("(y, z) mollifier must have dim 2, got {}", rho.dim())));
    }
    let r = 1.0 / rho.n() as f64;
    let c = f.constants;
    let constants = GeneratorConstants { m0: c.m0 + r * (c.l_y + c.l_z * (1.0 + r)), ..c };
    let inner = f.function();
    let rho = Arc::new(rho.clone());
    let id = format!("{}*rho_yz[{}]", f.id, rho.n());
    let affine = f.affine_yz;
    if affine {
        // every rule is symmetric, so it reproduces affine functions exactly
        return Ok(GeneratorSpec::from_arc(id, f.dim(), constants, inner).with_affine_yz(true));
    }
    let out = GeneratorSpec::new(id, f.dim(), constants, move |t, x: &[T], y, z| {
        rho.integrate(|v| inner(t, x, y - v[0], z - v[1]))
    });
    Ok(out.with_affine_yz(affine))
}

/// `f̂^n(t, x, y, z) = ∫ f(t − t̃, x − x̃, y, z) ρ_n(t̃, x̃)`, with `f` continued
/// constantly outside `[0, horizon]` in time.
pub fn mollify_generator_tx<T: Real>(
    f: &GeneratorSpec<T>,
    rho: &Mollifier<T>,
    horizon: T,
) -> Result<GeneratorSpec<T>> {
    let dim = f.dim();
    if rho.dim() != dim + 1 {
        return Err(Error::config(format!("(t, x) mollifier must have dim {}, got {}", dim + 1, rho.dim())));
    }
    let c = f.constants;
    let slack = (dim + 1) as f64 * c.modulus.eval(1.0 / rho.n() as f64);
    let constants = GeneratorConstants { m0: c.m0 + slack, ..c };
    let inner = f.function();
    let rho = Arc::new(rho.clone());
    let id = format!("{}*rho_tx[{}]", f.id, rho.n());
    let affine = f.affine_yz;
    let out = GeneratorSpec::new(id, dim, constants, move |t, x: &[T], y, z| {
        let mut shifted = vec![T::zero(); x.len()];
        rho.integrate(|v| {
            for ((s, &xi), &vi) in shifted.iter_mut().zip(x).zip(&v[1..]) {
                *s = xi - vi;
            }
            inner((t - v[0]).clamp_to(T::zero(), horizon), &shifted, y, z)
        })
    });
    Ok(out.with_affine_yz(affine))
}
