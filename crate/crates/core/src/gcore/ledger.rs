//! Backward recursion for the `x_k`-Lipschitz bounds of the cascade solutions.

use serde::Serialize;

use super::band::VolatilityBand;
use super::partition::TimePartition;
use crate::error::{Error, Result};
use crate::real::Real;

/// `bounds[k − 1] = L^k` for `k = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeLedger<T> {
    pub bounds: Vec<T>,
    /// Global `|Z|` bound, equal to `L^1`.
    pub m_z: T,
}

impl<T: Real> DerivativeLedger<T> {
    /// `L^k`, 1-based.
    pub fn bound(&self, k: usize) -> T {
        self.bounds[k - 1]
    }

    /// `M_z` enlarged by 10%, the clamp applied to `z` inside the generator.
    pub fn truncation(&self) -> T {
        self.m_z * T::lit(1.1)
    }
}

/// `L^{N+1} = L^φ` and, for `k = N, …, 1`,
/// `L^k = (L^{k+1} + l_x/l_y) exp(σ̄² l_y Δt_k) − l_x/l_y`,
/// with the limit `L^k = L^{k+1} + σ̄² l_x Δt_k` when `l_y = 0`.
pub fn derivative_bound_ledger<T: Real>(
    phi_lip: T,
    l_x: T,
    l_y: T,
    band: &VolatilityBand<T>,
    partition: &TimePartition<T>,
) -> Result<DerivativeLedger<T>> {
    for (name, v) in [("L^phi", phi_lip), ("l_x", l_x), ("l_y", l_y)] {
        if v < T::zero() || v.is_nan() {
            return Err(Error::domain(format!("ledger constant {name} must be nonnegative, got {v}")));
        }
    }
    let n = partition.intervals();
    let s2 = band.var_hi();
    let mut bounds = vec![T::zero(); n];
    let mut next = phi_lip;
    for k in (1..=n).rev() {
        let dt = partition.gap(k);
        next = if l_y > T::zero() {
            let ratio = l_x / l_y;
            (next + ratio) * (s2 * l_y * dt).exp() - ratio
        } else {
            next + s2 * l_x * dt
        };
        bounds[k - 1] = next;
    }
    Ok(DerivativeLedger { m_z: bounds[0], bounds })
}
