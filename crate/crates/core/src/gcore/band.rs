use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// The volatility interval `[sigma_lo, sigma_hi]` that defines the sublinear
/// function `G`. Only the non-degenerate case `sigma_lo > 0` is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityBand<T> {
    sigma_lo: T,
    sigma_hi: T,
}

impl<T: Real> VolatilityBand<T> {
    pub fn new(sigma_lo: T, sigma_hi: T) -> Result<Self> {
        if !(sigma_lo.is_finite() && sigma_hi.is_finite()) {
            return Err(Error::domain("volatility bounds must be finite"));
        }
        if sigma_lo <= T::zero() {
            return Err(Error::domain(format!("sigma_lo must be positive, got {sigma_lo}")));
        }
        if sigma_lo > sigma_hi {
            return Err(Error::domain(format!(
                "sigma_lo ({sigma_lo}) exceeds sigma_hi ({sigma_hi})"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    /// Band collapsed to a single volatility (the classical Brownian case).
    pub fn classical(sigma: T) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    #[inline]
    pub fn sigma_lo(&self) -> T {
        self.sigma_lo
    }

    #[inline]
    pub fn sigma_hi(&self) -> T {
        self.sigma_hi
    }

    #[inline]
    pub fn var_lo(&self) -> T {
        self.sigma_lo * self.sigma_lo
    }

    #[inline]
    pub fn var_hi(&self) -> T {
        self.sigma_hi * self.sigma_hi
    }

    pub fn is_classical(&self) -> bool {
        self.sigma_lo == self.sigma_hi
    }

    pub fn contains(&self, sigma: T) -> bool {
        sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }

    /// `G(a) = ½(σ̄² a⁺ − σ̲² a⁻)`.
    #[inline]
    pub fn g(&self, a: T) -> T {
        g_function(a, self)
    }

    /// The volatility that attains the supremum in `G(a) = sup_h ½h²a`.
    #[inline]
    pub fn argmax_sigma(&self, a: T) -> T {
        if a >= T::zero() {
            self.sigma_hi
        } else {
            self.sigma_lo
        }
    }

    pub fn cast<U: Real>(&self) -> VolatilityBand<U> {
        VolatilityBand { sigma_lo: U::lit(self.sigma_lo.as_f64()), sigma_hi: U::lit(self.sigma_hi.as_f64()) }
    }
}

#[inline]
pub fn g_function<T: Real>(a: T, band: &VolatilityBand<T>) -> T {
    let pos = a.max(T::zero());
    let neg = (-a).max(T::zero());
    T::half() * (band.var_hi() * pos - band.var_lo() * neg)
}
