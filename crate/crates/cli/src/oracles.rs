//! Closed-form values for the presets where `Γ = D²u + 2f` keeps one sign, so
//! that a constant volatility is optimal.

use gbsde::gcore::PresetRef;
use gbsde::Band;
use serde::Serialize;

fn param(p: &PresetRef, key: &str, default: f64) -> f64 {
    p.params.get(key).copied().unwrap_or(default)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KForm {
    /// `Γ ≡ 2g`: `K_T = (g σ² − G(2g)) T` under constant `σ`.
    Constant { g: f64 },
    /// `Γ = 2α u(t)` with `u(t) = b e^{α v (T − t)}`: `K_T = (σ² − v) b (e^{α v T} − 1) / v`.
    Exponential { alpha: f64, b: f64, v: f64 },
    /// Classical band, `K ≡ 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeOracle {
    pub y0: f64,
    pub k: KForm,
    /// Volatility attaining the upper expectation.
    pub optimal_sigma: f64,
    pub note: String,
}

impl CascadeOracle {
    pub fn k_terminal(&self, sigma: f64, band: &Band, horizon: f64) -> f64 {
        match self.k {
            KForm::Constant { g } => (g * sigma * sigma - band.g(2.0 * g)) * horizon,
            KForm::Exponential { alpha, b, v } => (sigma * sigma - v) * b * ((alpha * v * horizon).exp() - 1.0) / v,
            KForm::Zero => 0.0,
        }
    }

    /// `K` stays at zero on every path.
    pub fn k_flat(&self, band: &Band) -> bool {
        match self.k {
            KForm::Constant { g } => g == 0.0 || band.is_classical(),
            KForm::Exponential { alpha, b, .. } => alpha * b == 0.0 || band.is_classical(),
            KForm::Zero => true,
        }
    }
}

/// Variance picked by `G` for a quantity of sign `s`.
fn var_for(s: f64, band: &Band) -> f64 {
    if s >= 0.0 {
        band.var_hi()
    } else {
        band.var_lo()
    }
}

pub fn cascade_oracle(generator: Option<&PresetRef>, terminal: Option<&PresetRef>, band: &Band, horizon: f64) -> Option<CascadeOracle> {
    let (g, t) = (generator?, terminal?);
    // terminal as κ (Σx)² + a Σx + b
    let (kappa, b) = match t.id.as_str() {
        "zero" | "identity" => (0.0, 0.0),
        "constant" => (0.0, param(t, "c", 1.0)),
        "affine" => (0.0, param(t, "b", 0.0)),
        "quad-convex" => (param(t, "scale", 1.0), 0.0),
        "quad-concave" => (-param(t, "scale", 1.0), 0.0),
        "exp-clamped" if g.id == "zero" && band.is_classical() => {
            let y0 = (0.5 * band.var_hi() * horizon).exp();
            return Some(CascadeOracle {
                y0,
                k: KForm::Zero,
                optimal_sigma: band.sigma_hi(),
                note: "classical value e^{σ²T/2}; the cap contributes below 1e-4".into(),
            });
        }
        _ => return None,
    };
    match g.id.as_str() {
        "zero" | "constant-driver" => {
            let c = if g.id == "zero" { 0.0 } else { param(g, "c", 0.3) };
            let gg = kappa + c;
            Some(CascadeOracle {
                y0: b + band.g(2.0 * gg) * horizon,
                k: KForm::Constant { g: gg },
                optimal_sigma: if gg >= 0.0 { band.sigma_hi() } else { band.sigma_lo() },
                note: "u = κ(Σx)² + aΣx + b + G(2(κ + c))(T − t)".into(),
            })
        }
        "linear-y" if kappa == 0.0 && matches!(t.id.as_str(), "zero" | "constant") => {
            let alpha = param(g, "alpha", 0.5);
            let v = var_for(alpha * b, band);
            Some(CascadeOracle {
                y0: b * (alpha * v * horizon).exp(),
                k: KForm::Exponential { alpha, b, v },
                optimal_sigma: if alpha * b >= 0.0 { band.sigma_hi() } else { band.sigma_lo() },
                note: "u = b e^{α v (T − t)}".into(),
            })
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeatOracle {
    /// `u(T, x)` in closed form.
    Value { x: f64, value: f64 },
    /// Affine data are left unchanged.
    Exact,
}

pub fn heat_oracle(terminal: &PresetRef, band: &Band, horizon: f64) -> Option<HeatOracle> {
    match terminal.id.as_str() {
        "quad-convex" => Some(HeatOracle::Value { x: 0.0, value: param(terminal, "scale", 1.0) * band.var_hi() * horizon }),
        "quad-concave" => Some(HeatOracle::Value { x: 0.0, value: -param(terminal, "scale", 1.0) * band.var_lo() * horizon }),
        "exp-clamped" => Some(HeatOracle::Value { x: 0.0, value: (0.5 * band.var_hi() * horizon).exp() }),
        "zero" | "constant" | "affine" | "identity" => Some(HeatOracle::Exact),
        _ => None,
    }
}
