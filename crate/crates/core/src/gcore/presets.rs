//! Named generators and terminals, selected by string id plus a parameter map.
//!
//! | generator            | formula                                                 |
//! |----------------------|---------------------------------------------------------|
//! | `zero`               | `0`                                                     |
//! | `constant-driver`    | `c`                                                     |
//! | `linear-y`           | `alpha · y`                                             |
//! | `random-lipschitz`   | `a sin(w·x + t + θ₀) + b sin(y + θ₁) + c sin(z + θ₂)`   |
//!
//! | terminal             | formula (`s = x1 + … + xN`)                             |
//! |----------------------|---------------------------------------------------------|
//! | `zero`, `constant`   | `0`, `c`                                                |
//! | `identity`, `affine` | `s`, `a s + b`                                          |
//! | `quad-convex`        | `scale · s²`                                            |
//! | `quad-concave`       | `−scale · s²`                                           |
//! | `exp-clamped`        | `exp(clamp(s, −cap, cap))`                              |
//! | `clamped-identity`   | `clamp(s, −cap, cap)`                                   |
//! | `tanh-sum`           | `tanh(scale · s)`                                       |
//! | `product`            | `x1 · x2`                                               |

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::PiecewiseLinearPath;
use super::expr::Expr;
use super::generator::{GeneratorConstants, GeneratorSpec, Modulus, PathGenerator, PathTerminal, TerminalSpec};
use crate::error::{Error, Result};
use crate::real::Real;

pub type Params = BTreeMap<String, f64>;

pub const GENERATOR_PRESETS: &[&str] = &["zero", "constant-driver", "linear-y", "random-lipschitz"];
pub const TERMINAL_PRESETS: &[&str] = &[
    "zero",
    "constant",
    "identity",
    "affine",
    "quad-convex",
    "quad-concave",
    "exp-clamped",
    "clamped-identity",
    "tanh-sum",
    "product",
];
pub const PATH_GENERATOR_PRESETS: &[&str] = &["path-independent", "clamped-current", "clamped-running-max"];
pub const PATH_TERMINAL_PRESETS: &[&str] = &["zero", "clamped-terminal", "clamped-running-max"];

/// Reference to a preset as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub id: String,
    #[serde(default)]
    pub params: Params,
}

impl PresetRef {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), params: Params::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

struct Reader<'a> {
    id: &'a str,
    params: &'a Params,
    allowed: &'static [&'static str],
}

impl<'a> Reader<'a> {
    fn new(id: &'a str, params: &'a Params, allowed: &'static [&'static str]) -> Result<Self> {
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::config(format!("preset `{id}` has no parameter `{k}` (allowed: {allowed:?})")));
        }
        Ok(Self { id, params, allowed })
    }

    fn get(&self, key: &str, default: f64) -> Result<f64> {
        debug_assert!(self.allowed.contains(&key));
        let v = self.params.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::config(format!("preset `{}`: parameter `{key}` must be finite", self.id)));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if v <= 0.0 {
            return Err(Error::config(format!("preset `{}`: parameter `{key}` must be positive", self.id)));
        }
        Ok(v)
    }
}

fn consts(m0: f64, l_x: f64, l_y: f64, l_z: f64, modulus: Modulus) -> GeneratorConstants {
    GeneratorConstants { m0, l_x, l_y, l_z, modulus }
}

pub fn generator_preset<T: Real>(preset: &PresetRef, dim: usize) -> Result<GeneratorSpec<T>> {
    let id = preset.id.as_str();
    let p = &preset.params;
    let g = match id {
        "zero" => {
            Reader::new(id, p, &[])?;
            GeneratorSpec::zero(dim)
        }
        "constant-driver" => {
            let c = Reader::new(id, p, &["c"])?.get("c", 0.3)?;
            GeneratorSpec::constant(dim, T::lit(c)).renamed(format!("constant-driver(c={c})"))
        }
        "linear-y" => {
            let alpha = Reader::new(id, p, &["alpha"])?.get("alpha", 0.5)?;
            let a = T::lit(alpha);
            GeneratorSpec::new(
                format!("linear-y(alpha={alpha})"),
                dim,
                consts(0.0, 0.0, alpha.abs(), 0.0, Modulus::Zero),
                move |_, _, y, _| a * y,
            )
            .with_affine_yz(true)
        }
        "random-lipschitz" => {
            let r = Reader::new(id, p, &["seed", "a", "b", "c"])?;
            let seed = r.get("seed", 0.0)?;
            let (a, b, c) = (r.get("a", 0.3)?.abs(), r.get("b", 0.5)?.abs(), r.get("c", 0.3)?.abs());
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let th: [f64; 3] = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
            let w_max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let wt: Vec<T> = w.iter().map(|&v| T::lit(v)).collect();
            let (at, bt, ct) = (T::lit(a), T::lit(b), T::lit(c));
            let tht = th.map(T::lit);
            GeneratorSpec::new(
                format!("random-lipschitz(seed={seed},a={a},b={b},c={c})"),
                dim,
                consts(a + b * th[1].sin().abs() + c * th[2].sin().abs(), a * w_max, b, c, Modulus::Linear {
                    slope: a * w_max.max(1.0),
                }),
                move |t, x: &[T], y, z| {
                    let s = wt.iter().zip(x).map(|(&wi, &xi)| wi * xi).fold(T::zero(), |u, v| u + v);
                    at * (s + t + tht[0]).sin() + bt * (y + tht[1]).sin() + ct * (z + tht[2]).sin()
                },
            )
        }
        _ => {
            return Err(Error::config(format!("unknown generator preset `{id}` (known: {GENERATOR_PRESETS:?})")));
        }
    };
    Ok(g)
}

fn sum<T: Real>(x: &[T]) -> T {
    x.iter().copied().fold(T::zero(), |a, b| a + b)
}

pub fn terminal_preset<T: Real>(preset: &PresetRef, dim: usize) -> Result<TerminalSpec<T>> {
    let id = preset.id.as_str();
    let p = &preset.params;
    let inf = f64::INFINITY;
    let phi = match id {
        "zero" => {
            Reader::new(id, p, &[])?;
            TerminalSpec::new("zero", dim, 0.0, 0.0, |_: &[T]| T::zero())
        }
        "constant" => {
            let c = Reader::new(id, p, &["c"])?.get("c", 1.0)?;
            TerminalSpec::constant(dim, T::lit(c)).renamed(format!("constant(c={c})"))
        }
        "identity" => {
            Reader::new(id, p, &[])?;
            TerminalSpec::new("identity", dim, inf, 1.0, |x: &[T]| sum(x))
        }
        "affine" => {
            let r = Reader::new(id, p, &["a", "b"])?;
            let (a, b) = (r.get("a", 1.0)?, r.get("b", 0.0)?);
            let (at, bt) = (T::lit(a), T::lit(b));
            let bound = if a == 0.0 { b.abs() } else { inf };
            TerminalSpec::new(format!("affine(a={a},b={b})"), dim, bound, a.abs(), move |x: &[T]| at * sum(x) + bt)
        }
        "quad-convex" | "quad-concave" => {
            let s = Reader::new(id, p, &["scale"])?.positive("scale", 1.0)?;
            let sign = if id == "quad-convex" { 1.0 } else { -1.0 };
            let k = T::lit(sign * s);
            TerminalSpec::new(format!("{id}(scale={s})"), dim, inf, inf, move |x: &[T]| {
                let v = sum(x);
                k * v * v
            })
        }
        "exp-clamped" => {
            let cap = Reader::new(id, p, &["cap"])?.positive("cap", 5.0)?;
            let c = T::lit(cap);
            TerminalSpec::new(format!("exp-clamped(cap={cap})"), dim, cap.exp(), cap.exp(), move |x: &[T]| {
                sum(x).clamp_to(-c, c).exp()
            })
        }
        "clamped-identity" => {
            let cap = Reader::new(id, p, &["cap"])?.positive("cap", 1.0)?;
            let c = T::lit(cap);
            TerminalSpec::new(format!("clamped-identity(cap={cap})"), dim, cap, 1.0, move |x: &[T]| {
                sum(x).clamp_to(-c, c)
            })
        }
        "tanh-sum" => {
            let s = Reader::new(id, p, &["scale"])?.positive("scale", 1.0)?;
            let k = T::lit(s);
            TerminalSpec::new(format!("tanh-sum(scale={s})"), dim, 1.0, s, move |x: &[T]| (k * sum(x)).tanh())
        }
        "product" => {
            Reader::new(id, p, &[])?;
            if dim < 2 {
                return Err(Error::config("terminal preset `product` needs at least two increments"));
            }
            TerminalSpec::new("product", dim, inf, inf, |x: &[T]| x[0] * x[1])
        }
        _ => return Err(Error::config(format!("unknown terminal preset `{id}` (known: {TERMINAL_PRESETS:?})"))),
    };
    Ok(phi)
}

/// Generator from an expression in `t`, `x1…xN`, `y`, `z`; constants are
/// declared by the caller.
pub fn generator_from_expr<T: Real>(src: &str, dim: usize, constants: GeneratorConstants) -> Result<GeneratorSpec<T>> {
    let e = Expr::parse(src)?;
    if e.max_x_index() > dim {
        return Err(Error::config(format!("expression `{src}` uses x{} but there are only {dim} increments", e.max_x_index())));
    }
    Ok(GeneratorSpec::new(format!("expr({src})"), dim, constants, move |t, x: &[T], y, z| e.eval(t, x, y, z)))
}

/// Terminal from an expression in `x1…xN`.
pub fn terminal_from_expr<T: Real>(src: &str, dim: usize, bound: f64, lipschitz: f64) -> Result<TerminalSpec<T>> {
    let e = Expr::parse(src)?;
    if e.uses_tyz() {
        return Err(Error::config(format!("terminal expression `{src}` may only use x1…xN")));
    }
    if e.max_x_index() > dim {
        return Err(Error::config(format!("expression `{src}` uses x{} but there are only {dim} increments", e.max_x_index())));
    }
    Ok(TerminalSpec::new(format!("expr({src})"), dim, bound, lipschitz, move |x: &[T]| {
        e.eval(T::zero(), x, T::zero(), T::zero())
    }))
}

pub fn path_generator_preset<T: Real>(preset: &PresetRef) -> Result<PathGenerator<T>> {
    let id = preset.id.as_str();
    let p = &preset.params;
    match id {
        "path-independent" => {
            let r = Reader::new(id, p, &["c", "alpha"])?;
            let (c, alpha) = (r.get("c", 0.3)?, r.get("alpha", 0.0)?);
            let (ct, at) = (T::lit(c), T::lit(alpha));
            Ok(PathGenerator::new(
                format!("path-independent(c={c},alpha={alpha})"),
                c.abs(),
                alpha.abs(),
                0.0,
                0.0,
                Modulus::Zero,
                false,
                move |_, _: &PiecewiseLinearPath<T>, y, _| ct + at * y,
            )
            .with_affine_yz(true))
        }
        "clamped-current" | "clamped-running-max" => {
            let r = Reader::new(id, p, &["beta", "alpha", "cap"])?;
            let (beta, alpha, cap) = (r.get("beta", 1.0)?, r.get("alpha", 0.0)?, r.positive("cap", 1.0)?);
            let (bt, at, c) = (T::lit(beta), T::lit(alpha), T::lit(cap));
            let running = id == "clamped-running-max";
            Ok(PathGenerator::new(
                format!("{id}(beta={beta},alpha={alpha},cap={cap})"),
                beta.abs() * cap,
                alpha.abs(),
                0.0,
                beta.abs(),
                Modulus::Linear { slope: beta.abs() },
                true,
                move |t, w: &PiecewiseLinearPath<T>, y, _| {
                    let v = if running { w.max_until(t) } else { w.eval(t) };
                    bt * v.clamp_to(-c, c) + at * y
                },
            )
            .with_affine_yz(true))
        }
        _ => Err(Error::config(format!("unknown path generator preset `{id}` (known: {PATH_GENERATOR_PRESETS:?})"))),
    }
}

pub fn path_terminal_preset<T: Real>(preset: &PresetRef) -> Result<PathTerminal<T>> {
    let id = preset.id.as_str();
    let p = &preset.params;
    match id {
        "zero" => {
            Reader::new(id, p, &[])?;
            Ok(PathTerminal::new("zero", 0.0, 0.0, |_: &PiecewiseLinearPath<T>| T::zero()))
        }
        "clamped-terminal" | "clamped-running-max" => {
            let cap = Reader::new(id, p, &["cap"])?.positive("cap", 1.0)?;
            let c = T::lit(cap);
            let running = id == "clamped-running-max";
            Ok(PathTerminal::new(format!("{id}(cap={cap})"), cap, 1.0, move |w: &PiecewiseLinearPath<T>| {
                let v = if running { w.running_max() } else { w.eval(w.end()) };
                v.clamp_to(-c, c)
            }))
        }
        _ => Err(Error::config(format!("unknown path terminal preset `{id}` (known: {PATH_TERMINAL_PRESETS:?})"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn every_listed_preset_builds() {
        for id in GENERATOR_PRESETS {
            let g = generator_preset::<f64>(&PresetRef::new(*id), 3).unwrap();
            assert_eq!(g.dim(), 3);
            assert!(g.eval(0.1, &[0.1, 0.2, 0.3], 0.4, 0.5).is_finite());
        }
        for id in TERMINAL_PRESETS {
            let phi = terminal_preset::<f32>(&PresetRef::new(*id), 2).unwrap();
            assert!(phi.eval(&[0.3, -0.1]).is_finite());
        }
        for id in PATH_GENERATOR_PRESETS {
            path_generator_preset::<f64>(&PresetRef::new(*id)).unwrap();
        }
        for id in PATH_TERMINAL_PRESETS {
            path_terminal_preset::<f64>(&PresetRef::new(*id)).unwrap();
        }
    }

    #[test]
    fn rejects_unknown_ids_and_params() {
        assert!(matches!(generator_preset::<f64>(&PresetRef::new("nope"), 1), Err(Error::Configuration(_))));
        assert!(generator_preset::<f64>(&PresetRef::new("constant-driver").with("k", 1.0), 1).is_err());
        assert!(terminal_preset::<f64>(&PresetRef::new("product"), 1).is_err());
        assert!(terminal_preset::<f64>(&PresetRef::new("quad-convex").with("scale", -1.0), 1).is_err());
    }

    #[test]
    fn random_lipschitz_respects_declared_constants() {
        let g = generator_preset::<f64>(&PresetRef::new("random-lipschitz").with("seed", 11.0), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = || rng.random_range(-3.0f64..3.0);
        let base: Vec<(f64, Vec<f64>)> = (0..200).map(|_| (r().abs() / 3.0, vec![r(), r()])).collect();
        assert!(g.sample_m0_excess(&base) <= 1e-12);
        let pairs: Vec<_> = (0..200).map(|_| (r().abs(), vec![r(), r()], r(), r(), r(), r())).collect();
        assert!(g.sample_lipschitz_excess(&pairs) <= 1e-12);
        let moduli: Vec<_> = (0..200).map(|_| (r().abs(), vec![r(), r()], r().abs(), vec![r(), r()], r(), r())).collect();
        assert!(g.sample_modulus_excess(&moduli) <= 1e-12);
    }

    #[test]
    fn terminals_respect_declared_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = || rng.random_range(-8.0..8.0);
        let pts: Vec<Vec<f64>> = (0..300).map(|_| vec![r(), r()]).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = pts.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
        for id in ["exp-clamped", "clamped-identity", "tanh-sum", "zero", "constant"] {
            let phi = terminal_preset::<f64>(&PresetRef::new(id), 2).unwrap();
            assert!(phi.sample_bound_excess(&pts) <= 1e-9, "{id}");
            assert!(phi.sample_lipschitz_excess(&pairs) <= 1e-9, "{id}");
        }
    }

    #[test]
    fn expressions() {
        let c = GeneratorConstants { m0: 1.0, l_x: 0.0, l_y: 1.0, l_z: 0.0, modulus: Modulus::Zero };
        let g = generator_from_expr::<f64>("0.5 * y + t", 1, c).unwrap();
        assert_eq!(g.eval(1.0, &[0.0], 2.0, 0.0), 2.0);
        assert!(generator_from_expr::<f64>("x3", 2, c).is_err());
        let phi = terminal_from_expr::<f64>("max(x1 + x2, 0)", 2, f64::INFINITY, 1.0).unwrap();
        assert_eq!(phi.eval(&[1.0, 2.0]), 3.0);
        assert!(terminal_from_expr::<f64>("y", 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn path_presets_read_the_right_functional() {
        let w = PiecewiseLinearPath::new(vec![(0.0, 0.0), (0.5, 2.0), (1.0, -0.5)]).unwrap();
        let cur = path_generator_preset::<f64>(&PresetRef::new("clamped-current").with("cap", 10.0)).unwrap();
        let run = path_generator_preset::<f64>(&PresetRef::new("clamped-running-max").with("cap", 10.0)).unwrap();
        assert!((cur.eval(1.0, &w, 0.0, 0.0) + 0.5).abs() < 1e-12);
        assert!((run.eval(1.0, &w, 0.0, 0.0) - 2.0).abs() < 1e-12);
        let xi = path_terminal_preset::<f64>(&PresetRef::new("clamped-running-max")).unwrap();
        assert_eq!(xi.eval(&w), 1.0);
    }
}
