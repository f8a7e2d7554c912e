//! Acceptance suite. Every check prints one `PASS`/`FAIL` line, then asserts.
//!
//! Run with `cargo test -p gbsde-cli --test acceptance`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use gbsde::analysis::{
    approximation_pipeline, doleans_check, girsanov_check, linearization_check, linearization_coefficients, stability_sweep,
    PipelineConfig,
};
use gbsde::cascade::{build_solution_paths, generator_arguments, residual_refinement, solve_cascade, CascadeConfig};
use gbsde::gcore::{
    derivative_bound_ledger, generator_preset, path_generator_preset, path_terminal_preset, terminal_preset, PresetRef,
    TimePartition, VolatilityBand, GENERATOR_PRESETS, TERMINAL_PRESETS,
};
use gbsde::gpde::{conditional_g_expectation, solve_g_heat, GridConfig, SchemeConfig, SpaceGrid};
use gbsde::scenarios::{upper_expectation, ScenarioFamily, ScenarioPath, VolatilityControl};
use gbsde::{Band, Generator, Terminal};
use gbsde_cli::commands::qv_band_violations;
use gbsde_cli::{run, Command, ExperimentConfig, Options};

// one core: timings are only meaningful when the checks run one at a time
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Printed straight to stdout so the line survives output capture.
fn verdict(name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{tag} {name}: {detail}");
    let _ = out.flush();
}

fn band(lo: f64, hi: f64) -> Band {
    VolatilityBand::new(lo, hi).unwrap()
}

/// `E[g(s W)]` for standard normal `W` by composite Simpson on `[−12, 12]`.
fn normal_expectation(s: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (a, b, n) = (-12.0, 12.0, 24_000);
    let h = (b - a) / n as f64;
    let dens = |w: f64| (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let f = |i: usize| {
        let w = a + i as f64 * h;
        g(s * w) * dens(w)
    };
    let mut acc = f(0) + f(n);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    acc * h / 3.0
}

fn generator(id: &str, dim: usize) -> Generator {
    generator_preset(&PresetRef::new(id), dim).unwrap()
}

fn terminal(id: &str, dim: usize) -> Terminal {
    terminal_preset(&PresetRef::new(id), dim).unwrap()
}

#[test]
fn g_heat_closed_forms() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let grid = SpaceGrid::new(-6.0, 6.0, 401).unwrap();
    let scheme = SchemeConfig { cfl: 0.4, ..SchemeConfig::default() };
    let start = Instant::now();
    let up = solve_g_heat(&terminal("quad-convex", 1), &b, 1.0, &grid, &scheme).unwrap();
    let down = solve_g_heat(&terminal("quad-concave", 1), &b, 1.0, &grid, &scheme).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let u_up = up.sample(1.0, &[], 0.0).unwrap().u;
    let u_down = down.sample(1.0, &[], 0.0).unwrap().u;
    // convex data pick σ̄, concave data σ̲
    let want_up = normal_expectation(1.0, |x| x * x);
    let want_down = -normal_expectation(0.5, |x| x * x);
    let pass = (u_up - want_up).abs() <= 5e-3 && (u_down - want_down).abs() <= 5e-3 && secs <= 10.0;
    verdict(
        "g-heat closed forms",
        pass,
        format!("u_x² = {u_up:.6} (oracle {want_up:.6}), u_−x² = {u_down:.6} (oracle {want_down:.6}), {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn classical_degeneration() {
    let _g = serial();
    let b = band(1.0, 1.0);
    let grid = SpaceGrid::new(-6.0, 6.0, 401).unwrap();
    let u = solve_g_heat(&terminal("exp-clamped", 1), &b, 1.0, &grid, &SchemeConfig::default())
        .unwrap()
        .sample(1.0, &[], 0.0)
        .unwrap()
        .u;
    let want = normal_expectation(1.0, |x| x.clamp(-5.0, 5.0).exp());
    let heat_ok = (u - want).abs() <= 1e-2 && (u - 0.5f64.exp()).abs() <= 1e-2;

    // f = αy, φ ≡ 1: integrate y' = α σ² y backwards in time with RK4
    let alpha = 0.5;
    let f = generator_preset(&PresetRef::new("linear-y").with("alpha", alpha), 2).unwrap();
    let phi = terminal("constant", 2);
    let cas = solve_cascade(&f, &phi, &TimePartition::uniform(1.0, 2).unwrap(), &b, &CascadeConfig::default()).unwrap();
    let (mut y, n) = (1.0f64, 1000);
    let h = 1.0 / n as f64;
    for _ in 0..n {
        let k1 = alpha * y;
        let k2 = alpha * (y + 0.5 * h * k1);
        let k3 = alpha * (y + 0.5 * h * k2);
        let k4 = alpha * (y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let rel = (cas.y0() - y).abs() / y;
    let pass = heat_ok && rel <= 1e-2;
    verdict(
        "classical degeneration",
        pass,
        format!("u(1,0) = {u:.6} (oracle {want:.6}), linear-y Y₀ = {:.6} vs ODE {y:.6} (rel {rel:.2e})", cas.y0()),
    );
    assert!(pass);
}

#[test]
fn cascade_constant_driver() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let c = 0.3;
    let f = generator_preset(&PresetRef::new("constant-driver").with("c", c), 2).unwrap();
    let cas = solve_cascade(&f, &terminal("zero", 2), &TimePartition::uniform(1.0, 2).unwrap(), &b, &CascadeConfig::default())
        .unwrap();
    let family = ScenarioFamily::standard(b, 1.0 / 256.0, 1.0, 64, 5).unwrap();
    let paths = build_solution_paths(&cas, &family).unwrap();
    let y0_want = b.var_hi() * c * 1.0;
    let inc = paths.max_k_increase();
    let quad = paths.quadrature_error();
    let lo = VolatilityControl::Constant { sigma: 0.5 }.label();
    let m = paths.labels.iter().position(|l| *l == lo).unwrap();
    let kt: Vec<f64> = paths.paths.iter().filter(|p| p.member == m).map(|p| *p.k.last().unwrap()).collect();
    let kt_mean = kt.iter().sum::<f64>() / kt.len() as f64;
    let kt_want = c * (b.var_lo() - b.var_hi()) * 1.0;
    let pass = (cas.y0() - y0_want).abs() <= 1e-2 && inc <= 2.0 * quad && (kt_mean - kt_want).abs() <= 2e-2;
    verdict(
        "cascade constant driver",
        pass,
        format!(
            "Y₀ = {:.6} (oracle {y0_want}), max K increase {inc:.2e} ≤ {:.2e}, K_T(σ̲) = {kt_mean:.6} (oracle {kt_want})",
            cas.y0(),
            2.0 * quad
        ),
    );
    assert!(pass);
}

#[test]
fn upper_expectation_oracles() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let t = 1.0;
    let controls = vec![
        VolatilityControl::Constant { sigma: 0.5 },
        VolatilityControl::Constant { sigma: 1.0 },
        VolatilityControl::BangBang { levels: vec![0.5, 1.0], switch_times: vec![0.5] },
        VolatilityControl::BangBang { levels: vec![1.0, 0.5], switch_times: vec![0.5] },
        VolatilityControl::PiecewiseRandom { seed: 3, hold: 10 },
    ];
    // 10⁵ paths in total
    let family = ScenarioFamily::from_controls(b, 1e-3, t, controls, 20_000, 17).unwrap();
    let sq = upper_expectation(&|p: &ScenarioPath| p.terminal().powi(2), &family).unwrap();
    let neg = upper_expectation(&|p: &ScenarioPath| -p.terminal().powi(2), &family).unwrap();
    let partition = TimePartition::uniform(t, 2).unwrap();
    let pde = |id: &str| {
        // a fine stitching axis keeps the interpolation error on quadratics small
        let grid = GridConfig { param_nodes: 101, ..GridConfig::default() };
        conditional_g_expectation(&terminal(id, 2), &partition, 0, &b, &grid).unwrap().scalar().unwrap()
    };
    let (pde_sq, pde_neg) = (pde("quad-convex"), pde("quad-concave"));
    let (want_sq, want_neg) = (normal_expectation(1.0, |x| x * x) * t, -normal_expectation(0.5, |x| x * x) * t);
    let ok_sq = (sq.estimate - want_sq).abs() <= 3.0 * sq.std_err && sq.argmax_control() == "constant(1)";
    let ok_neg = (neg.estimate - want_neg).abs() <= 3.0 * neg.std_err && neg.argmax_control() == "constant(0.5)";
    let ok_pde = (sq.estimate - pde_sq).abs() <= 3.0 * sq.std_err + 5e-3 && (neg.estimate - pde_neg).abs() <= 3.0 * neg.std_err + 5e-3;
    let pass = ok_sq && ok_neg && ok_pde;
    verdict(
        "upper-expectation oracles",
        pass,
        format!(
            "Ê[B²] = {:.4} ± {:.4} by {} (oracle {want_sq:.4}, pde {pde_sq:.4}); Ê[−B²] = {:.4} ± {:.4} by {} (oracle {want_neg:.4}, pde {pde_neg:.4})",
            sq.estimate,
            sq.std_err,
            sq.argmax_control(),
            neg.estimate,
            neg.std_err,
            neg.argmax_control()
        ),
    );
    assert!(pass);
}

#[test]
fn quadratic_variation_band() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let family = ScenarioFamily::standard(b, 1e-3, 1.0, 200, 23).unwrap();
    let mut bad = 0;
    let mut paths = 0;
    for i in 0..family.members.len() {
        let v = family.map_member(i, &|p: &ScenarioPath| qv_band_violations(p, &b)).unwrap();
        paths += v.len();
        bad += v.iter().sum::<usize>();
    }
    let pass = bad == 0;
    verdict("quadratic-variation band", pass, format!("{bad} violations over {paths} paths and all dyadic windows"));
    assert!(pass);
}

#[test]
fn residual_refinement_decreases() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let cas = solve_cascade(
        &generator("random-lipschitz", 2),
        &terminal("tanh-sum", 2),
        &TimePartition::uniform(1.0, 2).unwrap(),
        &b,
        &CascadeConfig::default(),
    )
    .unwrap();
    let family = ScenarioFamily::standard(b, 1.0 / 4096.0, 1.0, 16, 9).unwrap();
    let levels = residual_refinement(&cas, &family, 4).unwrap();
    let max: Vec<f64> = levels.iter().map(|r| r.max).collect();
    let last = *max.last().unwrap();
    let pass = max.windows(2).all(|w| w[1] < w[0]) && last <= 5e-2;
    verdict("residual refinement", pass, format!("max residual by dt = 1/512 … 1/4096: {max:.4?}"));
    assert!(pass);
}

#[test]
fn derivative_ledger() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let one = derivative_bound_ledger(1.0, 0.0, 1.0, &band(1.0, 1.0), &TimePartition::uniform(1.0, 1).unwrap()).unwrap();
    let two = derivative_bound_ledger(1.0, 1.0, 1.0, &band(1.0, 1.0), &TimePartition::uniform(1.0, 2).unwrap()).unwrap();
    let e = std::f64::consts::E;
    let hand = [(one.bounds[0], e), (two.bounds[1], 2.0 * 0.5f64.exp() - 1.0), (two.bounds[0], 2.0 * 0.5f64.exp() * 0.5f64.exp() - 1.0)];
    let ledger_ok = hand.iter().all(|(v, w)| (v - w).abs() <= 1e-12);

    let partition = TimePartition::uniform(1.0, 2).unwrap();
    let mut worst = (f64::NEG_INFINITY, String::new());
    for g in GENERATOR_PRESETS {
        for t in TERMINAL_PRESETS {
            let cas = solve_cascade(&generator(g, 2), &terminal(t, 2), &partition, &b, &CascadeConfig::default()).unwrap();
            for c in cas.derivative_checks() {
                let excess = c.max_interior_du - c.ledger_bound - 10.0 * c.dx;
                if excess > worst.0 {
                    worst = (excess, format!("{g} × {t}, interval {}", c.interval));
                }
            }
        }
    }
    let pass = ledger_ok && worst.0 <= 0.0;
    verdict(
        "derivative ledger",
        pass,
        format!(
            "ledger {:?} vs hand values; worst max|Du| − (L^k + 10dx) = {:.3e} ({})",
            hand.map(|(v, _)| v),
            worst.0,
            worst.1
        ),
    );
    assert!(pass);
}

#[test]
fn girsanov_and_doleans() {
    let _g = serial();
    let family = ScenarioFamily::standard(band(0.5, 1.0), 1.0 / 256.0, 1.0, 2000, 31).unwrap();
    let z = |p: &ScenarioPath| vec![1.0; p.times.len()];
    let d = doleans_check(&family, &z).unwrap();
    let g = girsanov_check(&family, &z).unwrap();
    let failed: Vec<&str> = d.checks.iter().chain(&g.checks).filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let pass = failed.is_empty() && g.qv_identical;
    verdict(
        "Girsanov and Doléans exponential",
        pass,
        format!(
            "QV identical: {}, Ê[E−1] = {:.4}, Ê[1−E] = {:.4}, max SE {:.4}, failed {failed:?}",
            g.qv_identical, d.upper_minus_one, d.upper_one_minus, d.max_std_err
        ),
    );
    assert!(pass);
}

#[test]
fn linearization_bounds() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let partition = TimePartition::uniform(1.0, 2).unwrap();
    let family = ScenarioFamily::standard(b, 1.0 / 256.0, 1.0, 32, 41).unwrap();
    let eps = 1e-3;
    let cfg = CascadeConfig::default();
    let pair = |f: &Generator, phi: &Terminal| {
        let c1 = solve_cascade(f, phi, &partition, &b, &cfg).unwrap();
        let c2 = solve_cascade(f, &phi.shifted(0.05), &partition, &b, &cfg).unwrap();
        let (p1, p2) = (build_solution_paths(&c1, &family).unwrap(), build_solution_paths(&c2, &family).unwrap());
        (c1, c2, p1, p2)
    };
    let (c1, c2, p1, p2) = pair(&generator("random-lipschitz", 2), &terminal("tanh-sum", 2));
    let r = linearization_check((&c1, &p1), (&c2, &p2), eps).unwrap();
    let bounds_ok = r.checks.iter().all(|c| c.pass);

    let alpha = 0.7;
    let lin = generator_preset(&PresetRef::new("linear-y").with("alpha", alpha), 2).unwrap();
    let (l1, l2, q1, q2) = pair(&lin, &terminal("clamped-identity", 2));
    let index: HashMap<(usize, u64), _> = q2.paths.iter().map(|p| ((p.member, p.path_index), p)).collect();
    let (mut dev, mut active) = (0.0f64, 0usize);
    for p in &q1.paths {
        let q = index[&(p.member, p.path_index)];
        let x = generator_arguments(&l1, &q1.times, &p.b).unwrap();
        let s = linearization_coefficients(p, q, &q1.times, &x, &l1.generator, &l2.generator, eps);
        for (j, a) in s.a.iter().enumerate() {
            if (p.y[j] - q.y[j]).abs() >= 2.0 * eps {
                dev = dev.max((a - alpha).abs());
                active += 1;
            }
        }
    }
    let pass = bounds_ok && active > 0 && dev <= 1e-10;
    verdict(
        "linearization bounds",
        pass,
        format!(
            "{} points, excess (â, b̂, m̂) = ({:.2e}, {:.2e}, {:.2e}); linear-y max |â − α| = {dev:.2e} over {active} points",
            r.points, r.a_excess, r.b_excess, r.m_excess
        ),
    );
    assert!(pass);
}

#[test]
fn stability_under_terminal_shifts() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let cfg = CascadeConfig::default();
    let cas = solve_cascade(
        &generator("random-lipschitz", 2),
        &terminal("tanh-sum", 2),
        &TimePartition::uniform(1.0, 2).unwrap(),
        &b,
        &cfg,
    )
    .unwrap();
    let family = ScenarioFamily::standard(b, 1.0 / 256.0, 1.0, 32, 43).unwrap();
    let paths = build_solution_paths(&cas, &family).unwrap();
    let r = stability_sweep(&cas, &paths, &cfg, &family, &[0.1, 0.05, 0.025], 1e-2).unwrap();
    let y: Vec<f64> = r.reports.iter().map(|s| s.sup_y_gap).collect();
    let z: Vec<f64> = r.reports.iter().map(|s| s.z_gap).collect();
    let pass = r.checks.iter().all(|c| c.pass) && z.windows(2).all(|w| w[1] < w[0]);
    verdict(
        "stability under terminal shifts",
        pass,
        format!(
            "factor {:.4}, sup-Y gaps {y:.5?}, Z gaps [{}]",
            r.factor,
            z.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn approximation_pipeline_levels() {
    let _g = serial();
    let b = band(0.5, 1.0);
    let h = path_generator_preset(&PresetRef::new("clamped-running-max")).unwrap();
    let xi = path_terminal_preset(&PresetRef::new("clamped-running-max")).unwrap();
    let family = ScenarioFamily::standard(b, 1.0 / 1024.0, 0.25, 200, 7).unwrap();
    let r = approximation_pipeline(&h, &xi, &b, &family, &PipelineConfig::default()).unwrap();
    let gaps: Vec<f64> = r.levels.iter().filter_map(|l| l.y0_gap).collect();
    let means: Vec<f64> = r.levels.iter().map(|l| l.embedding_mean).collect();
    let first: Vec<f64> = means.windows(2).map(|w| w[0] / w[1]).collect();
    let gaps_ok = gaps.windows(2).all(|w| w[1] <= w[0]);
    let ratios_ok = r.embedding_ratios.iter().all(|&q| q >= std::f64::consts::SQRT_2);
    let pass = gaps_ok && ratios_ok;
    verdict(
        "approximation pipeline",
        pass,
        format!(
            "Y₀ gaps {gaps:.5?}; third-moment embedding ratios {:.3?} (≥ √2); first-moment ratios {first:.3?} (reported)",
            r.embedding_ratios
        ),
    );
    assert!(pass);
}

#[test]
fn verify_is_deterministic() {
    let _g = serial();
    let cfg = ExperimentConfig { seed: 2024, ..ExperimentConfig::default() };
    let exp = cfg.validate().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let start = Instant::now();
    let reports: Vec<_> = dirs
        .iter()
        .map(|d| {
            run(Command::Verify, &exp, &Options { out: d.path().to_path_buf(), strict: false }).unwrap();
            std::fs::read(d.path().join("report.json")).unwrap()
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let parsed: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    let pass = reports[0] == reports[1];
    verdict(
        "verify determinism",
        pass,
        format!("{} bytes, identical: {}, report pass: {}, two runs in {secs:.1} s", reports[0].len(), reports[0] == reports[1], parsed["pass"]),
    );
    assert!(pass);
}
