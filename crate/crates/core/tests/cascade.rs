use gbsde::cascade::{build_solution_paths, solve_cascade, CascadeConfig};
use gbsde::gcore::{generator_preset, terminal_preset, PresetRef, TerminalSpec, TimePartition, VolatilityBand};
use gbsde::gpde::GridConfig;
use gbsde::scenarios::{mean_and_se, ScenarioFamily};
use gbsde::{Band, Generator, Terminal};
use proptest::prelude::*;

fn band(lo: f64, hi: f64) -> Band {
    VolatilityBand::new(lo, hi).unwrap()
}

fn small() -> CascadeConfig {
    CascadeConfig { grid: GridConfig { space_nodes: 41, param_nodes: 9, ..GridConfig::default() }, ..CascadeConfig::default() }
}

fn gen(p: PresetRef, n: usize) -> Generator {
    generator_preset(&p, n).unwrap()
}

fn term(p: PresetRef, n: usize) -> Terminal {
    terminal_preset(&p, n).unwrap()
}

/// Per-control means of `K_T` and their standard errors.
fn terminal_k(cas: &gbsde::Cascade, fam: &ScenarioFamily) -> (Vec<(f64, f64)>, f64) {
    let paths = build_solution_paths(cas, fam).unwrap();
    assert!(paths.rejected.is_empty());
    let stats = (0..paths.labels.len())
        .map(|m| {
            let kt: Vec<f64> = paths.paths.iter().filter(|p| p.member == m).map(|p| *p.k.last().unwrap()).collect();
            mean_and_se(&kt)
        })
        .collect();
    (stats, paths.quadrature_error())
}

#[test]
fn k_is_a_g_martingale_when_a_constant_control_is_optimal() {
    let b = band(0.5, 1.0);
    let p = TimePartition::uniform(1.0, 2).unwrap();
    let fam = ScenarioFamily::standard(b, 1.0 / 128.0, 1.0, 64, 11).unwrap();
    // σ̄ is optimal for the first pair, σ̲ for the second
    let cases = [
        (gen(PresetRef::new("constant-driver").with("c", 0.2), 2), term(PresetRef::new("quad-convex"), 2)),
        (gen(PresetRef::new("constant-driver").with("c", 0.1), 2), term(PresetRef::new("quad-concave"), 2)),
    ];
    for (f, phi) in cases {
        let cas = solve_cascade(&f, &phi, &p, &b, &small()).unwrap();
        let (stats, quad) = terminal_k(&cas, &fam);
        let eps = |se: f64| 3.0 * se + 2.0 * quad + 1e-9;
        let best = stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let best_se = stats.iter().find(|s| s.0 == best).unwrap().1;
        assert!(best >= -eps(best_se), "{}: max mean K_T = {best}", phi.id);
        for (m, se) in &stats {
            assert!(*m <= eps(*se), "{}: mean K_T = {m}", phi.id);
        }
    }
}

#[test]
fn classical_band_has_flat_k_and_feynman_kac_values() {
    let sigma = 0.8;
    let b = band(sigma, sigma);
    let p = TimePartition::uniform(1.0, 2).unwrap();
    let alpha = 0.4;
    let c = 1.5;
    let f = gen(PresetRef::new("linear-y").with("alpha", alpha), 2);
    let cas = solve_cascade(&f, &TerminalSpec::constant(2, c), &p, &b, &small()).unwrap();
    // y' = −α σ² y backward from c
    let want = c * (alpha * sigma * sigma).exp();
    assert!((cas.y0() - want).abs() <= 1e-2 * want, "{} vs {want}", cas.y0());
    let fam = ScenarioFamily::extremes(b, 1.0 / 128.0, 1.0, 32, 4).unwrap();
    let paths = build_solution_paths(&cas, &fam).unwrap();
    let quad = paths.quadrature_error();
    for tr in &paths.paths {
        assert!(tr.k.iter().all(|k| k.abs() <= 2.0 * quad + 1e-12));
    }
}

#[test]
fn z_respects_the_ledger_on_every_path() {
    let b = band(0.5, 1.0);
    let p = TimePartition::uniform(1.0, 2).unwrap();
    let f = gen(PresetRef::new("random-lipschitz"), 2);
    let cas = solve_cascade(&f, &term(PresetRef::new("tanh-sum"), 2), &p, &b, &small()).unwrap();
    let fam = ScenarioFamily::standard(b, 1.0 / 128.0, 1.0, 16, 2).unwrap();
    let paths = build_solution_paths(&cas, &fam).unwrap();
    let dx = (1..=2).map(|k| cas.interval(k).grid.dx()).fold(0.0, f64::max);
    let bound = cas.ledger.m_z + 10.0 * dx;
    for tr in &paths.paths {
        assert!(tr.z.iter().all(|z| z.abs() <= bound), "{} path {}", tr.control, tr.path_index);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn raising_the_terminal_never_lowers_y0(eps in 1e-3f64..0.3, centre in -1.0f64..1.0, seed in 0.0f64..50.0) {
        let b = band(0.5, 1.0);
        let p = TimePartition::uniform(1.0, 2).unwrap();
        let f = gen(PresetRef::new("random-lipschitz").with("seed", seed.floor()), 2);
        let phi = term(PresetRef::new("tanh-sum"), 2);
        let inner = phi.function();
        let raised = TerminalSpec::new("tanh-sum+bump", 2, phi.bound + eps, phi.lipschitz + eps, move |x: &[f64]| {
            inner(x) + eps * (-(x[0] + x[1] - centre).powi(2)).exp()
        });
        let y = solve_cascade(&f, &phi, &p, &b, &small()).unwrap().y0();
        let y_up = solve_cascade(&f, &raised, &p, &b, &small()).unwrap().y0();
        prop_assert!(y_up >= y, "{y_up} < {y}");
    }
}
