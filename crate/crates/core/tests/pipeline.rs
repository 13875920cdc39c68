//! End-to-end checks on the simulated default scenario.

mod common;

use std::sync::OnceLock;

use tcldro::bellman::Policy;
use tcldro::dispatch::{forward_evolve, power_profile};
use tcldro::markov::{discretize, estimate_transitions, perturb_samples, sample_moments};
use tcldro::scenario::{build_inputs, dispatch, simulate, solve_method, Estimate, Inputs, MethodName, ScenarioConfig, GAMMAS};
use tcldro::thermal::{simulate_ensemble, SimOptions, TclParams};

fn fixture() -> &'static (ScenarioConfig, Estimate, Inputs) {
    static CELL: OnceLock<(ScenarioConfig, Estimate, Inputs)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ScenarioConfig::default();
        let (est, inputs) = build_inputs(&cfg).unwrap();
        (cfg, est, inputs)
    })
}

#[test]
fn one_day_of_the_default_ensemble() {
    let p = TclParams::default();
    let steps = 24 * 60;
    let run = || simulate_ensemble(&p, 1000, &vec![32.0; steps], steps, 7, &SimOptions::default()).unwrap();
    let trace = run();
    assert_eq!(trace, run());
    let cap = 1000.0 * p.p_rated;
    assert!(trace.power.iter().all(|&w| w > 0.0 && w < cap));
    let (lo, hi) = trace.power.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
    assert!(hi > lo, "aggregate power is constant");
    let duty = trace.on_count.iter().map(|&c| c as f64).sum::<f64>() / (1000.0 * steps as f64);
    assert!(duty > 0.0 && duty < 1.0);
    for (w, &k) in trace.power.iter().zip(&trace.on_count) {
        assert_eq!(*w, p.p_rated * k as f64);
        assert!(k <= 1000);
    }
}

#[test]
fn noiseless_devices_stay_near_the_deadband() {
    let p = TclParams {
        kappa_std: 0.0,
        ..TclParams::default()
    };
    let theta_a = 32.0;
    let steps = 600;
    let trace = simulate_ensemble(
        &p,
        50,
        &vec![theta_a; steps],
        steps,
        3,
        &SimOptions {
            record_temperatures: true,
            initial: None,
        },
    )
    .unwrap();
    let (band_lo, band_hi) = (p.theta_set - p.delta, p.theta_set + p.delta);
    let one_minus = 1.0 - p.decay();
    // Largest single-step move from anywhere near the band.
    let eps = [band_lo - 1.0, band_hi + 1.0]
        .iter()
        .flat_map(|&th| [0.0, 1.0].map(|u| one_minus * (theta_a - p.aleph * p.r * p.p_rated * u - th).abs()))
        .fold(0.0, f64::max);
    for s in 0..steps {
        for d in 0..50 {
            let th = trace.temperature(s, d).unwrap();
            assert!(th >= band_lo - eps && th <= band_hi + eps, "step {s} device {d}: {th}");
        }
    }
}

#[test]
fn every_state_is_visited() {
    let (cfg, est, _) = fixture();
    for s in 0..cfg.model.states {
        assert!(est.states.contains(&s), "state {s} never visited");
    }
}

#[test]
fn chain_at_the_simulation_step_is_diagonal_heavy() {
    // Hourly samples of the aggregate are nearly independent, so the dark
    // diagonal only shows at the simulator's own resolution.
    let (cfg, _, _) = fixture();
    let trace = simulate(cfg, false).unwrap();
    let (_, states) = discretize(&trace.power, cfg.model.states).unwrap();
    let m = estimate_transitions(&states, cfg.model.states, 0.0).unwrap();
    for b in 0..m.n() {
        let col = m.column(b);
        let argmax = (0..m.n()).max_by(|&x, &y| col[x].total_cmp(&col[y])).unwrap();
        assert!(argmax.abs_diff(b) <= 1, "column {b} peaks at {argmax}");
        assert!(col[b] >= 0.5, "column {b}: diagonal {}", col[b]);
    }
}

#[test]
fn perturbed_set_moments() {
    let (_, est, inputs) = fixture();
    let nominal = &est.nominal;
    let mean = &inputs.moments.mean;
    let n = nominal.n();
    for a in 0..n {
        for b in 0..n {
            let p = nominal.get(a, b);
            if p > 0.0 {
                assert!((mean.get(a, b) - p).abs() <= 0.02);
            }
        }
    }
    // Uniform multiplicative noise of width 0.15 has variance (0.15 p)^2 / 3
    // before renormalization, which only matters for small entries. To first
    // order the renormalized entry has variance
    // p^2 s^2 ((1 - p)^2 + sum_{b != a} x_b^2).
    let s2 = 0.15f64.powi(2) / 3.0;
    let mut checked = 0;
    for b in 0..n {
        let col = nominal.column(b);
        let others: f64 = col.iter().map(|x| x * x).sum();
        for a in 0..n {
            let p = col[a];
            if p == 0.0 {
                continue;
            }
            let v = inputs.moments.variance.get(a, b);
            if p <= 0.15 {
                let raw = p * p * s2;
                assert!(v >= raw / 2.0 && v <= raw * 2.0, "({a},{b}) p={p}: {v} vs {raw}");
                checked += 1;
            }
            let delta = p * p * s2 * ((1.0 - p).powi(2) + others - p * p);
            if delta > 0.0 {
                assert!(v >= delta / 1.5 && v <= delta * 1.5, "({a},{b}) p={p}: {v} vs {delta}");
            }
        }
    }
    assert!(checked > 0);
    let flat = sample_moments(&perturb_samples(nominal, 0.0, 10, 1).unwrap()).unwrap();
    assert!(flat.variance.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn random_policies_keep_the_simplex() {
    let (_, _, inputs) = fixture();
    let mut rng = common::rng(51);
    for _ in 0..20 {
        let p = common::random_policy(&mut rng, inputs.moments.mean.matrix(), 24);
        let rho0 = common::random_simplex(&mut rng, 8);
        for rho in forward_evolve(&rho0, &p).unwrap() {
            assert!(rho.iter().all(|&r| r >= -1e-12));
            assert!((rho.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    let ident = Policy::new(vec![tcldro::matrix::StochasticMatrix::identity(8); 5]).unwrap();
    let rho0 = common::random_simplex(&mut rng, 8);
    let path = forward_evolve(&rho0, &ident).unwrap();
    assert!(path.iter().all(|r| r == &rho0));
    let uniform = vec![vec![0.125; 8]];
    let mean = inputs.space.p_rated_state.iter().sum::<f64>() / 8.0;
    assert!((power_profile(&uniform, &inputs.space).unwrap()[0] - mean).abs() < 1e-9);
}

fn profile(inputs: &Inputs, cfg: &ScenarioConfig, name: MethodName, gamma: f64) -> tcldro::dispatch::DispatchResult {
    let mut m = cfg.method.clone();
    m.name = name;
    m.gamma = gamma;
    dispatch(inputs, &solve_method(inputs, &m).unwrap()).unwrap().0
}

#[test]
fn flexibility_shrinks_as_control_gets_expensive() {
    let (cfg, _, inputs) = fixture();
    let default = Policy::new(vec![inputs.moments.mean.clone(); cfg.model.horizon]).unwrap();
    let base = power_profile(&forward_evolve(&inputs.rho0, &default).unwrap(), &inputs.space).unwrap();
    let flex = |gamma: f64| {
        let p = profile(inputs, cfg, MethodName::Standard, gamma).power;
        p.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64
    };
    let (small, large) = (flex(0.05), flex(1.0));
    assert!(large < small, "{large} >= {small}");
    assert!(flex(10.0) < large);
}

#[test]
fn robust_policy_has_the_better_worst_sample() {
    let (cfg, _, inputs) = fixture();
    for gamma in GAMMAS {
        let std = profile(inputs, cfg, MethodName::Standard, gamma);
        let dro = profile(inputs, cfg, MethodName::Dro, gamma);
        assert!(dro.oos_worst.unwrap() <= std.oos_worst.unwrap(), "gamma {gamma}");
    }
}
