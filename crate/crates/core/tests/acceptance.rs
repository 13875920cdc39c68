//! Acceptance run: one PASS/FAIL line per criterion on the default scenario
//! and on randomized oracle instances. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use tcldro::bellman::{self, hybrid_policy, Policy, SolveConfig, Terminal, VarianceScaling};
use tcldro::dispatch::{expected_cost, forward_evolve, power_profile, stage_kl, CostModel, SIMPLEX_TOL};
use tcldro::markov::{MomentMatrices, Provenance, SampleSet};
use tcldro::matrix::SquareMatrix;
use tcldro::moment::{self, worst_case_neglog_dual, worst_case_neglog_primal, MomentAmbiguity};
use tcldro::quantiles::{bound_matrices, chi2_cdf, chi2_quantile, t_cdf, t_quantile, BoundMatrices, VarianceRule};
use tcldro::scenario::{build_inputs, dispatch, run_table, solve_method, Inputs, MethodConfig, MethodName, ScenarioConfig, Sweep, GAMMAS};
use tcldro::wasserstein::{self, candidate_points, inner_sup, l1, lambda_search, weighted_loss, WassersteinMode};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn base() -> MethodConfig {
    ScenarioConfig::default().method
}

fn obj(s: &Sweep, g: f64, r: f64, c: f64) -> f64 {
    s.get(g, r, c).expect("cell present").objective
}

fn criterion_1(inputs: &Inputs) -> Check {
    let s = run_table(inputs, &base(), 2, &GAMMAS).map_err(e2s)?;
    let etas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut gaps = Vec::new();
    for &g in &GAMMAS {
        for w in etas.windows(2) {
            let (a, b) = (obj(&s, g, 0.0, w[0]), obj(&s, g, 0.0, w[1]));
            ensure(b <= a, || format!("gamma={g}: cost rises from eta={} ({a}) to eta={} ({b})", w[0], w[1]))?;
        }
        gaps.push(obj(&s, g, 0.0, 0.0) - obj(&s, g, 0.0, 1.0));
    }
    ensure(gaps.windows(2).all(|w| w[1] > w[0]), || format!("eta gap not increasing in gamma: {gaps:?}"))?;
    let slowest = s.cells.iter().map(|c| c.seconds).fold(0.0, f64::max);
    ensure(s.seconds <= 10.0, || format!("sweep took {:.2} s", s.seconds))?;
    ensure(slowest <= 0.1, || format!("slowest solve {slowest:.4} s"))?;
    Ok(format!(
        "gaps {:?}, sweep {:.3} s, slowest solve {:.5} s",
        gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>(),
        s.seconds,
        slowest
    ))
}

fn criterion_2(inputs: &Inputs) -> Check {
    let s = run_table(inputs, &base(), 3, &GAMMAS).map_err(e2s)?;
    let levels = [0.1, 0.01, 0.001];
    for &g in &GAMMAS {
        for &fixed in &levels {
            for w in levels.windows(2) {
                let (a, b) = (obj(&s, g, w[0], fixed), obj(&s, g, w[1], fixed));
                ensure(b >= a, || format!("gamma={g} varsigma={fixed}: xi {}->{} drops {a}->{b}", w[0], w[1]))?;
                let (a, b) = (obj(&s, g, fixed, w[0]), obj(&s, g, fixed, w[1]));
                ensure(b >= a, || format!("gamma={g} xi={fixed}: varsigma {}->{} drops {a}->{b}", w[0], w[1]))?;
            }
        }
    }
    let rel: Vec<f64> = GAMMAS
        .iter()
        .map(|&g| {
            let lo = obj(&s, g, 0.1, 0.1);
            (obj(&s, g, 0.001, 0.001) - lo) / lo.abs()
        })
        .collect();
    ensure(rel.windows(2).all(|w| w[1] > w[0]), || format!("relative increase not growing in gamma: {rel:?}"))?;
    Ok(format!("relative increases {:?}", rel.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>()))
}

fn criterion_3(inputs: &Inputs) -> Check {
    let s = run_table(inputs, &base(), 4, &GAMMAS).map_err(e2s)?;
    let (bs, cs) = ([0.05, 0.1, 0.2], [1.5, 2.0, 3.0]);
    for &g in &GAMMAS {
        for &c in &cs {
            for w in bs.windows(2) {
                let (x, y) = (obj(&s, g, w[0], c), obj(&s, g, w[1], c));
                ensure(y >= x, || format!("gamma={g} c={c}: b {}->{} drops {x}->{y}", w[0], w[1]))?;
            }
        }
        for &b in &bs {
            for w in cs.windows(2) {
                let (x, y) = (obj(&s, g, b, w[0]), obj(&s, g, b, w[1]));
                ensure(y >= x, || format!("gamma={g} b={b}: c {}->{} drops {x}->{y}", w[0], w[1]))?;
            }
        }
    }
    let slowest = s.cells.iter().map(|c| c.seconds).fold(0.0, f64::max);
    ensure(slowest <= 120.0, || format!("slowest moment solve {slowest:.1} s"))?;
    Ok(format!("27 cells in {:.2} s, slowest solve {slowest:.3} s", s.seconds))
}

fn criterion_4(inputs: &Inputs) -> Check {
    let s = run_table(inputs, &base(), 5, &GAMMAS).map_err(e2s)?;
    let psis = [0.5, 1.0, 2.0];
    for &g in &GAMMAS {
        for w in psis.windows(2) {
            let (a, b) = (obj(&s, g, 0.0, w[0]), obj(&s, g, 0.0, w[1]));
            ensure(b >= a, || format!("gamma={g}: psi {}->{} drops {a}->{b}", w[0], w[1]))?;
        }
    }
    let slowest = s.cells.iter().map(|c| c.seconds).fold(0.0, f64::max);
    ensure(slowest <= 300.0, || format!("slowest Wasserstein solve {slowest:.1} s"))?;
    Ok(format!("sweep {:.2} s, slowest solve {slowest:.3} s", s.seconds))
}

fn criterion_5() -> Check {
    let mut rng = common::rng(5);
    let mut worst_md = 0.0f64;
    let mut worst_rand = f64::NEG_INFINITY;
    for inst in 0..20 {
        let n = rng.gen_range(2..=3);
        let horizon = rng.gen_range(1..=3);
        let nominal = common::random_stochastic(&mut rng, n, 0.3);
        let u = common::random_utility(&mut rng, horizon, n);
        let cfg = SolveConfig {
            gamma: rng.gen_range(0.2..2.0),
            terminal: Terminal::Utility,
        };
        let rho0 = common::random_interior(&mut rng, n);
        let zt = bellman::z_term_standard(&nominal);
        let (_, policy) = bellman::solve(&zt, &u, &cfg).map_err(e2s)?;
        let j = common::direct_cost(&policy, &zt, &u, &cfg, &rho0);
        let j_lib = expected_cost(&policy, &CostModel::single(&zt), &u, &cfg, &rho0).map_err(e2s)?;
        ensure((j - j_lib).abs() <= 1e-10, || format!("instance {inst}: evaluator mismatch {j} vs {j_lib}"))?;
        let (_, j_md) = common::mirror_descent(&zt, &u, &cfg, &rho0, 3000);
        let d = (j - j_md).abs();
        worst_md = worst_md.max(d);
        ensure(d <= 1e-4, || format!("instance {inst}: closed form {j} vs mirror descent {j_md}"))?;
        for _ in 0..10_000 {
            let p = common::random_policy(&mut rng, nominal.matrix(), horizon);
            let jr = common::direct_cost(&p, &zt, &u, &cfg, &rho0);
            worst_rand = worst_rand.max(j - jr);
            ensure(jr >= j - 1e-9, || format!("instance {inst}: random policy {jr} beats {j}"))?;
        }
    }
    Ok(format!("max |J - J_md| = {worst_md:.2e}, max random advantage = {worst_rand:.2e}"))
}

fn criterion_6(inputs: &Inputs) -> Check {
    let u = &inputs.utility;
    let cfg = SolveConfig::new(0.1);
    let moments = &inputs.moments;
    let n = moments.mean.n();

    let zero_var = MomentMatrices {
        mean: moments.mean.clone(),
        variance: SquareMatrix::zeros(n),
        count: moments.count,
    };
    let (_, p_std) = bellman::solve(&bellman::z_term_standard(&moments.mean), u, &cfg).map_err(e2s)?;
    let z_sto0 = bellman::z_term_stochastic(&zero_var, cfg.gamma, VarianceScaling::Linear).map_err(e2s)?;
    let (_, p_sto0) = bellman::solve(&z_sto0, u, &cfg).map_err(e2s)?;
    let d1 = p_std.max_abs_diff(&p_sto0);
    ensure(d1 <= 1e-12, || format!("zero variance stochastic vs standard differ by {d1:e}"))?;

    let z_sto = bellman::z_term_stochastic(moments, cfg.gamma, VarianceScaling::Linear).map_err(e2s)?;
    let z_dro = bellman::z_term_dro(&BoundMatrices::degenerate(moments), cfg.gamma, VarianceScaling::Linear).map_err(e2s)?;
    let (_, p_sto) = bellman::solve(&z_sto, u, &cfg).map_err(e2s)?;
    let (_, p_dro0) = bellman::solve(&z_dro, u, &cfg).map_err(e2s)?;
    let d2 = p_sto.max_abs_diff(&p_dro0);
    ensure(d2 <= 1e-9, || format!("collapsed bounds DRO vs stochastic differ by {d2:e}"))?;

    let bounds = bound_matrices(moments, 0.1, 0.001, VarianceRule::Literal).map_err(e2s)?;
    let (_, p_wc) = bellman::solve(&bellman::z_term_dro(&bounds, cfg.gamma, VarianceScaling::Linear).map_err(e2s)?, u, &cfg)
        .map_err(e2s)?;
    let h0 = hybrid_policy(&p_wc, &p_sto, 0.0).map_err(e2s)?;
    let h1 = hybrid_policy(&p_wc, &p_sto, 1.0).map_err(e2s)?;
    ensure(h0 == p_wc && h1 == p_sto, || "hybrid endpoints differ from parents".into())?;

    let sol = moment::solve_moment_mdp(moments, 0.0, 0.0, 201, u, &cfg, &inputs.rho0).map_err(e2s)?;
    let d4 = sol.policy.max_abs_diff(&p_std);
    ensure(d4 <= 1e-9, || format!("degenerate moment set differs from standard by {d4:e}"))?;

    let copies = SampleSet::new(vec![moments.mean.clone(); 50], Provenance::Observed).map_err(e2s)?;
    let w = wasserstein::solve_wasserstein_mdp(&copies, 0.0, u, &cfg, WassersteinMode::Weighted, &inputs.rho0)
        .map_err(e2s)?;
    let zt = bellman::z_term_standard(&moments.mean);
    let j_std = expected_cost(&p_std, &CostModel::single(&zt), u, &cfg, &inputs.rho0).map_err(e2s)?;
    let d5 = w.policy.max_abs_diff(&p_std);
    let d5j = (w.objective - j_std).abs() / j_std.abs().max(1.0);
    ensure(d5 <= 1e-6 && d5j <= 1e-6, || format!("psi=0 Wasserstein vs standard: policy {d5:e}, objective {d5j:e}"))?;
    Ok(format!("diffs {d1:.1e} / {d2:.1e} / exact / {d4:.1e} / {d5:.1e}"))
}

fn criterion_7() -> Check {
    let mut rng = common::rng(7);
    let mut gap = 0.0f64;
    let mut slack = f64::INFINITY;
    for i in 0..100 {
        let m = rng.gen_range(0.02..0.98);
        let sigma2 = 10f64.powf(rng.gen_range(-6.0..-2.0));
        let b = rng.gen_range(0.0..0.2);
        let c = rng.gen_range(0.5..3.0);
        let amb = MomentAmbiguity::new(m, sigma2, b, c, 201).map_err(e2s)?;
        let p = worst_case_neglog_primal(&amb).map_err(e2s)?;
        let d = worst_case_neglog_dual(&amb).map_err(e2s)?;
        let g = (p.value - d.value).abs();
        let s = d.min_slack(&amb);
        gap = gap.max(g);
        slack = slack.min(s);
        ensure(g <= 1e-6, || format!("instance {i}: primal {} dual {}", p.value, d.value))?;
        ensure(s >= -1e-8, || format!("instance {i}: dual residual {s:e}"))?;
    }
    Ok(format!("max gap {gap:.2e}, min dual slack {slack:.2e}"))
}

fn criterion_8() -> Check {
    let mut rng = common::rng(8);
    let mut excess = f64::NEG_INFINITY;
    for col in 0..50 {
        let k = rng.gen_range(2..=5);
        let (lo, hi, y) = common::random_box(&mut rng, k);
        let weights = common::random_simplex(&mut rng, k);
        let lambda = 10f64.powf(rng.gen_range(-2.0..2.0));
        let cands = candidate_points(&lo, &hi, &y).map_err(e2s)?;
        let (best, _) = inner_sup(lambda, &y, &cands, &weights);
        for _ in 0..1000 {
            let v = if rng.gen_bool(0.5) {
                common::random_in_box_simplex(&mut rng, &lo, &hi).ok_or("sampler failed")?
            } else {
                common::random_mixture(&mut rng, &cands)
            };
            let g = weighted_loss(&weights, &v) - lambda * l1(&v, &y);
            excess = excess.max(g - best);
            ensure(g <= best + 1e-9, || format!("column {col}: interior point beats candidates by {}", g - best))?;
        }
    }
    let mut worst0 = 0.0f64;
    for _ in 0..20 {
        let k = rng.gen_range(2..=5);
        let (lo, hi, _) = common::random_box(&mut rng, k);
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|_| common::random_in_box_simplex(&mut rng, &lo, &hi).expect("sample"))
            .collect();
        let cands = samples
            .iter()
            .map(|y| candidate_points(&lo, &hi, y))
            .collect::<tcldro::Result<Vec<_>>>()
            .map_err(e2s)?;
        let weights = common::random_simplex(&mut rng, k);
        let avg: f64 = samples.iter().map(|y| weighted_loss(&weights, y)).sum::<f64>() / samples.len() as f64;
        let ls = lambda_search(0.0, &samples, &cands, &weights).map_err(e2s)?;
        worst0 = worst0.max((ls.value - avg).abs());
        ensure((ls.value - avg).abs() <= 1e-6, || format!("psi=0 worst case {} vs average {avg}", ls.value))?;
    }
    Ok(format!("max excess {excess:.2e}, psi=0 deviation {worst0:.2e}"))
}

fn criterion_9() -> Check {
    let t = t_quantile(0.975, 1).map_err(e2s)?;
    ensure((t - 12.7062).abs() <= 1e-3, || format!("t(0.975, 1) = {t}"))?;
    let c = chi2_quantile(0.5, 2).map_err(e2s)?;
    ensure((c - 2.0 * 2f64.ln()).abs() <= 1e-9, || format!("chi2(0.5, 2) = {c}"))?;
    let ps = [0.001, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999];
    let mut worst = 0.0f64;
    for dof in [1u64, 2, 10, 100, 1000] {
        for &p in &ps {
            let et = (t_cdf(t_quantile(p, dof).map_err(e2s)?, dof) - p).abs();
            let ec = (chi2_cdf(chi2_quantile(p, dof).map_err(e2s)?, dof) - p).abs();
            worst = worst.max(et).max(ec);
            ensure(et <= 1e-8 && ec <= 1e-8, || format!("round trip p={p} dof={dof}: t {et:e}, chi2 {ec:e}"))?;
        }
    }
    Ok(format!("t = {t:.6}, chi2 = {c:.12}, max round-trip error {worst:.1e}"))
}

fn check_policy(label: &str, p: &Policy) -> Result<(), String> {
    for t in 0..p.horizon() {
        let m = p.at(t).matrix();
        let n = m.n();
        for b in 0..n {
            let s: f64 = (0..n).map(|a| m.get(a, b)).sum();
            let neg = (0..n).any(|a| m.get(a, b) < 0.0);
            ensure((s - 1.0).abs() <= 1e-9 && !neg, || format!("{label}: column {b} at t={t} sums to {s}"))?;
        }
    }
    Ok(())
}

fn criterion_10(cfg: &ScenarioConfig, inputs: &Inputs) -> Check {
    let (_, again) = build_inputs(cfg).map_err(e2s)?;
    ensure(again.samples == inputs.samples && again.utility == inputs.utility && again.rho0 == inputs.rho0, || {
        "pipeline rerun differs".into()
    })?;
    let lo = inputs.space.min_power();
    let hi = inputs.space.max_power();
    let mut runs = 0;
    for name in [
        MethodName::Standard,
        MethodName::Stochastic,
        MethodName::Dro,
        MethodName::Hybrid,
        MethodName::Moment,
        MethodName::Wasserstein,
    ] {
        for gamma in GAMMAS {
            let mut m = cfg.method.clone();
            m.name = name;
            m.gamma = gamma;
            let label = format!("{} gamma={gamma}", name.as_str());
            let out = solve_method(inputs, &m).map_err(e2s)?;
            let rerun = solve_method(&again, &m).map_err(e2s)?;
            ensure(
                out.policy == rerun.policy && out.objective.to_bits() == rerun.objective.to_bits(),
                || format!("{label}: rerun not bit-identical"),
            )?;
            check_policy(&label, &out.policy)?;
            let path = forward_evolve(&inputs.rho0, &out.policy).map_err(e2s)?;
            for (t, rho) in path.iter().enumerate() {
                let s: f64 = rho.iter().sum();
                ensure((s - 1.0).abs() <= 1e-9 && rho.iter().all(|&r| r >= -SIMPLEX_TOL), || {
                    format!("{label}: rho_{t} leaves the simplex")
                })?;
            }
            let kl = stage_kl(&out.policy, &inputs.moments.mean);
            let min_kl = kl.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            ensure(min_kl >= -1e-12, || format!("{label}: negative KL {min_kl:e}"))?;
            let power = power_profile(&path, &inputs.space).map_err(e2s)?;
            ensure(power.iter().all(|&p| p >= lo - 1e-9 && p <= hi + 1e-9), || {
                format!("{label}: power leaves [{lo}, {hi}]")
            })?;
            let (result, _) = dispatch(inputs, &out).map_err(e2s)?;
            ensure(result.power == power, || format!("{label}: dispatch power mismatch"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} solves checked, reruns bit-identical"))
}

fn run(id: usize, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match res {
        Ok(detail) => {
            println!("criterion {id}: PASS ({detail}; {secs:.2} s)");
            true
        }
        Err(why) => {
            println!("criterion {id}: FAIL ({why}; {secs:.2} s)");
            false
        }
    }
}

fn main() -> ExitCode {
    let cfg = ScenarioConfig::default();
    let inputs = match build_inputs(&cfg) {
        Ok((_, inputs)) => inputs,
        Err(e) => {
            for id in 1..=10 {
                println!("criterion {id}: FAIL (default scenario could not be built: {e})");
            }
            return ExitCode::FAILURE;
        }
    };
    let results = [
        run(1, || criterion_1(&inputs)),
        run(2, || criterion_2(&inputs)),
        run(3, || criterion_3(&inputs)),
        run(4, || criterion_4(&inputs)),
        run(5, criterion_5),
        run(6, || criterion_6(&inputs)),
        run(7, criterion_7),
        run(8, criterion_8),
        run(9, criterion_9),
        run(10, || criterion_10(&cfg, &inputs)),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
