//! Scenario configuration, the simulate-estimate-sample pipeline, method
//! dispatch and the parameter sweeps behind the report tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bellman::{self, hybrid_policy, Policy, SolveConfig, Terminal, Utility, ValueFunction, VarianceScaling};
use crate::dispatch::{
    delta_power, expected_cost, forward_evolve, out_of_sample_costs, point_mass, power_profile, CostModel,
    DispatchResult, MethodParams,
};
use crate::error::{Error, Result};
use crate::markov::{
    discretize, estimate_transitions, perturb_samples, sample_moments, thin, MomentMatrices, SampleSet, StateSpace,
};
use crate::matrix::StochasticMatrix;
use crate::moment::{self, EntryReport, DEFAULT_GRID_SIZE};
use crate::quantiles::{bound_matrices, VarianceRule};
use crate::thermal::{simulate_ensemble, EnsembleTrace, SimOptions, TclParams};
use crate::wasserstein::{self, Diagnostics, WassersteinMode};

/// Discount-penalty values swept by every table.
pub const GAMMAS: [f64; 3] = [0.05, 0.1, 1.0];
pub const ETAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const CONFIDENCE_LEVELS: [f64; 3] = [0.1, 0.01, 0.001];
pub const B_VALUES: [f64; 3] = [0.05, 0.1, 0.2];
pub const C_VALUES: [f64; 3] = [1.5, 2.0, 3.0];
pub const PSI_VALUES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub devices: usize,
    /// Constant ambient temperature, degC.
    pub ambient_c: f64,
    /// Simulated duration used for estimation, hours.
    pub sim_hours: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            devices: 1000,
            ambient_c: 32.0,
            sim_hours: 720.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub states: usize,
    pub horizon: usize,
    /// Length of one MDP step, hours.
    pub step_hours: f64,
    /// Additive smoothing for deterministic columns (0 disables it).
    pub smoothing: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            states: 8,
            horizon: 24,
            step_hours: 1.0,
            smoothing: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    pub fraction: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            count: 1000,
            fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    /// Flat energy price, $/kWh.
    pub price: f64,
    /// CSV with a `price` column, one row per step; overrides `price`.
    pub price_file: Option<PathBuf>,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            price: 0.1,
            price_file: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Standard,
    Stochastic,
    Dro,
    Hybrid,
    Moment,
    Wasserstein,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Standard => "standard",
            MethodName::Stochastic => "stochastic",
            MethodName::Dro => "dro",
            MethodName::Hybrid => "hybrid",
            MethodName::Moment => "moment",
            MethodName::Wasserstein => "wasserstein",
        }
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "standard" => MethodName::Standard,
            "stochastic" => MethodName::Stochastic,
            "dro" => MethodName::Dro,
            "hybrid" => MethodName::Hybrid,
            "moment" => MethodName::Moment,
            "wasserstein" => MethodName::Wasserstein,
            other => return Err(Error::config(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub name: MethodName,
    pub gamma: f64,
    pub eta: f64,
    pub xi: f64,
    pub varsigma: f64,
    pub b: f64,
    pub c: f64,
    pub grid: usize,
    pub psi: f64,
    pub mode: WassersteinMode,
    pub variance_rule: VarianceRule,
    pub variance_scaling: VarianceScaling,
    /// Replace the entrywise variance by its pooled mean.
    pub pooled_variance: bool,
    pub terminal: Terminal,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            name: MethodName::Hybrid,
            gamma: 0.1,
            eta: 0.5,
            xi: 0.001,
            varsigma: 0.1,
            b: 0.1,
            c: 2.0,
            grid: DEFAULT_GRID_SIZE,
            psi: 1.0,
            mode: WassersteinMode::Weighted,
            variance_rule: VarianceRule::Literal,
            variance_scaling: VarianceScaling::Linear,
            pooled_variance: false,
            terminal: Terminal::Utility,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.solve_config().validate()?;
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        for (name, v) in [("xi", self.xi), ("varsigma", self.varsigma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.b >= 0.0) || !(self.c >= 0.0) {
            return Err(Error::config("b and c must be >= 0"));
        }
        if self.grid == 0 {
            return Err(Error::config("grid must have at least one point"));
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::config(format!("psi must be >= 0, got {}", self.psi)));
        }
        Ok(())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            gamma: self.gamma,
            terminal: self.terminal,
        }
    }

    /// Parameters relevant to this method, for reporting.
    pub fn params(&self) -> MethodParams {
        let mut p = MethodParams::default();
        match self.name {
            MethodName::Standard | MethodName::Stochastic => {}
            MethodName::Dro => {
                p.xi = Some(self.xi);
                p.varsigma = Some(self.varsigma);
            }
            MethodName::Hybrid => {
                p.eta = Some(self.eta);
                p.xi = Some(self.xi);
                p.varsigma = Some(self.varsigma);
            }
            MethodName::Moment => {
                p.b = Some(self.b);
                p.c = Some(self.c);
            }
            MethodName::Wasserstein => p.psi = Some(self.psi),
        }
        p
    }
}

/// Initial ensemble distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Point mass at the state of the last thinned observation.
    #[default]
    FinalState,
    Uniform,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub tcl: TclParams,
    pub ensemble: EnsembleConfig,
    pub model: ModelConfig,
    pub samples: SampleConfig,
    pub utility: UtilityConfig,
    pub method: MethodConfig,
    pub initial: InitialDistribution,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads TOML; relative price files resolve against the config directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.utility.price_file, path.parent()) {
            if file.is_relative() {
                cfg.utility.price_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tcl.validate()?;
        if self.ensemble.devices == 0 {
            return Err(Error::config("ensemble.devices must be >= 1"));
        }
        if !(self.ensemble.sim_hours > 0.0) || !self.ensemble.ambient_c.is_finite() {
            return Err(Error::config("ensemble.sim_hours must be > 0 and ambient finite"));
        }
        if self.model.states < 2 || self.model.horizon == 0 {
            return Err(Error::config("model needs states >= 2 and horizon >= 1"));
        }
        if !(self.model.step_hours > 0.0) || !(self.model.smoothing >= 0.0) {
            return Err(Error::config("model.step_hours must be > 0 and smoothing >= 0"));
        }
        if self.samples.count < 2 || !(0.0..1.0).contains(&self.samples.fraction) {
            return Err(Error::config("samples need count >= 2 and fraction in [0, 1)"));
        }
        if !self.utility.price.is_finite() {
            return Err(Error::config("utility.price must be finite"));
        }
        self.method.validate()
    }

    /// Simulation steps per MDP step.
    pub fn thin_every(&self) -> usize {
        ((self.model.step_hours / self.tcl.h).round() as usize).max(1)
    }

    pub fn sim_steps(&self) -> usize {
        ((self.ensemble.sim_hours / self.tcl.h).round() as usize).max(1)
    }

    /// Per-step prices over the horizon.
    pub fn prices(&self) -> Result<Vec<f64>> {
        match &self.utility.price_file {
            None => Ok(vec![self.utility.price; self.model.horizon]),
            Some(path) => {
                let prices = crate::io::read_prices(crate::io::open(path)?)?;
                if prices.len() != self.model.horizon {
                    return Err(Error::data(format!(
                        "price file has {} rows for horizon {}",
                        prices.len(),
                        self.model.horizon
                    )));
                }
                Ok(prices)
            }
        }
    }

    pub fn sample_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

/// Runs the ensemble simulator for the configured duration.
pub fn simulate(cfg: &ScenarioConfig, record_temperatures: bool) -> Result<EnsembleTrace> {
    let steps = cfg.sim_steps();
    let ambient = vec![cfg.ensemble.ambient_c; steps];
    simulate_ensemble(
        &cfg.tcl,
        cfg.ensemble.devices,
        &ambient,
        steps,
        cfg.seed,
        &SimOptions {
            record_temperatures,
            initial: None,
        },
    )
}

/// Output of the estimation stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub space: StateSpace,
    pub states: Vec<usize>,
    pub nominal: StochasticMatrix,
    pub rho0: Vec<f64>,
}

/// Thins, discretizes and counts transitions.
pub fn estimate(power: &[f64], cfg: &ScenarioConfig) -> Result<Estimate> {
    let thinned = thin(power, cfg.thin_every());
    if thinned.len() < 2 {
        return Err(Error::data("trace is shorter than two MDP steps"));
    }
    let (space, states) = discretize(&thinned, cfg.model.states)?;
    let nominal = estimate_transitions(&states, cfg.model.states, cfg.model.smoothing)?;
    let rho0 = match cfg.initial {
        InitialDistribution::FinalState => point_mass(space.n, *states.last().expect("nonempty")),
        InitialDistribution::Uniform => vec![1.0 / space.n as f64; space.n],
    };
    Ok(Estimate {
        space,
        states,
        nominal,
        rho0,
    })
}

/// Everything a solve needs.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub space: StateSpace,
    pub samples: SampleSet,
    pub moments: MomentMatrices,
    pub utility: Utility,
    pub rho0: Vec<f64>,
}

impl Inputs {
    pub fn new(space: StateSpace, samples: SampleSet, rho0: Vec<f64>, cfg: &ScenarioConfig) -> Result<Self> {
        if samples.n() != space.n || rho0.len() != space.n {
            return Err(Error::data("state space, samples and rho0 sizes differ"));
        }
        crate::dispatch::check_distribution(&rho0)?;
        let moments = sample_moments(&samples)?;
        let utility = Utility::from_prices(&cfg.prices()?, &space.p_rated_state, cfg.model.step_hours)?;
        Ok(Self {
            space,
            samples,
            moments,
            utility,
            rho0,
        })
    }
}

/// Simulate, estimate and perturb in one go.
pub fn build_inputs(cfg: &ScenarioConfig) -> Result<(Estimate, Inputs)> {
    cfg.validate()?;
    let trace = simulate(cfg, false)?;
    let est = estimate(&trace.power, cfg)?;
    let samples = perturb_samples(&est.nominal, cfg.samples.fraction, cfg.samples.count, cfg.sample_seed())?;
    let inputs = Inputs::new(est.space.clone(), samples, est.rho0.clone(), cfg)?;
    Ok((est, inputs))
}

/// Wall-clock timer. `Instant` panics on wasm32-unknown-unknown, so there it
/// always reads zero.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// A solved method.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub config: MethodConfig,
    pub policy: Policy,
    pub objective: f64,
    pub value_function: Option<ValueFunction>,
    pub moment_report: Option<Vec<EntryReport>>,
    pub diagnostics: Option<Vec<Diagnostics>>,
    pub seconds: f64,
}

fn moments_for(inputs: &Inputs, m: &MethodConfig) -> MomentMatrices {
    if m.pooled_variance {
        inputs.moments.pooled()
    } else {
        inputs.moments.clone()
    }
}

/// Solves one method on `inputs`.
pub fn solve_method(inputs: &Inputs, m: &MethodConfig) -> Result<Outcome> {
    m.validate()?;
    let start = Stopwatch::start();
    let cfg = m.solve_config();
    let moments = moments_for(inputs, m);
    let u = &inputs.utility;
    let rho0 = &inputs.rho0;
    let analytic = |zt: bellman::ZTerm| -> Result<(Policy, f64, Option<ValueFunction>)> {
        let (vf, policy) = bellman::solve(&zt, u, &cfg)?;
        let objective = expected_cost(&policy, &CostModel::single(&zt), u, &cfg, rho0)?;
        Ok((policy, objective, Some(vf)))
    };
    let mut moment_report = None;
    let mut diagnostics = None;
    let (policy, objective, value_function) = match m.name {
        MethodName::Standard => analytic(bellman::z_term_standard(&moments.mean))?,
        MethodName::Stochastic => analytic(bellman::z_term_stochastic(&moments, cfg.gamma, m.variance_scaling)?)?,
        MethodName::Dro => {
            let bounds = bound_matrices(&moments, m.varsigma, m.xi, m.variance_rule)?;
            analytic(bellman::z_term_dro(&bounds, cfg.gamma, m.variance_scaling)?)?
        }
        MethodName::Hybrid => {
            let bounds = bound_matrices(&moments, m.varsigma, m.xi, m.variance_rule)?;
            let z_wc = bellman::z_term_dro(&bounds, cfg.gamma, m.variance_scaling)?;
            let z_e = bellman::z_term_stochastic(&moments, cfg.gamma, m.variance_scaling)?;
            let (_, p_wc) = bellman::solve(&z_wc, u, &cfg)?;
            let (_, p_e) = bellman::solve(&z_e, u, &cfg)?;
            let policy = hybrid_policy(&p_wc, &p_e, m.eta)?;
            let mut objective = 0.0;
            if m.eta < 1.0 {
                objective += (1.0 - m.eta) * expected_cost(&policy, &CostModel::single(&z_wc), u, &cfg, rho0)?;
            }
            if m.eta > 0.0 {
                objective += m.eta * expected_cost(&policy, &CostModel::single(&z_e), u, &cfg, rho0)?;
            }
            (policy, objective, None)
        }
        MethodName::Moment => {
            let sol = moment::solve_moment_mdp(&moments, m.b, m.c, m.grid, u, &cfg, rho0)?;
            moment_report = Some(sol.worst_case.entries);
            (sol.policy, sol.objective, Some(sol.value_function))
        }
        MethodName::Wasserstein => {
            let sol = wasserstein::solve_wasserstein_mdp(&inputs.samples, m.psi, u, &cfg, m.mode, rho0)?;
            diagnostics = Some(sol.diagnostics);
            (sol.policy, sol.objective, Some(sol.value_function))
        }
    };
    if !objective.is_finite() {
        return Err(Error::numerical(format!("{} objective is not finite", m.name.as_str())));
    }
    Ok(Outcome {
        config: m.clone(),
        policy,
        objective,
        value_function,
        moment_report,
        diagnostics,
        seconds: start.seconds(),
    })
}

/// Distribution path, power profile and out-of-sample costs of an outcome.
pub fn dispatch(inputs: &Inputs, outcome: &Outcome) -> Result<(DispatchResult, Vec<Vec<f64>>)> {
    let path = forward_evolve(&inputs.rho0, &outcome.policy)?;
    let power = power_profile(&path, &inputs.space)?;
    let cfg = outcome.config.solve_config();
    let oos = out_of_sample_costs(&outcome.policy, &inputs.samples, &inputs.utility, &cfg, &inputs.rho0)?;
    let oos_mean = oos.iter().sum::<f64>() / oos.len() as f64;
    let oos_worst = oos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        DispatchResult {
            method: outcome.config.name.as_str().to_string(),
            gamma: outcome.config.gamma,
            params: outcome.config.params(),
            objective: outcome.objective,
            power,
            rho_path: String::new(),
            oos_mean: Some(oos_mean),
            oos_worst: Some(oos_worst),
        },
        path,
    ))
}

/// One solved cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub table: u8,
    pub gamma: f64,
    pub row_param: String,
    pub row_value: f64,
    pub col_param: String,
    pub col_value: f64,
    pub objective: f64,
    pub oos_mean: f64,
    pub oos_worst: f64,
    pub seconds: f64,
}

/// A sweep in long form plus the power difference of each cell against the
/// standard policy at the same gamma.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub table: u8,
    pub cells: Vec<Cell>,
    /// `(label, delta power series)`.
    pub delta_power: Vec<(String, Vec<f64>)>,
    pub seconds: f64,
}

impl Sweep {
    pub fn get(&self, gamma: f64, row: f64, col: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.gamma == gamma && c.row_value == row && c.col_value == col)
    }

    /// Wide layout: one line per `(gamma, row value)`, one column per column value.
    pub fn wide(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let col_param = self.cells.first().map_or("", |c| c.col_param.as_str());
        let row_param = self.cells.first().map_or("", |c| c.row_param.as_str());
        let mut col_values: Vec<f64> = Vec::new();
        let mut row_keys: Vec<(f64, f64)> = Vec::new();
        for c in &self.cells {
            if !col_values.contains(&c.col_value) {
                col_values.push(c.col_value);
            }
            if !row_keys.contains(&(c.gamma, c.row_value)) {
                row_keys.push((c.gamma, c.row_value));
            }
        }
        let mut header = vec!["gamma".to_string()];
        if !row_param.is_empty() {
            header.push(row_param.to_string());
        }
        header.extend(col_values.iter().map(|v| format!("{col_param}={v}")));
        let rows = row_keys
            .iter()
            .map(|&(g, r)| {
                let mut line = vec![g.to_string()];
                if !row_param.is_empty() {
                    line.push(r.to_string());
                }
                line.extend(
                    col_values
                        .iter()
                        .map(|&cv| self.get(g, r, cv).map_or(String::new(), |c| c.objective.to_string())),
                );
                line
            })
            .collect();
        (header, rows)
    }
}

/// Runs the sweep behind table `which` (2 to 5) starting from `base`.
pub fn run_table(inputs: &Inputs, base: &MethodConfig, which: u8, gammas: &[f64]) -> Result<Sweep> {
    let start = Stopwatch::start();
    // (method, row name, row values, col name, col values)
    let (name, row_param, rows, col_param, cols): (MethodName, &str, &[f64], &str, &[f64]) = match which {
        2 => (MethodName::Hybrid, "", &[0.0], "eta", &ETAS),
        3 => (MethodName::Dro, "xi", &CONFIDENCE_LEVELS, "varsigma", &CONFIDENCE_LEVELS),
        4 => (MethodName::Moment, "b", &B_VALUES, "c", &C_VALUES),
        5 => (MethodName::Wasserstein, "", &[0.0], "psi", &PSI_VALUES),
        other => return Err(Error::config(format!("no table {other}; choose 2, 3, 4 or 5"))),
    };
    let mut cells = Vec::new();
    let mut delta = Vec::new();
    for &gamma in gammas {
        let mut std_cfg = base.clone();
        std_cfg.name = MethodName::Standard;
        std_cfg.gamma = gamma;
        let reference = dispatch(inputs, &solve_method(inputs, &std_cfg)?)?.0;
        for &r in rows {
            for &c in cols {
                let mut m = base.clone();
                m.name = name;
                m.gamma = gamma;
                match which {
                    2 => m.eta = c,
                    3 => {
                        m.xi = r;
                        m.varsigma = c;
                    }
                    4 => {
                        m.b = r;
                        m.c = c;
                    }
                    _ => m.psi = c,
                }
                let outcome = solve_method(inputs, &m)?;
                let (result, _) = dispatch(inputs, &outcome)?;
                let label = if row_param.is_empty() {
                    format!("gamma={gamma} {col_param}={c}")
                } else {
                    format!("gamma={gamma} {row_param}={r} {col_param}={c}")
                };
                delta.push((label, delta_power(&result.power, &reference.power)?));
                cells.push(Cell {
                    table: which,
                    gamma,
                    row_param: row_param.to_string(),
                    row_value: r,
                    col_param: col_param.to_string(),
                    col_value: c,
                    objective: outcome.objective,
                    oos_mean: result.oos_mean.unwrap_or(f64::NAN),
                    oos_worst: result.oos_worst.unwrap_or(f64::NAN),
                    seconds: outcome.seconds,
                });
            }
        }
    }
    Ok(Sweep {
        table: which,
        cells,
        delta_power: delta,
        seconds: start.seconds(),
    })
}
