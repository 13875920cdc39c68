//! `tcldro`: simulate a TCL ensemble, estimate its default chain, solve the
//! robust dispatch problems and reproduce the cost sweeps.
//!
//! Every failure prints one `tcldro: error kind=<kind> exit=<code> msg="..."`
//! line on stderr. Exit codes: 0 ok, 2 config, 3 numerical, 4 data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcldro::bellman::Policy;
use tcldro::dispatch::{expected_cost, forward_evolve, out_of_sample_costs, power_profile, CostModel};
use tcldro::markov::{perturb_samples, Provenance, SampleSet, StateSpace};
use tcldro::scenario::{self, Inputs, MethodConfig, ScenarioConfig, GAMMAS};
use tcldro::wasserstein::WassersteinMode;
use tcldro::{io, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "tcldro", version, about = "Robust dispatch of thermostatically controlled load ensembles")]
struct Cli {
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the ensemble and write the aggregate power trace.
    Simulate {
        /// Also write per-device temperatures.
        #[arg(long)]
        temperatures: bool,
    },
    /// Discretize a trace and estimate the default transition matrix.
    Estimate {
        /// Power trace CSV; simulated from the config when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Perturb the nominal matrix into a sample set.
    Sample {
        #[arg(long)]
        nominal: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        fraction: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Solve one method and write its policy and dispatch result.
    Solve {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Price a stored policy on the inputs.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Run one of the cost sweeps.
    Report {
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=5))]
        table: u8,
        /// Comma-separated gamma values.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
    },
}

/// Where solve-time inputs come from. Without `--inputs` the whole pipeline
/// runs in memory from the config.
#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Directory holding `samples.csv`, `state_space.json` and `rho0.json`.
    #[arg(long, value_name = "DIR")]
    inputs: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct MethodArgs {
    /// standard, stochastic, dro, hybrid, moment or wasserstein.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    xi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    varsigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    psi: Option<f64>,
    /// weighted or literal.
    #[arg(long)]
    mode: Option<String>,
}

impl MethodArgs {
    fn apply(&self, m: &mut MethodConfig) -> Result<()> {
        if let Some(name) = &self.method {
            m.name = name.parse()?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { m.$f = v; })* };
        }
        set!(gamma, eta, xi, varsigma, b, c, grid, psi);
        if let Some(mode) = &self.mode {
            m.mode = match mode.as_str() {
                "weighted" => WassersteinMode::Weighted,
                "literal" => WassersteinMode::Literal,
                other => return Err(Error::Config(format!("unknown mode {other:?}"))),
            };
        }
        m.validate()
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        "config" => 2,
        "numerical" => 3,
        _ => 4,
    }
}

fn fail(kind: &str, code: u8, msg: &str) -> ExitCode {
    let msg = msg.replace(['\n', '\r'], " ").replace('"', "'");
    eprintln!("tcldro: error kind={kind} exit={code} msg=\"{msg}\"");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("config", 2, first.trim_start_matches("error: "));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), exit_code(&e), &e.to_string()),
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate { temperatures } => {
            let trace = scenario::simulate(&cfg, *temperatures)?;
            io::write_atomic(&out.join("trace.csv"), |w| io::write_power_trace(w, &trace.power))?;
            if *temperatures {
                io::write_atomic(&out.join("temperatures.csv"), |w| io::write_temperatures(w, &trace))?;
            }
            let mean = trace.power.iter().sum::<f64>() / trace.power.len() as f64;
            println!("simulated {} devices for {} steps; mean power {mean:.1} kW", trace.devices, trace.steps);
        }
        Command::Estimate { trace } => {
            let power = match trace {
                Some(path) => io::read_power_trace(io::open(path)?)?,
                None => scenario::simulate(&cfg, false)?.power,
            };
            let est = scenario::estimate(&power, &cfg)?;
            io::write_atomic(&out.join("nominal.csv"), |w| io::write_matrix(w, est.nominal.matrix()))?;
            io::write_atomic(&out.join("state_space.json"), |w| io::write_json(w, &est.space))?;
            io::write_atomic(&out.join("rho0.json"), |w| io::write_json(w, &est.rho0))?;
            println!("estimated {} states from {} hourly observations", est.space.n, est.states.len());
        }
        Command::Sample { nominal, fraction, count } => {
            if let Some(f) = fraction {
                cfg.samples.fraction = *f;
            }
            if let Some(n) = count {
                cfg.samples.count = *n;
            }
            cfg.validate()?;
            let path = nominal.clone().unwrap_or_else(|| out.join("nominal.csv"));
            let nominal = io::read_stochastic(io::open(&path)?)?;
            let set = perturb_samples(&nominal, cfg.samples.fraction, cfg.samples.count, cfg.sample_seed())?;
            io::write_atomic(&out.join("samples.csv"), |w| io::write_sample_set(w, &set))?;
            println!("wrote {} samples (fraction {})", set.len(), cfg.samples.fraction);
        }
        Command::Solve { inputs, method } => {
            method.apply(&mut cfg.method)?;
            let inputs = load_inputs(&cfg, inputs)?;
            solve(&inputs, &cfg.method, out)?;
        }
        Command::Evaluate { policy, inputs, method } => {
            method.apply(&mut cfg.method)?;
            let inputs = load_inputs(&cfg, inputs)?;
            evaluate(&inputs, &cfg.method, policy, out)?;
        }
        Command::Report { table, gammas, inputs, method } => {
            method.apply(&mut cfg.method)?;
            let inputs = load_inputs(&cfg, inputs)?;
            let gammas = gammas.clone().unwrap_or_else(|| GAMMAS.to_vec());
            report(&inputs, &cfg.method, *table, &gammas, out)?;
        }
    }
    Ok(())
}

fn load_inputs(cfg: &ScenarioConfig, args: &InputArgs) -> Result<Inputs> {
    let Some(dir) = &args.inputs else {
        return Ok(scenario::build_inputs(cfg)?.1);
    };
    let space: StateSpace = io::read_state_space(io::open(&dir.join("state_space.json"))?)?;
    let samples: SampleSet = io::read_sample_set(io::open(&dir.join("samples.csv"))?, Provenance::Observed)?;
    let rho0: Vec<f64> = io::read_json(io::open(&dir.join("rho0.json"))?)?;
    Inputs::new(space, samples, rho0, cfg)
}

fn solve(inputs: &Inputs, m: &MethodConfig, out: &Path) -> Result<()> {
    let outcome = scenario::solve_method(inputs, m)?;
    let (mut result, path) = scenario::dispatch(inputs, &outcome)?;
    io::write_atomic(&out.join("policy.csv"), |w| io::write_policy(w, &outcome.policy))?;
    if let Some(vf) = &outcome.value_function {
        io::write_atomic(&out.join("value_function.csv"), |w| io::write_value_function(w, vf))?;
    }
    io::write_atomic(&out.join("rho_path.csv"), |w| io::write_rho_path(w, &path))?;
    if let Some(report) = &outcome.moment_report {
        io::write_atomic(&out.join("moment_report.csv"), |w| io::write_records(w, report))?;
    }
    if let Some(diag) = &outcome.diagnostics {
        io::write_atomic(&out.join("wasserstein_diagnostics.csv"), |w| io::write_records(w, diag))?;
    }
    result.rho_path = "rho_path.csv".into();
    io::write_atomic(&out.join("result.json"), |w| io::write_json(w, &result))?;
    println!(
        "{} gamma={} objective={} oos_mean={} oos_worst={} ({:.3} s)",
        result.method,
        result.gamma,
        result.objective,
        result.oos_mean.unwrap_or(f64::NAN),
        result.oos_worst.unwrap_or(f64::NAN),
        outcome.seconds
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct Evaluation {
    policy: String,
    gamma: f64,
    /// Cost against the sample mean with no robust surcharge.
    nominal_cost: f64,
    oos_mean: f64,
    oos_worst: f64,
    power: Vec<f64>,
}

fn evaluate(inputs: &Inputs, m: &MethodConfig, policy_path: &Path, out: &Path) -> Result<()> {
    let policy: Policy = io::read_policy(io::open(policy_path)?)?;
    if policy.n() != inputs.space.n || policy.horizon() != inputs.utility.horizon() {
        return Err(Error::Data("policy shape does not match the inputs".into()));
    }
    let cfg = m.solve_config();
    let zt = tcldro::bellman::z_term_standard(&inputs.moments.mean);
    let nominal_cost = expected_cost(&policy, &CostModel::single(&zt), &inputs.utility, &cfg, &inputs.rho0)?;
    let oos = out_of_sample_costs(&policy, &inputs.samples, &inputs.utility, &cfg, &inputs.rho0)?;
    let power = power_profile(&forward_evolve(&inputs.rho0, &policy)?, &inputs.space)?;
    let eval = Evaluation {
        policy: policy_path.display().to_string(),
        gamma: cfg.gamma,
        nominal_cost,
        oos_mean: oos.iter().sum::<f64>() / oos.len() as f64,
        oos_worst: oos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        power,
    };
    io::write_atomic(&out.join("evaluation.json"), |w| io::write_json(w, &eval))?;
    println!(
        "nominal_cost={} oos_mean={} oos_worst={}",
        eval.nominal_cost, eval.oos_mean, eval.oos_worst
    );
    Ok(())
}

fn report(inputs: &Inputs, base: &MethodConfig, table: u8, gammas: &[f64], out: &Path) -> Result<()> {
    let sweep = scenario::run_table(inputs, base, table, gammas)?;
    let (header, rows) = sweep.wide();
    io::write_atomic(&out.join(format!("table{table}.csv")), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&header)?;
        for r in &rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    io::write_atomic(&out.join(format!("table{table}_long.csv")), |w| io::write_records(w, &sweep.cells))?;
    io::write_atomic(&out.join(format!("table{table}_delta_power.csv")), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        let steps = sweep.delta_power.first().map_or(0, |d| d.1.len());
        let mut head = vec!["cell".to_string()];
        head.extend((0..steps).map(|t| format!("t{t}")));
        wtr.write_record(&head)?;
        for (label, series) in &sweep.delta_power {
            let mut rec = vec![label.clone()];
            rec.extend(series.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    println!("{}", header.join("\t"));
    for r in &rows {
        println!("{}", r.join("\t"));
    }
    println!("table {table}: {} cells in {:.2} s", sweep.cells.len(), sweep.seconds);
    Ok(())
}
