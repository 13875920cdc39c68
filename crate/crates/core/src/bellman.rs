//! Generalized backward recursion for the linearly solvable MDP.
//!
//! Every uncertainty model reduces to a pair `(B, Z)`: a nonnegative base
//! matrix that multiplies the desirability and a per-transition surcharge.
//! The recursion is
//!
//! ```text
//! z_t^b = exp(U_t^b / g) * sum_a B^{ab} z_{t+1}^a exp(-Z^{ab} / g)
//! ```
//!
//! evaluated entirely in log space, since `exp(U / g)` over- or underflows
//! for realistic utilities and small `g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MomentMatrices;
use crate::matrix::{SquareMatrix, StochasticMatrix};
use crate::quantiles::BoundMatrices;

/// State utilities, `rows[t][alpha]` for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Utility {
    rows: Vec<Vec<f64>>,
}

impl Utility {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::data("utility needs at least two time rows (T >= 1)"));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::data("utility rows are empty"));
        }
        for (t, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::data(format!("utility row {t} has {} states, expected {n}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("utility row {t} is not finite")));
            }
        }
        Ok(Self { rows })
    }

    /// `U_t^a = -price_t * power[a] * step_hours`, with row 0 copying row 1.
    pub fn from_prices(prices: &[f64], power: &[f64], step_hours: f64) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::data("price series is empty"));
        }
        let row = |p: f64| power.iter().map(|&w| -p * w * step_hours).collect::<Vec<_>>();
        let mut rows = Vec::with_capacity(prices.len() + 1);
        rows.push(row(prices[0]));
        rows.extend(prices.iter().map(|&p| row(p)));
        Self::new(rows)
    }

    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            rows: vec![vec![0.0; n]; horizon + 1],
        }
    }

    /// Number of decision steps `T`.
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Boundary condition at the horizon end.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// `z_T = exp(U_T / g)`: the final utility row counts.
    #[default]
    Utility,
    /// `z_T = 1`: the final utility row is ignored.
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub gamma: f64,
    pub terminal: Terminal,
}

impl SolveConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            terminal: Terminal::Utility,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Surcharges `Z`, base matrix `B` and an optional per-origin constant cost.
#[derive(Clone, Debug, PartialEq)]
pub struct ZTerm {
    pub z: SquareMatrix,
    pub base: SquareMatrix,
    /// Cost added once per origin state and step, independent of the policy.
    pub column_cost: Vec<f64>,
}

impl ZTerm {
    pub fn new(z: SquareMatrix, base: SquareMatrix) -> Result<Self> {
        let n = base.n();
        if z.n() != n {
            return Err(Error::data("Z and B shapes differ"));
        }
        for b in 0..n {
            let mut any = false;
            for a in 0..n {
                let w = base.get(a, b);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::domain(format!("base entry ({a},{b}) = {w} is negative")));
                }
                if w > 0.0 {
                    any = true;
                    if !z.get(a, b).is_finite() {
                        return Err(Error::domain(format!("Z({a},{b}) not finite on the support")));
                    }
                }
            }
            if !any {
                return Err(Error::numerical(format!("origin state {b} has empty support")));
            }
        }
        Ok(Self {
            z,
            base,
            column_cost: vec![0.0; n],
        })
    }

    pub fn with_column_cost(mut self, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != self.n() {
            return Err(Error::data("column cost length differs from state count"));
        }
        self.column_cost = cost;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    #[inline]
    pub fn on_support(&self, to: usize, from: usize) -> bool {
        self.base.get(to, from) > 0.0
    }
}

/// `Z = 0`, `B = P`.
pub fn z_term_standard(nominal: &StochasticMatrix) -> ZTerm {
    let n = nominal.n();
    ZTerm::new(SquareMatrix::zeros(n), nominal.matrix().clone()).expect("stochastic matrix has nonempty columns")
}

/// How the variance surcharge scales with `gamma`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScaling {
    /// `Z = g s^2 / (2 m^2)`, so the policy weight is `exp(-s^2 / (2 m^2))`.
    #[default]
    Linear,
    /// `Z = g^2 s^2 / (2 m^2)`.
    Quadratic,
}

fn variance_surcharge(gamma: f64, var: f64, mean: f64, scaling: VarianceScaling) -> f64 {
    let k = match scaling {
        VarianceScaling::Linear => gamma,
        VarianceScaling::Quadratic => gamma * gamma,
    };
    k * var / (2.0 * mean * mean)
}

/// Second-order Taylor surcharge around the empirical mean.
pub fn z_term_stochastic(moments: &MomentMatrices, gamma: f64, scaling: VarianceScaling) -> Result<ZTerm> {
    let n = moments.mean.n();
    let mut z = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            let m = moments.mean.get(a, b);
            let v = moments.variance.get(a, b);
            if m > 0.0 {
                z.set(a, b, variance_surcharge(gamma, v, m, scaling));
            } else if v > 0.0 {
                return Err(Error::domain(format!("entry ({a},{b}) has zero mean but variance {v}")));
            }
        }
    }
    ZTerm::new(z, moments.mean.matrix().clone())
}

/// Worst case over the confidence box: `B = gamma_lo`, variance `zeta_hi`.
pub fn z_term_dro(bounds: &BoundMatrices, gamma: f64, scaling: VarianceScaling) -> Result<ZTerm> {
    let n = bounds.n();
    let mut z = SquareMatrix::zeros(n);
    let mut base = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            let hi = bounds.gamma_hi.get(a, b);
            if hi <= 0.0 {
                // Structural zero.
                continue;
            }
            let lo = bounds.gamma_lo.get(a, b);
            if !(lo > 0.0) {
                return Err(Error::domain(format!("lower mean bound at ({a},{b}) is {lo}")));
            }
            base.set(a, b, lo);
            z.set(a, b, variance_surcharge(gamma, bounds.zeta_hi.get(a, b), lo, scaling));
        }
    }
    ZTerm::new(z, base)
}

/// Log desirability and value function, `rows[t][state]`, `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub gamma: f64,
    pub ln_z: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn phi(&self, t: usize, state: usize) -> f64 {
        -self.gamma * self.ln_z[t][state]
    }

    /// May underflow to zero for small `gamma`; `ln_z` is exact.
    pub fn z(&self, t: usize, state: usize) -> f64 {
        self.ln_z[t][state].exp()
    }

    pub fn horizon(&self) -> usize {
        self.ln_z.len() - 1
    }
}

/// Controlled transition matrices `P_0 .. P_{T-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub steps: Vec<StochasticMatrix>,
}

impl Policy {
    pub fn new(steps: Vec<StochasticMatrix>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::data("policy has no steps"));
        }
        let n = steps[0].n();
        if steps.iter().any(|p| p.n() != n) {
            return Err(Error::data("policy steps have different sizes"));
        }
        Ok(Self { steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n(&self) -> usize {
        self.steps[0].n()
    }

    pub fn at(&self, t: usize) -> &StochasticMatrix {
        &self.steps[t]
    }

    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        self.steps
            .iter()
            .zip(&other.steps)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// `ln sum exp(x_i)` over the finite entries; `-inf` when none are.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log weights `ln B + ln z_next - Z / g` of column `beta` (`-inf` off support).
fn column_logits(zt: &ZTerm, ln_z_next: &[f64], beta: usize, gamma: f64) -> Vec<f64> {
    (0..zt.n())
        .map(|a| {
            let w = zt.base.get(a, beta);
            if w > 0.0 {
                w.ln() + ln_z_next[a] - zt.z.get(a, beta) / gamma
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Softmax of `logits`, exactly zero where a logit is `-inf`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    // Normalize by the sum rather than subtracting the log normalizer: with
    // logits of order 1e5 the latter loses about 1e-11 of column mass.
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - m).exp() })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn schedule_at(schedule: &[ZTerm], t: usize) -> &ZTerm {
    if schedule.len() == 1 {
        &schedule[0]
    } else {
        &schedule[t]
    }
}

fn check_schedule(schedule: &[ZTerm], utility: &Utility) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::data("empty Z-term schedule"));
    }
    if schedule.len() != 1 && schedule.len() != utility.horizon() {
        return Err(Error::data(format!(
            "schedule has {} steps for horizon {}",
            schedule.len(),
            utility.horizon()
        )));
    }
    if schedule.iter().any(|z| z.n() != utility.n()) {
        return Err(Error::data("Z-term and utility state counts differ"));
    }
    Ok(())
}

/// Terminal log desirability for `cfg`.
pub fn terminal_ln_z(utility: &Utility, cfg: &SolveConfig) -> Vec<f64> {
    match cfg.terminal {
        Terminal::Utility => utility.at(utility.horizon()).iter().map(|u| u / cfg.gamma).collect(),
        Terminal::Unit => vec![0.0; utility.n()],
    }
}

/// Backward recursion with a time-invariant Z-term.
pub fn backward_recursion(zterm: &ZTerm, utility: &Utility, cfg: &SolveConfig) -> Result<ValueFunction> {
    backward_recursion_schedule(std::slice::from_ref(zterm), utility, cfg)
}

/// Backward recursion with one Z-term per step (or a single broadcast one).
pub fn backward_recursion_schedule(
    schedule: &[ZTerm],
    utility: &Utility,
    cfg: &SolveConfig,
) -> Result<ValueFunction> {
    cfg.validate()?;
    check_schedule(schedule, utility)?;
    let horizon = utility.horizon();
    let n = utility.n();
    let mut ln_z = vec![Vec::new(); horizon + 1];
    ln_z[horizon] = terminal_ln_z(utility, cfg);
    for t in (0..horizon).rev() {
        let zt = schedule_at(schedule, t);
        let mut row = vec![0.0; n];
        for (beta, slot) in row.iter_mut().enumerate() {
            let lse = log_sum_exp(column_logits(zt, &ln_z[t + 1], beta, cfg.gamma));
            let v = utility.at(t)[beta] / cfg.gamma + lse - zt.column_cost[beta] / cfg.gamma;
            if !v.is_finite() {
                return Err(Error::numerical(format!("desirability vanished at t={t}, state {beta}")));
            }
            *slot = v;
        }
        ln_z[t] = row;
    }
    Ok(ValueFunction {
        gamma: cfg.gamma,
        ln_z,
    })
}

/// Optimal policy from a solved value function.
pub fn policy_from_z(zterm: &ZTerm, vf: &ValueFunction) -> Result<Policy> {
    policy_from_z_schedule(std::slice::from_ref(zterm), vf)
}

pub fn policy_from_z_schedule(schedule: &[ZTerm], vf: &ValueFunction) -> Result<Policy> {
    let horizon = vf.horizon();
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let zt = schedule_at(schedule, t);
        let n = zt.n();
        let mut columns = Vec::with_capacity(n);
        for beta in 0..n {
            let logits = column_logits(zt, &vf.ln_z[t + 1], beta, vf.gamma);
            if log_sum_exp(logits.iter().copied()) == f64::NEG_INFINITY {
                return Err(Error::numerical(format!("zero normalizer at t={t}, state {beta}")));
            }
            columns.push(softmax(&logits));
        }
        steps.push(StochasticMatrix::from_columns(&columns)?);
    }
    Policy::new(steps)
}

/// Solves and extracts the policy in one call.
pub fn solve(zterm: &ZTerm, utility: &Utility, cfg: &SolveConfig) -> Result<(ValueFunction, Policy)> {
    let vf = backward_recursion(zterm, utility, cfg)?;
    let policy = policy_from_z(zterm, &vf)?;
    Ok((vf, policy))
}

/// `(1 - eta) p_wc + eta p_e`, entrywise.
pub fn hybrid_policy(p_wc: &Policy, p_e: &Policy, eta: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::config(format!("eta {eta} outside [0, 1]")));
    }
    if p_wc.horizon() != p_e.horizon() || p_wc.n() != p_e.n() {
        return Err(Error::data("hybrid policies have different shapes"));
    }
    if eta == 0.0 {
        return Ok(p_wc.clone());
    }
    if eta == 1.0 {
        return Ok(p_e.clone());
    }
    let steps = p_wc
        .steps
        .iter()
        .zip(&p_e.steps)
        .map(|(a, b)| {
            let n = a.n();
            let m = SquareMatrix::from_fn(n, |i, j| (1.0 - eta) * a.get(i, j) + eta * b.get(i, j));
            StochasticMatrix::new(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Policy::new(steps)
}
