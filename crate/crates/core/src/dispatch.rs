//! Forward evolution of the ensemble distribution, power profiles, objective
//! evaluation and method comparison.

use serde::{Deserialize, Serialize};

use crate::bellman::{z_term_standard, Policy, SolveConfig, Terminal, Utility, ZTerm};
use crate::error::{Error, Result};
use crate::markov::{SampleSet, StateSpace};

/// Tolerance for a vector to count as a probability distribution.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn check_distribution(rho: &[f64]) -> Result<()> {
    if rho.is_empty() {
        return Err(Error::data("empty distribution"));
    }
    if rho.iter().any(|&p| !p.is_finite() || p < -SIMPLEX_TOL) {
        return Err(Error::data("distribution has negative or non-finite entries"));
    }
    let s: f64 = rho.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::data(format!("distribution sums to {s}")));
    }
    Ok(())
}

/// Point mass at `state`.
pub fn point_mass(n: usize, state: usize) -> Vec<f64> {
    let mut rho = vec![0.0; n];
    rho[state] = 1.0;
    rho
}

/// `rho_{t+1} = P_t rho_t`; returns `T + 1` distributions.
pub fn forward_evolve(rho0: &[f64], policy: &Policy) -> Result<Vec<Vec<f64>>> {
    check_distribution(rho0)?;
    let n = policy.n();
    if rho0.len() != n {
        return Err(Error::data(format!("rho0 has {} states, policy has {n}", rho0.len())));
    }
    let mut path = Vec::with_capacity(policy.horizon() + 1);
    path.push(rho0.to_vec());
    for p in &policy.steps {
        let prev = path.last().expect("nonempty");
        let next = (0..n)
            .map(|a| (0..n).map(|b| p.get(a, b) * prev[b]).sum())
            .collect();
        path.push(next);
    }
    Ok(path)
}

/// `p_t = sum_b p_rated_state[b] rho_t^b`.
pub fn power_profile(path: &[Vec<f64>], space: &StateSpace) -> Result<Vec<f64>> {
    path.iter()
        .map(|rho| {
            if rho.len() != space.n {
                return Err(Error::data("distribution and state space sizes differ"));
            }
            Ok(rho.iter().zip(&space.p_rated_state).map(|(r, p)| r * p).sum())
        })
        .collect()
}

/// Per-step Z-terms used to price a policy; one entry broadcasts.
#[derive(Clone, Debug)]
pub struct CostModel<'a> {
    pub schedule: &'a [ZTerm],
    /// Optional extra cost per `(t, beta)`, added once per occupied origin.
    pub extras: Option<&'a [Vec<f64>]>,
}

impl<'a> CostModel<'a> {
    pub fn single(zterm: &'a ZTerm) -> Self {
        Self {
            schedule: std::slice::from_ref(zterm),
            extras: None,
        }
    }

    fn at(&self, t: usize) -> &ZTerm {
        if self.schedule.len() == 1 {
            &self.schedule[0]
        } else {
            &self.schedule[t]
        }
    }
}

/// Per-`(t, beta)` stage cost of a policy column, excluding the weight
/// `rho_t^beta`.
pub fn stage_costs(
    policy: &Policy,
    model: &CostModel<'_>,
    utility: &Utility,
    cfg: &SolveConfig,
) -> Result<Vec<Vec<f64>>> {
    let horizon = policy.horizon();
    if utility.horizon() != horizon || utility.n() != policy.n() {
        return Err(Error::data("policy and utility shapes differ"));
    }
    if model.schedule.len() != 1 && model.schedule.len() != horizon {
        return Err(Error::data("cost schedule length differs from horizon"));
    }
    let n = policy.n();
    let zero = vec![0.0; n];
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let p = policy.at(t);
        let zt = model.at(t);
        let u_next = if t + 1 == horizon && cfg.terminal == Terminal::Unit {
            &zero[..]
        } else {
            utility.at(t + 1)
        };
        let mut row = Vec::with_capacity(n);
        for beta in 0..n {
            let mut s = zt.column_cost[beta];
            if let Some(extra) = model.extras {
                s += extra[t][beta];
            }
            for (alpha, &u) in u_next.iter().enumerate() {
                let q = p.get(alpha, beta);
                if q <= 0.0 {
                    continue;
                }
                let base = zt.base.get(alpha, beta);
                if base <= 0.0 {
                    return Err(Error::domain(format!(
                        "policy leaves the reference support at t={t}, ({alpha},{beta})"
                    )));
                }
                s += q * (-u + cfg.gamma * (q / base).ln() + zt.z.get(alpha, beta));
            }
            row.push(s);
        }
        out.push(row);
    }
    Ok(out)
}

/// Expected total cost of running `policy` from `rho0` under `model`.
pub fn expected_cost(
    policy: &Policy,
    model: &CostModel<'_>,
    utility: &Utility,
    cfg: &SolveConfig,
    rho0: &[f64],
) -> Result<f64> {
    let path = forward_evolve(rho0, policy)?;
    let stages = stage_costs(policy, model, utility, cfg)?;
    Ok(stages
        .iter()
        .zip(&path)
        .map(|(row, rho)| row.iter().zip(rho).map(|(c, r)| c * r).sum::<f64>())
        .sum())
}

/// KL divergence of every policy column from the matching base column.
pub fn stage_kl(policy: &Policy, base: &crate::matrix::StochasticMatrix) -> Vec<Vec<f64>> {
    let n = policy.n();
    policy
        .steps
        .iter()
        .map(|p| {
            (0..n)
                .map(|b| {
                    (0..n)
                        .filter(|&a| p.get(a, b) > 0.0)
                        .map(|a| {
                            let q = p.get(a, b);
                            q * (q / base.get(a, b)).ln()
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `a - b`, entrywise.
pub fn delta_power(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::data(format!("horizons differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Cost of a policy against every sample as the reference matrix.
pub fn out_of_sample_costs(
    policy: &Policy,
    samples: &SampleSet,
    utility: &Utility,
    cfg: &SolveConfig,
    rho0: &[f64],
) -> Result<Vec<f64>> {
    let path = forward_evolve(rho0, policy)?;
    samples
        .samples()
        .iter()
        .map(|s| {
            let zt = z_term_standard(s);
            let stages = stage_costs(policy, &CostModel::single(&zt), utility, cfg)?;
            Ok(stages
                .iter()
                .zip(&path)
                .map(|(row, rho)| row.iter().zip(rho).map(|(c, r)| c * r).sum::<f64>())
                .sum())
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varsigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
}

/// Summary of one solved method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub method: String,
    pub gamma: f64,
    pub params: MethodParams,
    /// Cost under the method's own objective, constants included.
    pub objective: f64,
    pub power: Vec<f64>,
    /// File holding the distribution path, when written to disk.
    #[serde(default)]
    pub rho_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oos_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oos_worst: Option<f64>,
}
