//! Moment-based ambiguity: worst-case expected `-log p` over distributions on
//! a finite grid whose mean and variance stay near the nominal values.
//!
//! Each structural entry gets its own primal and dual LP. The worst-case
//! value does not depend on the policy, so it folds into the Bellman
//! recursion as a per-transition surcharge.

use serde::{Deserialize, Serialize};

use crate::bellman::{self, Policy, SolveConfig, Utility, ValueFunction, ZTerm};
use crate::dispatch::{expected_cost, CostModel};
use crate::error::{Error, Result};
use crate::lp::{lp_solve, Bounds, LpProblem, LpStatus, Sense};
use crate::markov::MomentMatrices;
use crate::matrix::{SquareMatrix, StochasticMatrix};

pub const DEFAULT_GRID_SIZE: usize = 201;
const GRID_FLOOR: f64 = 1e-6;

/// Ambiguity set of one scalar entry.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAmbiguity {
    pub m: f64,
    pub sigma2: f64,
    pub b: f64,
    pub c: f64,
    pub grid: Vec<f64>,
}

impl MomentAmbiguity {
    /// Uses [`default_grid`].
    pub fn new(m: f64, sigma2: f64, b: f64, c: f64, grid_size: usize) -> Result<Self> {
        let amb = Self {
            m,
            sigma2,
            b,
            c,
            grid: default_grid(m, sigma2, b, c, grid_size),
        };
        amb.validate()?;
        Ok(amb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::data("moment grid is empty"));
        }
        if self.grid.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("moment grid points must be positive"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("moment grid must be strictly ascending"));
        }
        if !(self.b >= 0.0) {
            return Err(Error::config(format!("b must be >= 0, got {}", self.b)));
        }
        if !(self.sigma2 >= 0.0) || !(self.c * self.sigma2 >= 0.0) {
            return Err(Error::config("c * sigma2 must be >= 0"));
        }
        Ok(())
    }

    fn variance_cap(&self) -> f64 {
        self.c * self.sigma2
    }
}

/// `size` uniform points on `[max(1e-6, m - b - 3 s sqrt(c)), min(1, m + b + 3 s sqrt(c))]`,
/// or the single point `m` when that interval is degenerate.
pub fn default_grid(m: f64, sigma2: f64, b: f64, c: f64, size: usize) -> Vec<f64> {
    let spread = b + 3.0 * (sigma2 * c).max(0.0).sqrt();
    let lo = (m - spread).max(GRID_FLOOR);
    let hi = (m + spread).min(1.0);
    if size < 2 || hi - lo <= 1e-12 {
        return vec![m];
    }
    let step = (hi - lo) / (size - 1) as f64;
    (0..size).map(|i| if i + 1 == size { hi } else { lo + step * i as f64 }).collect()
}

/// Primal optimum: value and the worst-case distribution over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalSolution {
    pub value: f64,
    pub q: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub nu: f64,
    pub value: f64,
}

impl DualSolution {
    /// Smallest slack of the semi-infinite constraint over `grid`
    /// (negative means violated).
    pub fn min_slack(&self, amb: &MomentAmbiguity) -> f64 {
        amb.grid
            .iter()
            .map(|&w| {
                (self.lambda_hi - self.lambda_lo) * w + self.big_lambda * (w - amb.m).powi(2) + self.nu + w.ln()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Variance row scale: the constraint is divided by `c s^2` when positive so
/// tiny variances do not drown in the simplex tolerances.
fn variance_scale(amb: &MomentAmbiguity) -> f64 {
    let cap = amb.variance_cap();
    if cap > 0.0 {
        cap
    } else {
        1.0
    }
}

/// `max sum q (-log w)` over grid distributions meeting the moment bounds.
pub fn worst_case_neglog_primal(amb: &MomentAmbiguity) -> Result<PrimalSolution> {
    amb.validate()?;
    let g = amb.grid.len();
    let scale = variance_scale(amb);
    let loss: Vec<f64> = amb.grid.iter().map(|w| -w.ln()).collect();
    let problem = LpProblem::maximize(loss)
        .constrain(vec![1.0; g], Sense::Eq, 1.0)
        .constrain(amb.grid.clone(), Sense::Ge, amb.m - amb.b)
        .constrain(amb.grid.clone(), Sense::Le, amb.m + amb.b)
        .constrain(
            amb.grid.iter().map(|w| (w - amb.m).powi(2) / scale).collect(),
            Sense::Le,
            amb.variance_cap() / scale,
        );
    let sol = lp_solve(&problem)?;
    match sol.status {
        LpStatus::Optimal => Ok(PrimalSolution {
            value: sol.value,
            q: sol.x,
        }),
        LpStatus::Infeasible => Err(Error::data(format!(
            "no grid distribution matches mean {} and variance cap {}; widen the grid",
            amb.m,
            amb.variance_cap()
        ))),
        LpStatus::Unbounded => Err(Error::numerical("moment primal reported unbounded")),
    }
}

/// Dual of [`worst_case_neglog_primal`] with the constraint enforced on the grid.
pub fn worst_case_neglog_dual(amb: &MomentAmbiguity) -> Result<DualSolution> {
    amb.validate()?;
    let scale = variance_scale(amb);
    // Variables: lambda_lo, lambda_hi, Lambda * scale, nu.
    let mut problem = LpProblem::minimize(vec![amb.b - amb.m, amb.b + amb.m, amb.variance_cap() / scale, 1.0])
        .bound(3, Bounds::FREE);
    for &w in &amb.grid {
        problem = problem.constrain(vec![-w, w, (w - amb.m).powi(2) / scale, 1.0], Sense::Ge, -w.ln());
    }
    let sol = lp_solve(&problem)?;
    match sol.status {
        LpStatus::Optimal => Ok(DualSolution {
            lambda_lo: sol.x[0],
            lambda_hi: sol.x[1],
            big_lambda: sol.x[2] / scale,
            nu: sol.x[3],
            value: sol.value,
        }),
        LpStatus::Infeasible => Err(Error::numerical("moment dual reported infeasible")),
        LpStatus::Unbounded => Err(Error::data(format!(
            "moment dual unbounded: primal infeasible for mean {}; widen the grid",
            amb.m
        ))),
    }
}

/// One row of the worst-case report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub alpha: usize,
    pub beta: usize,
    pub m: f64,
    pub sigma2: f64,
    pub b: f64,
    pub c: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Worst-case values for every structural entry.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCaseMatrix {
    /// `WC^{ab}`; zero off the support.
    pub values: SquareMatrix,
    pub entries: Vec<EntryReport>,
}

/// Solves primal and dual for every nonzero entry of the mean.
pub fn worst_case_matrix(moments: &MomentMatrices, b: f64, c: f64, grid_size: usize) -> Result<WorstCaseMatrix> {
    let n = moments.mean.n();
    let mut values = SquareMatrix::zeros(n);
    let mut entries = Vec::new();
    for beta in 0..n {
        for alpha in 0..n {
            let m = moments.mean.get(alpha, beta);
            if m <= 0.0 {
                continue;
            }
            let sigma2 = moments.variance.get(alpha, beta);
            let amb = MomentAmbiguity::new(m, sigma2, b, c, grid_size)?;
            let primal = worst_case_neglog_primal(&amb)?;
            let dual = worst_case_neglog_dual(&amb)?;
            values.set(alpha, beta, primal.value);
            entries.push(EntryReport {
                alpha,
                beta,
                m,
                sigma2,
                b,
                c,
                primal: primal.value,
                dual: dual.value,
                gap: dual.value - primal.value,
            });
        }
    }
    Ok(WorstCaseMatrix { values, entries })
}

/// `Z = g (WC + log m)` on the support of the mean, `B = mean`.
pub fn moment_effective_zterm(wc: &SquareMatrix, mean: &StochasticMatrix, gamma: f64) -> Result<ZTerm> {
    let n = mean.n();
    let mut z = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            let m = mean.get(a, b);
            if m > 0.0 {
                let v = wc.get(a, b);
                if !v.is_finite() {
                    return Err(Error::numerical(format!("worst case at ({a},{b}) is not finite")));
                }
                z.set(a, b, gamma * (v + m.ln()));
            }
        }
    }
    ZTerm::new(z, mean.matrix().clone())
}

#[derive(Clone, Debug)]
pub struct MomentSolution {
    pub worst_case: WorstCaseMatrix,
    pub zterm: ZTerm,
    pub value_function: ValueFunction,
    pub policy: Policy,
    pub objective: f64,
}

/// Full moment-robust solve from entrywise moments.
pub fn solve_moment_mdp(
    moments: &MomentMatrices,
    b: f64,
    c: f64,
    grid_size: usize,
    utility: &Utility,
    cfg: &SolveConfig,
    rho0: &[f64],
) -> Result<MomentSolution> {
    let worst_case = worst_case_matrix(moments, b, c, grid_size)?;
    let zterm = moment_effective_zterm(&worst_case.values, &moments.mean, cfg.gamma)?;
    let (value_function, policy) = bellman::solve(&zterm, utility, cfg)?;
    let objective = expected_cost(&policy, &CostModel::single(&zterm), utility, cfg, rho0)?;
    Ok(MomentSolution {
        worst_case,
        zterm,
        value_function,
        policy,
        objective,
    })
}
