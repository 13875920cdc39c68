//! Small dense linear programs: two-phase tableau simplex.
//!
//! Sized for the moment subproblems (a handful of constraints and a few
//! hundred grid variables, or the transpose). Entering columns follow
//! Dantzig's rule and switch to Bland's rule after a run of degenerate
//! pivots, which rules out cycling.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

/// Variable bounds; use infinities for free directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const NONNEG: Bounds = Bounds {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const FREE: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bounds>,
}

impl LpProblem {
    /// Minimization with every variable nonnegative.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            maximize: false,
            constraints: Vec::new(),
            bounds: vec![Bounds::NONNEG; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            maximize: true,
            ..Self::minimize(objective)
        }
    }

    pub fn constrain(mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        self.constraints.push(Constraint::new(coeffs, sense, rhs));
        self
    }

    pub fn bound(mut self, var: usize, bounds: Bounds) -> Self {
        self.bounds[var] = bounds;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if n == 0 {
            return Err(Error::data("LP has no variables"));
        }
        if self.bounds.len() != n {
            return Err(Error::data("LP bounds length differs from variable count"));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("LP objective is not finite"));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::data(format!("LP row {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("LP row {i} is not finite")));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lo.is_nan() || b.hi.is_nan() || b.lo > b.hi || b.lo == f64::INFINITY || b.hi == f64::NEG_INFINITY {
                return Err(Error::data(format!("LP variable {j} has invalid bounds")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the caller's sense; NaN unless optimal.
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

pub const MAX_ITERATIONS: usize = 50_000;
const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = offset + y`
    Shift { col: usize, offset: f64 },
    /// `x = offset - y`
    Flip { col: usize, offset: f64 },
    /// `x = y+ - y-`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rows[r][c] = 1.0;
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Loads reduced costs for `cost` over the current basis.
    fn price(&mut self, cost: &[f64]) {
        let mut obj = cost.to_vec();
        obj.push(0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (v, rv) in obj.iter_mut().zip(row) {
                    *v -= cb * rv;
                }
            }
        }
        self.obj = obj;
    }

    fn run(&mut self, allowed: usize) -> Result<Outcome> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(Error::numerical(format!("simplex hit the {MAX_ITERATIONS}-iteration cap")));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let d = self.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, r)) => {
                            if ratio < r - 1e-12 * r.abs().max(1.0)
                                || (ratio <= r + 1e-12 * r.abs().max(1.0) && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, r))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            self.iterations += 1;
        }
    }
}

/// Solves `problem` to optimality or reports infeasibility / unboundedness.
pub fn lp_solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let nvars = problem.objective.len();

    // Substitute bounded / free variables by nonnegative columns.
    let mut maps = Vec::with_capacity(nvars);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new();
    for b in &problem.bounds {
        if b.lo.is_finite() {
            maps.push(VarMap::Shift { col: ncols, offset: b.lo });
            if b.hi.is_finite() {
                extra_rows.push((ncols, b.hi - b.lo));
            }
            ncols += 1;
        } else if b.hi.is_finite() {
            maps.push(VarMap::Flip { col: ncols, offset: b.hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let sign = if problem.maximize { -1.0 } else { 1.0 };
    let mut cost = vec![0.0; ncols];
    for (j, m) in maps.iter().enumerate() {
        let c = sign * problem.objective[j];
        match *m {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Flip { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Rows over the substituted columns.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for con in &problem.constraints {
        let mut a = vec![0.0; ncols];
        let mut rhs = con.rhs;
        for (j, m) in maps.iter().enumerate() {
            let v = con.coeffs[j];
            if v == 0.0 {
                continue;
            }
            match *m {
                VarMap::Shift { col, offset } => {
                    a[col] += v;
                    rhs -= v * offset;
                }
                VarMap::Flip { col, offset } => {
                    a[col] -= v;
                    rhs -= v * offset;
                }
                VarMap::Split { pos, neg } => {
                    a[pos] += v;
                    a[neg] -= v;
                }
            }
        }
        rows.push((a, con.sense, rhs));
    }
    for &(col, width) in &extra_rows {
        let mut a = vec![0.0; ncols];
        a[col] = 1.0;
        rows.push((a, Sense::Le, width));
    }
    // Nonnegative right-hand sides.
    for (a, sense, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let art_start = ncols + n_slack;
    let width = art_start + n_art;
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        obj: Vec::new(),
        basis: Vec::with_capacity(m),
        width,
        iterations: 0,
    };
    let (mut s, mut k) = (ncols, art_start);
    for (a, sense, rhs) in &rows {
        let mut row = vec![0.0; width + 1];
        row[..ncols].copy_from_slice(a);
        row[width] = *rhs;
        match sense {
            Sense::Le => {
                row[s] = 1.0;
                tab.basis.push(s);
                s += 1;
            }
            Sense::Ge => {
                row[s] = -1.0;
                s += 1;
                row[k] = 1.0;
                tab.basis.push(k);
                k += 1;
            }
            Sense::Eq => {
                row[k] = 1.0;
                tab.basis.push(k);
                k += 1;
            }
        }
        tab.rows.push(row);
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        phase1[art_start..].iter_mut().for_each(|v| *v = 1.0);
        tab.price(&phase1);
        tab.run(width)?;
        let infeas = -tab.obj[width];
        let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                x: Vec::new(),
                iterations: tab.iterations,
            });
        }
        // Drive remaining artificials out of the basis, dropping redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                let col = (0..art_start)
                    .filter(|&j| tab.rows[i][j].abs() > 1e-9)
                    .max_by(|&a, &b| tab.rows[i][a].abs().total_cmp(&tab.rows[i][b].abs()));
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut phase2 = vec![0.0; width];
    phase2[..ncols].copy_from_slice(&cost);
    tab.price(&phase2);
    let outcome = tab.run(art_start)?;
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            value: f64::NAN,
            x: Vec::new(),
            iterations: tab.iterations,
        });
    }

    let mut y = vec![0.0; ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < ncols {
            y[b] = tab.rhs(i).max(0.0);
        }
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, offset } => offset + y[col],
            VarMap::Flip { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value,
        x,
        iterations: tab.iterations,
    })
}
