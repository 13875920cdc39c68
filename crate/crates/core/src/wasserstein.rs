//! Wasserstein-ball ambiguity on each origin column.
//!
//! The ball has order 1 and an l1 ground metric, centred on the empirical
//! distribution of the sample columns. For a loss that is convex in the
//! column (`-log`, possibly weighted), the inner supremum
//! `max_v loss(v) - lambda |v - y|_1` over the sample box intersected with the
//! simplex is attained on a finite candidate set. The outer problem in
//! `lambda` is a convex piecewise-linear minimization solved exactly by
//! sweeping the breakpoints.
//!
//! Two modes are provided. `Literal` prices the unweighted loss
//! `sum_a -log v_a` as a policy-independent constant per column. `Weighted`
//! uses the expectation-consistent loss `sum_a P_a (-log v_a)`, which couples
//! the worst case with the policy; each stage is then a convex-concave saddle
//! problem solved by column generation over worst-case mean-loss vectors.

use serde::{Deserialize, Serialize};

use crate::bellman::{log_sum_exp, softmax, terminal_ln_z, Policy, SolveConfig, Utility, ValueFunction, ZTerm};
use crate::dispatch::{expected_cost, CostModel};
use crate::error::{Error, Result};
use crate::markov::SampleSet;
use crate::matrix::{SquareMatrix, StochasticMatrix};

const FEAS_TOL: f64 = 1e-12;
/// Stage duality gap at which column generation stops.
pub const CUT_GAP_TOL: f64 = 1e-6;
pub const MAX_CUTS: usize = 500;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WassersteinMode {
    #[default]
    Weighted,
    Literal,
}

/// Enumerates the candidate maximizers for sample `y` in the box `[lo, hi]`.
///
/// Every coordinate but one (the slack) sits at `lo`, `y` or `hi`; the slack
/// takes the residual and must stay inside its own bounds. Calls `f` once per
/// feasible candidate, duplicates included.
fn for_each_candidate(lo: &[f64], hi: &[f64], y: &[f64], mut f: impl FnMut(&[f64])) {
    let k = lo.len();
    let mut v = vec![0.0; k];
    for slack in 0..k {
        let others: Vec<usize> = (0..k).filter(|&i| i != slack).collect();
        enumerate_levels(&others, 0, 0.0, lo, hi, Some(y), &mut v, &mut |v: &mut Vec<f64>, sum: f64| {
            let r = 1.0 - sum;
            if r >= lo[slack] - FEAS_TOL && r <= hi[slack] + FEAS_TOL {
                v[slack] = r.clamp(lo[slack], hi[slack]);
                f(v);
            }
        });
    }
}

/// Depth-first assignment of break levels to `coords`.
#[allow(clippy::too_many_arguments)]
fn enumerate_levels(
    coords: &[usize],
    depth: usize,
    sum: f64,
    lo: &[f64],
    hi: &[f64],
    y: Option<&[f64]>,
    v: &mut Vec<f64>,
    leaf: &mut dyn FnMut(&mut Vec<f64>, f64),
) {
    if depth == coords.len() {
        leaf(v, sum);
        return;
    }
    let i = coords[depth];
    let mut levels = [lo[i], hi[i], 0.0];
    let mut count = 2;
    if let Some(y) = y {
        levels[2] = y[i];
        count = 3;
    }
    for &level in &levels[..count] {
        v[i] = level;
        enumerate_levels(coords, depth + 1, sum + level, lo, hi, y, v, leaf);
    }
}

/// Vertices of `{lo <= v <= hi, sum v = 1}`; independent of any sample.
fn for_each_vertex(lo: &[f64], hi: &[f64], mut f: impl FnMut(&[f64])) {
    let k = lo.len();
    let mut v = vec![0.0; k];
    for slack in 0..k {
        let others: Vec<usize> = (0..k).filter(|&i| i != slack).collect();
        enumerate_levels(&others, 0, 0.0, lo, hi, None, &mut v, &mut |v: &mut Vec<f64>, sum: f64| {
            let r = 1.0 - sum;
            if r >= lo[slack] - FEAS_TOL && r <= hi[slack] + FEAS_TOL {
                v[slack] = r.clamp(lo[slack], hi[slack]);
                f(v);
            }
        });
    }
}

fn dedup(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let dup = out
            .iter()
            .rev()
            .take(8)
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= FEAS_TOL));
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Deduplicated candidate set for sample `y` in the box `[lo, hi]`.
pub fn candidate_points(lo: &[f64], hi: &[f64], y: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_box(lo, hi)?;
    if y.len() != lo.len() {
        return Err(Error::data("sample and box dimensions differ"));
    }
    let mut points = Vec::new();
    for_each_candidate(lo, hi, y, |v| points.push(v.to_vec()));
    if points.is_empty() {
        return Err(Error::data("box does not meet the simplex"));
    }
    Ok(dedup(points))
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.is_empty() || lo.len() != hi.len() {
        return Err(Error::data("box bounds are empty or mismatched"));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !(*l > 0.0)) {
        return Err(Error::data("box needs 0 < lo <= hi"));
    }
    let (sl, sh): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
    if sl > 1.0 + 1e-9 || sh < 1.0 - 1e-9 {
        return Err(Error::data("box does not meet the simplex"));
    }
    Ok(())
}

/// `sum_a w_a (-log v_a)`.
pub fn weighted_loss(weights: &[f64], v: &[f64]) -> f64 {
    weights.iter().zip(v).map(|(w, x)| if *w == 0.0 { 0.0 } else { -w * x.ln() }).sum()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `max_v loss(v) - lambda |v - y|_1` over `candidates`; returns the value and
/// the index of the first maximizer.
pub fn inner_sup(lambda: f64, y: &[f64], candidates: &[Vec<f64>], weights: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in candidates.iter().enumerate() {
        let g = weighted_loss(weights, v) - lambda * l1(v, y);
        if g > best.0 {
            best = (g, i);
        }
    }
    best
}

/// Line `a - d * lambda` contributed by one candidate.
#[derive(Clone, Debug)]
struct Line {
    a: f64,
    d: f64,
    /// Mean-loss vector `-log v`.
    loss: Vec<f64>,
}

/// Upper envelope of lines over `lambda >= 0`, ordered by increasing lambda.
struct Envelope {
    lines: Vec<Line>,
    /// `breaks[i]` separates `lines[i]` and `lines[i + 1]`.
    breaks: Vec<f64>,
}

impl Envelope {
    fn build(mut cand: Vec<(f64, f64, usize)>, materialize: impl Fn(usize) -> Vec<f64>) -> Self {
        // Steepest first; for equal slopes keep the highest intercept.
        cand.sort_by(|x, y| y.1.total_cmp(&x.1).then(y.0.total_cmp(&x.0)));
        cand.dedup_by(|later, first| later.1 == first.1);
        let cross = |p: &(f64, f64, usize), q: &(f64, f64, usize)| (p.0 - q.0) / (p.1 - q.1);
        let mut hull: Vec<(f64, f64, usize)> = Vec::new();
        for c in cand {
            while hull.len() >= 2 {
                let l1 = &hull[hull.len() - 2];
                let l2 = &hull[hull.len() - 1];
                if cross(l1, &c) <= cross(l1, l2) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(c);
        }
        // Drop pieces that are only active for lambda < 0.
        let mut start = 0;
        while start + 1 < hull.len() && cross(&hull[start], &hull[start + 1]) <= 0.0 {
            start += 1;
        }
        let hull = &hull[start..];
        let breaks = hull.windows(2).map(|w| cross(&w[0], &w[1])).collect();
        let lines = hull
            .iter()
            .map(|&(a, d, id)| Line {
                a,
                d,
                loss: materialize(id),
            })
            .collect();
        Self { lines, breaks }
    }

    /// Active piece just left (`strict`) or right of `lambda`.
    fn piece(&self, lambda: f64, strict: bool) -> usize {
        if strict {
            self.breaks.partition_point(|&b| b < lambda)
        } else {
            self.breaks.partition_point(|&b| b <= lambda)
        }
    }

    fn eval(&self, lambda: f64) -> f64 {
        let l = &self.lines[self.piece(lambda, false)];
        l.a - l.d * lambda
    }
}

/// Outcome of the dual radius search.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSearch {
    pub lambda_star: f64,
    /// `lambda* psi + (1/N) sum_y g_y(lambda*)`.
    pub value: f64,
    /// Mean loss vector of a worst-case distribution; `weights . q = value`.
    pub q: Vec<f64>,
}

fn sweep(psi: f64, envelopes: &[Envelope]) -> Result<LambdaSearch> {
    let n = envelopes.len() as f64;
    let mut events: Vec<(f64, f64)> = Vec::new();
    let mut d_sum = 0.0;
    let mut max_loss: f64 = 0.0;
    let mut min_d = f64::INFINITY;
    for e in envelopes {
        d_sum += e.lines[0].d;
        for (i, b) in e.breaks.iter().enumerate() {
            events.push((*b, e.lines[i].d - e.lines[i + 1].d));
        }
        for l in &e.lines {
            max_loss = max_loss.max(l.a.abs());
            if l.d > 0.0 {
                min_d = min_d.min(l.d);
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut lambda = 0.0;
    let mut i = 0;
    while psi - d_sum / n < -1e-15 && i < events.len() {
        lambda = events[i].0;
        while i < events.len() && events[i].0 == lambda {
            d_sum -= events[i].1;
            i += 1;
        }
    }
    if psi - d_sum / n < -1e-12 {
        return Err(Error::numerical("lambda search ran past the last breakpoint"));
    }
    let cap = if min_d.is_finite() { 10.0 * max_loss.max(1.0) / min_d } else { f64::INFINITY };
    if lambda > cap {
        return Err(Error::numerical(format!("lambda* = {lambda} exceeds cap {cap}")));
    }

    // Mix left and right active pieces so the mean transport equals psi.
    let k = envelopes[0].lines[0].loss.len();
    let (mut d_left, mut d_right) = (0.0, 0.0);
    let pieces: Vec<(usize, usize)> = envelopes
        .iter()
        .map(|e| {
            let (l, r) = if lambda > 0.0 { (e.piece(lambda, true), e.piece(lambda, false)) } else { (0, 0) };
            d_left += e.lines[l].d;
            d_right += e.lines[r].d;
            (l, r)
        })
        .collect();
    let theta = if lambda > 0.0 && d_left > d_right {
        ((psi * n - d_right) / (d_left - d_right)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut q = vec![0.0; k];
    let mut value = lambda * psi;
    for (e, &(l, r)) in envelopes.iter().zip(&pieces) {
        value += e.eval(lambda) / n;
        for a in 0..k {
            q[a] += (theta * e.lines[l].loss[a] + (1.0 - theta) * e.lines[r].loss[a]) / n;
        }
    }
    Ok(LambdaSearch {
        lambda_star: lambda,
        value,
        q,
    })
}

/// Minimizes `lambda psi + (1/N) sum_y g_y(lambda)` over `lambda >= 0`.
pub fn lambda_search(
    psi: f64,
    samples: &[Vec<f64>],
    candidates: &[Vec<Vec<f64>>],
    weights: &[f64],
) -> Result<LambdaSearch> {
    if !(psi >= 0.0) {
        return Err(Error::config(format!("psi must be >= 0, got {psi}")));
    }
    if samples.is_empty() || samples.len() != candidates.len() {
        return Err(Error::data("need one candidate set per sample"));
    }
    let envelopes: Vec<Envelope> = samples
        .iter()
        .zip(candidates)
        .map(|(y, cands)| {
            let lines = cands
                .iter()
                .enumerate()
                .map(|(i, v)| (weighted_loss(weights, v), l1(v, y), i))
                .collect();
            Envelope::build(lines, |i| cands[i].iter().map(|x| -x.ln()).collect())
        })
        .collect();
    sweep(psi, &envelopes)
}

/// Ambiguity set of one origin column, restricted to its support.
#[derive(Clone, Debug)]
pub struct ColumnAmbiguity {
    pub beta: usize,
    pub support: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub psi: f64,
    /// Vertices of the box intersected with the simplex.
    vertices: Vec<Vec<f64>>,
    /// Largest l1 distance from any sample to any feasible point.
    pub d_max: f64,
}

/// Worst case for a given weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCase {
    pub lambda_star: f64,
    pub value: f64,
    pub q: Vec<f64>,
    pub n_candidates: usize,
}

impl ColumnAmbiguity {
    pub fn new(samples: &SampleSet, beta: usize, psi: f64) -> Result<Self> {
        if !(psi >= 0.0 && psi.is_finite()) {
            return Err(Error::config(format!("psi must be >= 0, got {psi}")));
        }
        let support = samples.samples()[0].support(beta);
        let cols: Vec<Vec<f64>> = samples
            .columns(beta)
            .into_iter()
            .map(|c| support.iter().map(|&a| c[a]).collect())
            .collect();
        let k = support.len();
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        for c in &cols {
            for i in 0..k {
                lo[i] = lo[i].min(c[i]);
                hi[i] = hi[i].max(c[i]);
            }
        }
        check_box(&lo, &hi)?;
        let mut vertices = Vec::new();
        for_each_vertex(&lo, &hi, |v| vertices.push(v.to_vec()));
        let vertices = dedup(vertices);
        if vertices.is_empty() {
            return Err(Error::data(format!("column {beta}: box does not meet the simplex")));
        }
        let d_max = cols
            .iter()
            .flat_map(|y| vertices.iter().map(move |v| l1(v, y)))
            .fold(0.0, f64::max);
        Ok(Self {
            beta,
            support,
            samples: cols,
            lo,
            hi,
            psi,
            vertices,
            d_max,
        })
    }

    /// True when the ball already covers every feasible distribution.
    pub fn saturated(&self) -> bool {
        self.psi >= self.d_max
    }

    /// Mean loss vector of the empirical distribution.
    pub fn empirical_q(&self) -> Vec<f64> {
        let k = self.support.len();
        let n = self.samples.len() as f64;
        let mut q = vec![0.0; k];
        for y in &self.samples {
            for i in 0..k {
                q[i] -= y[i].ln() / n;
            }
        }
        q
    }

    /// Worst-case expected loss for `weights` over the support.
    pub fn worst_case(&self, weights: &[f64]) -> Result<WorstCase> {
        if weights.len() != self.support.len() {
            return Err(Error::data("weight vector does not match the column support"));
        }
        if self.psi == 0.0 {
            let q = self.empirical_q();
            return Ok(WorstCase {
                lambda_star: f64::INFINITY,
                value: weights.iter().zip(&q).map(|(w, x)| w * x).sum(),
                q,
                n_candidates: self.samples.len(),
            });
        }
        if self.saturated() {
            // lambda* = 0: the worst case is a box vertex, whatever the sample.
            let (value, best) = inner_sup(0.0, &self.samples[0], &self.vertices, weights);
            return Ok(WorstCase {
                lambda_star: 0.0,
                value,
                q: self.vertices[best].iter().map(|x| -x.ln()).collect(),
                n_candidates: self.vertices.len(),
            });
        }
        let mut n_candidates = 0;
        let mut buf: Vec<f64> = Vec::new();
        let k = self.support.len();
        let envelopes: Vec<Envelope> = self
            .samples
            .iter()
            .map(|y| {
                buf.clear();
                let mut lines = Vec::new();
                for_each_candidate(&self.lo, &self.hi, y, |v| {
                    lines.push((weighted_loss(weights, v), l1(v, y), buf.len() / k));
                    buf.extend_from_slice(v);
                });
                n_candidates += lines.len();
                Envelope::build(lines, |i| buf[i * k..(i + 1) * k].iter().map(|x| -x.ln()).collect())
            })
            .collect();
        let s = sweep(self.psi, &envelopes)?;
        Ok(WorstCase {
            lambda_star: s.lambda_star,
            value: s.value,
            q: s.q,
            n_candidates,
        })
    }
}

/// One diagnostics row per `(t, beta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: usize,
    pub beta: usize,
    pub lambda_star: f64,
    pub worst_case: f64,
    pub n_candidates: usize,
    pub cuts_used: usize,
}

/// Result of one weighted stage problem.
#[derive(Clone, Debug)]
pub struct StageSolution {
    /// `min_P max_q` stage value.
    pub value: f64,
    /// Policy column over the support.
    pub policy: Vec<f64>,
    pub worst_case: WorstCase,
    pub gap: f64,
    pub cuts_used: usize,
}

/// `-g log sum exp(logits - q)`.
fn saddle_value(logits: &[f64], q: &[f64], gamma: f64) -> f64 {
    -gamma * log_sum_exp(logits.iter().zip(q).map(|(l, x)| l - x))
}

fn shifted(logits: &[f64], q: &[f64]) -> Vec<f64> {
    logits.iter().zip(q).map(|(l, x)| l - x).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes the concave saddle value over the convex hull of `cuts`
/// (pairwise Frank-Wolfe with exact line search); returns the weights.
fn master(logits: &[f64], cuts: &[Vec<f64>], mut w: Vec<f64>, gamma: f64) -> Vec<f64> {
    let k = logits.len();
    let mix = |w: &[f64]| {
        let mut q = vec![0.0; k];
        for (wi, c) in w.iter().zip(cuts) {
            if *wi > 0.0 {
                for a in 0..k {
                    q[a] += wi * c[a];
                }
            }
        }
        q
    };
    for _ in 0..10_000 {
        let q = mix(&w);
        let p = softmax(&shifted(logits, &q));
        let s: Vec<f64> = cuts.iter().map(|c| dot(&p, c)).collect();
        let cur = dot(&p, &q);
        let (i_fw, s_fw) = s.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        if gamma * (s_fw - cur) <= 1e-12 * (1.0 + cur.abs()) {
            break;
        }
        let (j_aw, _) = s
            .iter()
            .enumerate()
            .filter(|(j, _)| w[*j] > 0.0)
            .fold((0, f64::INFINITY), |b, (j, &v)| if v < b.1 { (j, v) } else { b });
        if i_fw == j_aw {
            break;
        }
        let delta: Vec<f64> = cuts[i_fw].iter().zip(&cuts[j_aw]).map(|(a, b)| a - b).collect();
        let max_step = w[j_aw];
        // Derivative of the saddle value along delta is g E_P[delta], decreasing.
        let slope = |step: f64| {
            let qs: Vec<f64> = q.iter().zip(&delta).map(|(x, d)| x + step * d).collect();
            dot(&softmax(&shifted(logits, &qs)), &delta)
        };
        let step = if slope(max_step) >= 0.0 {
            max_step
        } else {
            let (mut a, mut b) = (0.0, max_step);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if slope(mid) >= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        if step <= 0.0 {
            break;
        }
        w[i_fw] += step;
        w[j_aw] -= step;
        if w[j_aw] < 1e-15 {
            w[j_aw] = 0.0;
        }
    }
    w
}

/// Solves `min_P sum_a P_a (phi_a + g log P_a) + g WC(P)` for one column,
/// where `logits = -phi / g` over the support.
pub fn stage_solve(col: &ColumnAmbiguity, logits: &[f64], gamma: f64, pool: &mut Vec<Vec<f64>>) -> Result<StageSolution> {
    if pool.is_empty() {
        pool.push(col.empirical_q());
    }
    let first = pool
        .iter()
        .enumerate()
        .map(|(i, c)| (i, saddle_value(logits, c, gamma)))
        .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
        .0;
    let mut w = vec![0.0; pool.len()];
    w[first] = 1.0;
    let mut cuts_used = 0;
    loop {
        w = master(logits, pool, w, gamma);
        let k = logits.len();
        let mut q = vec![0.0; k];
        for (wi, c) in w.iter().zip(pool.iter()) {
            for a in 0..k {
                q[a] += wi * c[a];
            }
        }
        let p = softmax(&shifted(logits, &q));
        let wc = col.worst_case(&p)?;
        let gap = gamma * (wc.value - dot(&p, &q));
        if gap <= CUT_GAP_TOL || col.psi == 0.0 {
            return Ok(StageSolution {
                value: saddle_value(logits, &q, gamma),
                policy: p,
                worst_case: wc,
                gap,
                cuts_used,
            });
        }
        if cuts_used >= MAX_CUTS {
            return Err(Error::numerical(format!(
                "cutting planes stalled for column {} with gap {gap:e}",
                col.beta
            )));
        }
        pool.push(wc.q.clone());
        w.push(0.0);
        cuts_used += 1;
    }
}

#[derive(Clone, Debug)]
pub struct WassersteinSolution {
    pub policy: Policy,
    pub value_function: ValueFunction,
    pub objective: f64,
    pub diagnostics: Vec<Diagnostics>,
}

/// Support indicator used as the base matrix: the policy may use every
/// transition seen in the samples, with no nominal weighting.
fn indicator_base(samples: &SampleSet) -> SquareMatrix {
    samples.samples()[0].matrix().map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Backward induction with a Wasserstein ball on every column.
pub fn solve_wasserstein_mdp(
    samples: &SampleSet,
    psi: f64,
    utility: &Utility,
    cfg: &SolveConfig,
    mode: WassersteinMode,
    rho0: &[f64],
) -> Result<WassersteinSolution> {
    cfg.validate()?;
    let n = samples.n();
    if utility.n() != n {
        return Err(Error::data("utility and samples have different state counts"));
    }
    let columns = (0..n)
        .map(|b| ColumnAmbiguity::new(samples, b, psi))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        WassersteinMode::Literal => solve_literal(&columns, samples, utility, cfg, rho0),
        WassersteinMode::Weighted => solve_weighted(&columns, samples, utility, cfg, rho0),
    }
}

fn solve_literal(
    columns: &[ColumnAmbiguity],
    samples: &SampleSet,
    utility: &Utility,
    cfg: &SolveConfig,
    rho0: &[f64],
) -> Result<WassersteinSolution> {
    let worst: Vec<WorstCase> = columns
        .iter()
        .map(|c| c.worst_case(&vec![1.0; c.support.len()]))
        .collect::<Result<_>>()?;
    let n = columns.len();
    let zterm = ZTerm::new(SquareMatrix::zeros(n), indicator_base(samples))?
        .with_column_cost(worst.iter().map(|w| cfg.gamma * w.value).collect())?;
    let (value_function, policy) = crate::bellman::solve(&zterm, utility, cfg)?;
    let objective = expected_cost(&policy, &CostModel::single(&zterm), utility, cfg, rho0)?;
    let diagnostics = (0..utility.horizon())
        .flat_map(|t| {
            worst.iter().enumerate().map(move |(beta, w)| Diagnostics {
                t,
                beta,
                lambda_star: w.lambda_star,
                worst_case: w.value,
                n_candidates: w.n_candidates,
                cuts_used: 0,
            })
        })
        .collect();
    Ok(WassersteinSolution {
        policy,
        value_function,
        objective,
        diagnostics,
    })
}

fn solve_weighted(
    columns: &[ColumnAmbiguity],
    samples: &SampleSet,
    utility: &Utility,
    cfg: &SolveConfig,
    rho0: &[f64],
) -> Result<WassersteinSolution> {
    let n = columns.len();
    let horizon = utility.horizon();
    let gamma = cfg.gamma;
    let mut ln_z = vec![Vec::new(); horizon + 1];
    ln_z[horizon] = terminal_ln_z(utility, cfg);
    let mut steps = vec![None; horizon];
    let mut extras = vec![vec![0.0; n]; horizon];
    let mut diagnostics = Vec::with_capacity(horizon * n);
    let mut pools: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    for t in (0..horizon).rev() {
        let mut row = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for (beta, col) in columns.iter().enumerate() {
            let logits: Vec<f64> = col.support.iter().map(|&a| ln_z[t + 1][a]).collect();
            let stage = stage_solve(col, &logits, gamma, &mut pools[beta])?;
            row[beta] = utility.at(t)[beta] / gamma - stage.value / gamma;
            if !row[beta].is_finite() {
                return Err(Error::numerical(format!("desirability vanished at t={t}, state {beta}")));
            }
            extras[t][beta] = gamma * stage.worst_case.value;
            let mut full = vec![0.0; n];
            for (&a, &p) in col.support.iter().zip(&stage.policy) {
                full[a] = p;
            }
            cols.push(full);
            diagnostics.push(Diagnostics {
                t,
                beta,
                lambda_star: stage.worst_case.lambda_star,
                worst_case: stage.worst_case.value,
                n_candidates: stage.worst_case.n_candidates,
                cuts_used: stage.cuts_used,
            });
        }
        ln_z[t] = row;
        steps[t] = Some(StochasticMatrix::from_columns(&cols)?);
    }
    diagnostics.sort_by_key(|d| (d.t, d.beta));
    let policy = Policy::new(steps.into_iter().map(|s| s.expect("filled")).collect())?;
    let base = ZTerm::new(SquareMatrix::zeros(n), indicator_base(samples))?;
    let model = CostModel {
        schedule: std::slice::from_ref(&base),
        extras: Some(&extras),
    };
    let objective = expected_cost(&policy, &model, utility, cfg, rho0)?;
    Ok(WassersteinSolution {
        policy,
        value_function: ValueFunction { gamma, ln_z },
        objective,
        diagnostics,
    })
}
