//! Aggregate-power discretization, transition estimation, the perturbed
//! observation set and its entrywise moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{SquareMatrix, StochasticMatrix};

/// Uniform power bins over the observed range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub n: usize,
    /// `n + 1` ascending edges, kW.
    pub bin_edges: Vec<f64>,
    /// Representative power of each state (bin midpoint), kW.
    pub p_rated_state: Vec<f64>,
}

impl StateSpace {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("need at least 2 states, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::data(format!(
                "power range [{lo}, {hi}] is empty; cannot discretize a constant series"
            )));
        }
        let width = (hi - lo) / n as f64;
        let mut bin_edges: Vec<f64> = (0..=n).map(|i| lo + width * i as f64).collect();
        bin_edges[n] = hi;
        let p_rated_state = bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            n,
            bin_edges,
            p_rated_state,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.bin_edges.len() != self.n + 1 || self.p_rated_state.len() != self.n {
            return Err(Error::data("state space arrays do not match n"));
        }
        for (i, w) in self.bin_edges.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::data("bin edges must be strictly increasing"));
            }
            let p = self.p_rated_state[i];
            if !(p > w[0] && p < w[1]) {
                return Err(Error::data(format!(
                    "representative power of state {i} lies outside its bin"
                )));
            }
        }
        Ok(())
    }

    /// State index of a power level; values beyond the edges are clamped.
    pub fn state_of(&self, power: f64) -> usize {
        let lo = self.bin_edges[0];
        let hi = self.bin_edges[self.n];
        let width = (hi - lo) / self.n as f64;
        let idx = ((power - lo) / width).floor();
        if idx.is_nan() || idx < 0.0 {
            0
        } else {
            (idx as usize).min(self.n - 1)
        }
    }

    pub fn min_power(&self) -> f64 {
        self.p_rated_state[0]
    }

    pub fn max_power(&self) -> f64 {
        self.p_rated_state[self.n - 1]
    }
}

/// Bins a power series uniformly between its extremes.
pub fn discretize(series: &[f64], n: usize) -> Result<(StateSpace, Vec<usize>)> {
    if series.is_empty() {
        return Err(Error::data("cannot discretize an empty series"));
    }
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let space = StateSpace::uniform(lo, hi, n)?;
    let states = series.iter().map(|&p| space.state_of(p)).collect();
    Ok((space, states))
}

/// Keeps every `every`-th sample, starting with the last sample of the
/// first block, so that index `k` is the state at the end of MDP step `k`.
pub fn thin(series: &[f64], every: usize) -> Vec<f64> {
    let every = every.max(1);
    series.iter().skip(every - 1).step_by(every).copied().collect()
}

/// Count-based estimate of the column-stochastic transition matrix.
///
/// `smoothing > 0` spreads that much extra mass over every destination of a
/// column that would otherwise be deterministic.
pub fn estimate_transitions(states: &[usize], n: usize, smoothing: f64) -> Result<StochasticMatrix> {
    if states.len() < 2 {
        return Err(Error::data("need at least two observations to estimate transitions"));
    }
    if let Some(&bad) = states.iter().find(|&&s| s >= n) {
        return Err(Error::data(format!("state index {bad} outside 0..{n}")));
    }
    let mut counts = SquareMatrix::zeros(n);
    for w in states.windows(2) {
        let (from, to) = (w[0], w[1]);
        counts.set(to, from, counts.get(to, from) + 1.0);
    }
    let mut columns = Vec::with_capacity(n);
    for beta in 0..n {
        let total = counts.column_sum(beta);
        if total == 0.0 {
            return Err(Error::data(format!(
                "state {beta} is never visited as an origin; transition column undefined"
            )));
        }
        let mut col: Vec<f64> = counts.column(beta).iter().map(|c| c / total).collect();
        let deterministic = col.iter().filter(|&&v| v > 0.0).count() == 1;
        if smoothing > 0.0 && deterministic {
            let s: f64 = col.iter_mut().map(|v| {
                *v += smoothing;
                *v
            })
            .sum();
            col.iter_mut().for_each(|v| *v /= s);
        }
        columns.push(col);
    }
    StochasticMatrix::from_columns(&columns)
}

/// Where a [`SampleSet`] came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Perturbed { fraction: f64, seed: u64 },
}

/// A set of observed or perturbed default transition matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    samples: Vec<StochasticMatrix>,
    pub provenance: Provenance,
}

impl SampleSet {
    /// Checks that all members share one shape and one zero pattern.
    pub fn new(samples: Vec<StochasticMatrix>, provenance: Provenance) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::data("sample set is empty"))?;
        for (j, s) in samples.iter().enumerate().skip(1) {
            if s.n() != first.n() {
                return Err(Error::data(format!("sample {j} has a different size")));
            }
            if !s.same_support(first) {
                return Err(Error::data(format!(
                    "sample {j} has a different structural zero pattern"
                )));
            }
        }
        Ok(Self {
            samples,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n(&self) -> usize {
        self.samples[0].n()
    }

    pub fn samples(&self) -> &[StochasticMatrix] {
        &self.samples
    }

    /// Column `beta` of every sample.
    pub fn columns(&self, beta: usize) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.column(beta)).collect()
    }
}

/// Multiplies every nonzero entry by `1 + u`, `u ~ U(-fraction, fraction)`,
/// and renormalizes each column.
pub fn perturb_samples(
    nominal: &StochasticMatrix,
    fraction: f64,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!(
            "perturbation fraction must lie in [0, 1), got {fraction}"
        )));
    }
    if count < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let n = nominal.n();
    let mut samples = Vec::with_capacity(count);
    for j in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut columns = Vec::with_capacity(n);
        for beta in 0..n {
            let mut col = nominal.column(beta);
            for v in col.iter_mut() {
                if *v > 0.0 && fraction > 0.0 {
                    *v *= 1.0 + rng.gen_range(-fraction..fraction);
                }
            }
            let s: f64 = col.iter().sum();
            col.iter_mut().for_each(|v| *v /= s);
            columns.push(col);
        }
        samples.push(StochasticMatrix::from_columns(&columns)?);
    }
    SampleSet::new(samples, Provenance::Perturbed { fraction, seed })
}

/// Entrywise sample mean and unbiased variance.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrices {
    pub mean: StochasticMatrix,
    pub variance: SquareMatrix,
    pub count: usize,
}

impl MomentMatrices {
    /// Replaces the entrywise variance by its average over the support.
    pub fn pooled(&self) -> MomentMatrices {
        let n = self.mean.n();
        let mut total = 0.0;
        let mut k = 0usize;
        for a in 0..n {
            for b in 0..n {
                if self.mean.get(a, b) > 0.0 {
                    total += self.variance.get(a, b);
                    k += 1;
                }
            }
        }
        let pooled = if k > 0 { total / k as f64 } else { 0.0 };
        let variance = SquareMatrix::from_fn(n, |a, b| {
            if self.mean.get(a, b) > 0.0 {
                pooled
            } else {
                0.0
            }
        });
        MomentMatrices {
            mean: self.mean.clone(),
            variance,
            count: self.count,
        }
    }
}

pub fn sample_moments(samples: &SampleSet) -> Result<MomentMatrices> {
    let count = samples.len();
    if count < 2 {
        return Err(Error::data("moments need at least two samples"));
    }
    let n = samples.n();
    // Welford updates: exact for identical samples, stable otherwise.
    let mut mean = SquareMatrix::zeros(n);
    let mut m2 = SquareMatrix::zeros(n);
    for (k, s) in samples.samples().iter().enumerate() {
        for a in 0..n {
            for b in 0..n {
                let x = s.get(a, b);
                let d = x - mean.get(a, b);
                let mu = mean.get(a, b) + d / (k + 1) as f64;
                mean.set(a, b, mu);
                m2.set(a, b, m2.get(a, b) + d * (x - mu));
            }
        }
    }
    let variance = m2;
    let variance = variance.map(|v| v / (count - 1) as f64);
    Ok(MomentMatrices {
        mean: StochasticMatrix::new(mean)?,
        variance,
        count,
    })
}
