//! Dense square matrices in the column-stochastic convention.
//!
//! Entry `(alpha, beta)` is the weight of a transition FROM origin state
//! `beta` TO destination state `alpha`, so every column describes one origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on column sums for a matrix to count as column-stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Plain dense `n x n` matrix, row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from row-major data; `rows[alpha][beta]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::data(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Builds from origin columns; `columns[beta][alpha]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let mut m = Self::zeros(n);
        for (beta, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::data(format!(
                    "column {beta} has {} entries, expected {n}",
                    col.len()
                )));
            }
            for (alpha, &v) in col.iter().enumerate() {
                m.set(alpha, beta, v);
            }
        }
        Ok(m)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for alpha in 0..n {
            for beta in 0..n {
                m.set(alpha, beta, f(alpha, beta));
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.data[to * self.n + from]
    }

    #[inline]
    pub fn set(&mut self, to: usize, from: usize, value: f64) {
        self.data[to * self.n + from] = value;
    }

    pub fn column(&self, from: usize) -> Vec<f64> {
        (0..self.n).map(|to| self.get(to, from)).collect()
    }

    pub fn row(&self, to: usize) -> &[f64] {
        &self.data[to * self.n..(to + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column_sum(&self, from: usize) -> f64 {
        (0..self.n).map(|to| self.get(to, from)).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.n, other.n, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Column-stochastic matrix: nonnegative entries, every column sums to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SquareMatrix", into = "SquareMatrix")]
pub struct StochasticMatrix(SquareMatrix);

impl StochasticMatrix {
    /// Validates at [`STOCHASTIC_TOL`].
    pub fn new(m: SquareMatrix) -> Result<Self> {
        Self::with_tolerance(m, STOCHASTIC_TOL)
    }

    pub fn with_tolerance(m: SquareMatrix, tol: f64) -> Result<Self> {
        let n = m.n();
        if n == 0 {
            return Err(Error::data("empty transition matrix"));
        }
        for beta in 0..n {
            for alpha in 0..n {
                let v = m.get(alpha, beta);
                if !v.is_finite() || v < -tol || v > 1.0 + tol {
                    return Err(Error::data(format!(
                        "entry ({alpha},{beta}) = {v} outside [0, 1]"
                    )));
                }
            }
            let s = m.column_sum(beta);
            if (s - 1.0).abs() > tol {
                return Err(Error::data(format!(
                    "column {beta} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_columns(columns)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(SquareMatrix::identity(n))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n()
    }

    #[inline]
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.0.get(to, from)
    }

    pub fn column(&self, from: usize) -> Vec<f64> {
        self.0.column(from)
    }

    /// Destinations reachable from `from` (strictly positive entries).
    pub fn support(&self, from: usize) -> Vec<usize> {
        (0..self.n()).filter(|&to| self.get(to, from) > 0.0).collect()
    }

    pub fn same_support(&self, other: &StochasticMatrix) -> bool {
        self.n() == other.n()
            && self
                .0
                .as_slice()
                .iter()
                .zip(other.0.as_slice())
                .all(|(a, b)| (*a > 0.0) == (*b > 0.0))
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.0
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    /// Largest deviation of any column sum from one.
    pub fn stochasticity_error(&self) -> f64 {
        (0..self.n())
            .map(|b| (self.0.column_sum(b) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<SquareMatrix> for StochasticMatrix {
    type Error = Error;

    fn try_from(m: SquareMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<StochasticMatrix> for SquareMatrix {
    fn from(m: StochasticMatrix) -> Self {
        m.0
    }
}
