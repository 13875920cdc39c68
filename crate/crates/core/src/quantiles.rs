//! Student-t and chi-square quantiles, and the confidence bounds on the
//! empirical mean and variance of each transition probability.
//!
//! The CDFs are regularized incomplete beta and gamma functions evaluated by
//! series / continued fractions; quantiles invert them with Newton steps kept
//! inside a shrinking bisection bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MomentMatrices;
use crate::matrix::SquareMatrix;

/// Lower clamp for the worst-case mean of a structurally nonzero entry.
pub const EPS_FLOOR: f64 = 1e-9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_MAX_ITER: usize = 200_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        (sum * ln_front.exp()).min(1.0)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..CF_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        (1.0 - ln_front.exp() * h).max(0.0)
    }
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn t_cdf(x: f64, dof: u64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let nu = dof as f64;
    let tail = 0.5 * beta_inc(0.5 * nu, 0.5, nu / (nu + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn t_pdf(x: f64, dof: u64) -> f64 {
    let nu = dof as f64;
    let ln = ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p();
    ln.exp()
}

/// CDF of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(0.5 * dof as f64, 0.5 * x)
}

fn chi2_pdf(x: f64, dof: u64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

fn check_args(p: f64, dof: u64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("probability {p} outside (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::domain("degrees of freedom must be >= 1"));
    }
    Ok(())
}

/// Solves `cdf(x) = p` on `[lo, hi]` (with `cdf(lo) <= p <= cdf(hi)`).
fn invert(
    p: f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
) -> f64 {
    let mut x = start.clamp(lo, hi);
    for _ in 0..400 {
        let f = cdf(x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
        let dens = pdf(x);
        let newton = x - f / dens;
        x = if dens > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// `p`-quantile of Student's t.
pub fn t_quantile(p: f64, dof: u64) -> Result<f64> {
    check_args(p, dof)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return t_quantile(1.0 - p, dof).map(|q| -q);
    }
    if dof == 1 {
        // Cauchy: closed form is exact and avoids a slowly converging tail.
        return Ok((std::f64::consts::PI * (p - 0.5)).tan());
    }
    let mut hi = 2.0;
    while t_cdf(hi, dof) < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::numerical("t quantile bracket diverged"));
        }
    }
    Ok(invert(p, 0.0, hi, 0.5 * hi, |x| t_cdf(x, dof), |x| t_pdf(x, dof)))
}

/// `p`-quantile of the chi-square distribution.
pub fn chi2_quantile(p: f64, dof: u64) -> Result<f64> {
    check_args(p, dof)?;
    let mut hi = (dof as f64).max(1.0);
    while chi2_cdf(hi, dof) < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::numerical("chi-square quantile bracket diverged"));
        }
    }
    // Wilson-Hilferty start point.
    let k = dof as f64;
    let z = normal_quantile_approx(p);
    let wh = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    let start = if wh.is_finite() && wh > 0.0 { wh } else { 0.5 * hi };
    Ok(invert(p, 0.0, hi, start, |x| chi2_cdf(x, dof), |x| chi2_pdf(x, dof)))
}

// Rough normal quantile used only as a Newton start point.
fn normal_quantile_approx(p: f64) -> f64 {
    let q = if p < 0.5 { p } else { 1.0 - p };
    let t = (-2.0 * q.ln()).sqrt();
    let z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
        / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if p < 0.5 {
        -z
    } else {
        z
    }
}

/// Which chi-square quantile bounds the variance from below.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRule {
    /// `(N-1) s^2 / chi2_{(1-xi)/2}` as written in the source formulation.
    #[default]
    Literal,
    /// Textbook two-sided interval, `(N-1) s^2 / chi2_{1-xi/2}`.
    Standard,
}

/// Confidence bounds on the mean and variance of one transition probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBounds {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub zeta_lo: f64,
    pub zeta_hi: f64,
}

impl ConfidenceBounds {
    /// Bounds collapsed onto the point estimates.
    pub fn degenerate(mean: f64, variance: f64) -> Self {
        Self {
            gamma_lo: mean,
            gamma_hi: mean,
            zeta_lo: variance,
            zeta_hi: variance,
        }
    }
}

/// t-interval on the mean; `structural` entries have `gamma_lo` clamped
/// to [`EPS_FLOOR`].
pub fn mean_bounds(mean: f64, sigma: f64, count: usize, varsigma: f64, structural: bool) -> Result<(f64, f64)> {
    if count < 2 {
        return Err(Error::domain("mean bounds need N >= 2"));
    }
    if !(varsigma > 0.0 && varsigma < 1.0) {
        return Err(Error::domain(format!("varsigma {varsigma} outside (0, 1)")));
    }
    if sigma < 0.0 {
        return Err(Error::domain("negative standard deviation"));
    }
    let half = if sigma == 0.0 {
        0.0
    } else {
        t_quantile(1.0 - varsigma / 2.0, (count - 1) as u64)? * sigma / (count as f64).sqrt()
    };
    let mut lo = mean - half;
    if structural {
        lo = lo.max(EPS_FLOOR);
    }
    Ok((lo, mean + half))
}

/// Chi-square interval on the variance.
pub fn variance_bounds(sigma2: f64, count: usize, xi: f64, rule: VarianceRule) -> Result<(f64, f64)> {
    if count < 2 {
        return Err(Error::domain("variance bounds need N >= 2"));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::domain(format!("xi {xi} outside (0, 1)")));
    }
    if sigma2 < 0.0 {
        return Err(Error::domain("negative variance"));
    }
    if sigma2 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let dof = (count - 1) as u64;
    let scaled = (count - 1) as f64 * sigma2;
    let lower_p = match rule {
        VarianceRule::Literal => (1.0 - xi) / 2.0,
        VarianceRule::Standard => 1.0 - xi / 2.0,
    };
    let zeta_lo = scaled / chi2_quantile(lower_p, dof)?;
    let zeta_hi = scaled / chi2_quantile(xi / 2.0, dof)?;
    Ok((zeta_lo, zeta_hi))
}

/// Entrywise bounds for a whole transition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundMatrices {
    pub gamma_lo: SquareMatrix,
    pub gamma_hi: SquareMatrix,
    pub zeta_lo: SquareMatrix,
    pub zeta_hi: SquareMatrix,
}

impl BoundMatrices {
    pub fn n(&self) -> usize {
        self.gamma_lo.n()
    }

    pub fn entry(&self, to: usize, from: usize) -> ConfidenceBounds {
        ConfidenceBounds {
            gamma_lo: self.gamma_lo.get(to, from),
            gamma_hi: self.gamma_hi.get(to, from),
            zeta_lo: self.zeta_lo.get(to, from),
            zeta_hi: self.zeta_hi.get(to, from),
        }
    }

    /// Bounds equal to the point estimates (infinite-sample limit).
    pub fn degenerate(moments: &MomentMatrices) -> Self {
        let mean = moments.mean.matrix().clone();
        Self {
            gamma_lo: mean.clone(),
            gamma_hi: mean,
            zeta_lo: moments.variance.clone(),
            zeta_hi: moments.variance.clone(),
        }
    }
}

/// Applies [`mean_bounds`] and [`variance_bounds`] to every entry.
pub fn bound_matrices(
    moments: &MomentMatrices,
    varsigma: f64,
    xi: f64,
    rule: VarianceRule,
) -> Result<BoundMatrices> {
    let n = moments.mean.n();
    let count = moments.count;
    let dof = (count.max(2) - 1) as u64;
    // Quantiles depend only on (count, varsigma, xi); evaluate them once.
    let t = t_quantile(1.0 - varsigma / 2.0, dof)?;
    let (lo_scale, hi_scale) = {
        let (lo, hi) = variance_bounds(1.0, count, xi, rule)?;
        (lo, hi)
    };
    let mut out = BoundMatrices {
        gamma_lo: SquareMatrix::zeros(n),
        gamma_hi: SquareMatrix::zeros(n),
        zeta_lo: SquareMatrix::zeros(n),
        zeta_hi: SquareMatrix::zeros(n),
    };
    for a in 0..n {
        for b in 0..n {
            let m = moments.mean.get(a, b);
            let v = moments.variance.get(a, b).max(0.0);
            let half = t * v.sqrt() / (count as f64).sqrt();
            let mut lo = m - half;
            if m > 0.0 {
                lo = lo.max(EPS_FLOOR);
            }
            out.gamma_lo.set(a, b, lo);
            out.gamma_hi.set(a, b, m + half);
            out.zeta_lo.set(a, b, v * lo_scale);
            out.zeta_hi.set(a, b, v * hi_scale);
        }
    }
    Ok(out)
}
