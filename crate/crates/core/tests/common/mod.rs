//! Independent oracles and random instance generators shared by the
//! integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tcldro::bellman::{Policy, SolveConfig, Terminal, Utility, ZTerm};
use tcldro::matrix::{SquareMatrix, StochasticMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random column-stochastic matrix; each off-diagonal entry is a structural
/// zero with probability `zero_prob` (the diagonal always stays positive).
pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> StochasticMatrix {
    let mut cols = Vec::with_capacity(n);
    for b in 0..n {
        let mut col: Vec<f64> = (0..n)
            .map(|a| {
                if a != b && rng.gen_bool(zero_prob) {
                    0.0
                } else {
                    rng.gen_range(0.05..1.0)
                }
            })
            .collect();
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= s);
        cols.push(col);
    }
    StochasticMatrix::from_columns(&cols).unwrap()
}

pub fn random_utility(rng: &mut ChaCha8Rng, horizon: usize, n: usize) -> Utility {
    Utility::new(
        (0..=horizon)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random policy on the support of `base`; some columns are sparse.
pub fn random_policy(rng: &mut ChaCha8Rng, base: &SquareMatrix, horizon: usize) -> Policy {
    let n = base.n();
    let steps = (0..horizon)
        .map(|_| {
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|b| {
                    let support: Vec<usize> = (0..n).filter(|&a| base.get(a, b) > 0.0).collect();
                    let mut col = vec![0.0; n];
                    let sharp = rng.gen_range(0.2..5.0);
                    let w: Vec<f64> = support
                        .iter()
                        .map(|_| rng.gen_range(1e-12f64..1.0).powf(sharp))
                        .collect();
                    let s: f64 = w.iter().sum();
                    for (&a, x) in support.iter().zip(w) {
                        col[a] = x / s;
                    }
                    col
                })
                .collect();
            StochasticMatrix::from_columns(&cols).unwrap()
        })
        .collect();
    Policy::new(steps).unwrap()
}

/// Minimizes the evaluated objective directly by entropic mirror descent
/// (KL-projected gradient steps) on the adjoint gradient. Knows nothing
/// about desirability functions.
pub fn mirror_descent(zt: &ZTerm, u: &Utility, cfg: &SolveConfig, rho0: &[f64], iters: usize) -> (Policy, f64) {
    let n = zt.n();
    let horizon = u.horizon();
    let g = cfg.gamma;
    // Start from the normalized base columns.
    let start: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|_| {
            (0..n)
                .map(|b| {
                    let s: f64 = (0..n).map(|a| zt.base.get(a, b)).sum();
                    (0..n).map(|a| zt.base.get(a, b) / s).collect()
                })
                .collect()
        })
        .collect();
    let mut p = start;
    let u_next = |t: usize, a: usize| {
        if t + 1 == horizon && cfg.terminal == Terminal::Unit {
            0.0
        } else {
            u.at(t + 1)[a]
        }
    };
    let step = 0.5 / g;
    for _ in 0..iters {
        // Costate: lambda_t^b = d J / d rho_t^b.
        let mut lam = vec![vec![0.0; n]; horizon + 1];
        for t in (0..horizon).rev() {
            for b in 0..n {
                let mut s = zt.column_cost[b];
                for a in 0..n {
                    let q = p[t][b][a];
                    if q > 0.0 {
                        s += q * (-u_next(t, a) + g * (q / zt.base.get(a, b)).ln() + zt.z.get(a, b) + lam[t + 1][a]);
                    }
                }
                lam[t][b] = s;
            }
        }
        // Per-column gradient divided by rho_t^b (a positive rescaling that
        // leaves the minimizer unchanged).
        for t in 0..horizon {
            for b in 0..n {
                let col = &mut p[t][b];
                let mut logits = vec![f64::NEG_INFINITY; n];
                for a in 0..n {
                    let q = col[a];
                    if q > 0.0 {
                        let grad = -u_next(t, a) + g * ((q / zt.base.get(a, b)).ln() + 1.0) + zt.z.get(a, b) + lam[t + 1][a];
                        logits[a] = q.ln() - step * grad;
                    }
                }
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for a in 0..n {
                    col[a] = if logits[a] == f64::NEG_INFINITY { 0.0 } else { (logits[a] - m).exp() / s };
                }
            }
        }
    }
    let policy = Policy::new(
        p.iter()
            .map(|cols| StochasticMatrix::from_columns(cols).unwrap())
            .collect(),
    )
    .unwrap();
    let cost = direct_cost(&policy, zt, u, cfg, rho0);
    (policy, cost)
}

/// Exhaustive vertex enumeration for `min c.x` subject to `a x <= b`
/// (bounds included as rows); `None` when no vertex is feasible.
pub fn vertex_enumeration(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let m = a.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        // Solve the n x n system of the chosen rows.
        let mut mat: Vec<Vec<f64>> = idx.iter().map(|&i| {
            let mut r = a[i].clone();
            r.push(b[i]);
            r
        }).collect();
        if let Some(x) = gauss(&mut mat, n) {
            let feasible = (0..m).all(|i| a[i].iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b[i] + 1e-9);
            if feasible {
                let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
        // Next combination.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gauss(mat: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))?;
        if mat[piv][col].abs() < 1e-10 {
            return None;
        }
        mat.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = mat[r][col] / mat[col][col];
                for k in col..=n {
                    mat[r][k] -= f * mat[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| mat[i][n] / mat[i][i]).collect())
}

/// Random box `[lo, hi]` in `k` dimensions meeting the simplex, together with
/// one sample inside the box and on the simplex.
pub fn random_box(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let center = random_simplex(rng, k);
    let center: Vec<f64> = center.iter().map(|c| 0.02 + c).collect();
    let s: f64 = center.iter().sum();
    let center: Vec<f64> = center.iter().map(|c| c / s).collect();
    let lo: Vec<f64> = center.iter().map(|c| c * rng.gen_range(0.3..1.0)).collect();
    let hi: Vec<f64> = center.iter().map(|c| (c * rng.gen_range(1.0..2.0)).min(1.0)).collect();
    let y = random_in_box_simplex(rng, &lo, &hi).unwrap_or(center);
    (lo, hi, y)
}

/// Uniform draw from the box by rejection on the slack coordinate.
pub fn random_in_box_simplex(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let k = lo.len();
    for _ in 0..10_000 {
        let slack = rng.gen_range(0..k);
        let mut v: Vec<f64> = (0..k)
            .map(|i| if i == slack { 0.0 } else { rng.gen_range(lo[i]..=hi[i]) })
            .collect();
        let rest = 1.0 - v.iter().sum::<f64>();
        if rest >= lo[slack] && rest <= hi[slack] {
            v[slack] = rest;
            return Some(v);
        }
    }
    None
}

/// Interior point as a random convex combination of feasible points.
pub fn random_mixture(rng: &mut ChaCha8Rng, points: &[Vec<f64>]) -> Vec<f64> {
    let w = random_simplex(rng, points.len());
    let mut v = vec![0.0; points[0].len()];
    for (p, wi) in points.iter().zip(w) {
        for (x, pi) in v.iter_mut().zip(p) {
            *x += wi * pi;
        }
    }
    v
}

/// Random vector on the simplex with full support.
pub fn random_interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = random_simplex(rng, n);
    let v: Vec<f64> = v.iter().map(|x| x + 0.05).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Objective evaluated from scratch: forward distributions, then
/// `sum_t sum_b rho_t^b sum_a P (-U_{t+1} + gamma ln(P / B) + Z)` plus column costs.
pub fn direct_cost(policy: &Policy, zt: &ZTerm, u: &Utility, cfg: &SolveConfig, rho0: &[f64]) -> f64 {
    let n = zt.n();
    let horizon = policy.horizon();
    let mut rho = rho0.to_vec();
    let mut total = 0.0;
    for t in 0..horizon {
        let p = policy.at(t);
        let mut next = vec![0.0; n];
        for b in 0..n {
            let mut c = zt.column_cost[b];
            for a in 0..n {
                let q = p.get(a, b);
                next[a] += q * rho[b];
                if q > 0.0 {
                    let reward = if t + 1 == horizon && cfg.terminal == Terminal::Unit { 0.0 } else { u.at(t + 1)[a] };
                    c += q * (-reward + cfg.gamma * (q / zt.base.get(a, b)).ln() + zt.z.get(a, b));
                }
            }
            total += rho[b] * c;
        }
        rho = next;
    }
    total
}
