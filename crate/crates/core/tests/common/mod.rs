//! Test-side oracles and generators shared by the integration suites. Nothing
//! here calls the solver under test.

#![allow(dead_code)]

use std::sync::Arc;

use gbayes::{Distribution, ParamGrid, Temperature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn eta(v: f64) -> Temperature<f64> {
    Temperature::new(v).unwrap()
}

pub fn line_grid(n: usize) -> Arc<ParamGrid<f64>> {
    Arc::new(ParamGrid::from_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap())
}

/// Random prior with weights bounded away from zero.
pub fn random_prior(rng: &mut ChaCha8Rng, grid: Arc<ParamGrid<f64>>) -> Distribution<f64> {
    let w: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    Distribution::from_weights(grid, &w).unwrap()
}

pub fn random_losses(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Losses on the lattice `k / 2^20`; adding an integer keeps them exact.
pub fn dyadic_losses(rng: &mut ChaCha8Rng, n: usize, max: f64) -> Vec<f64> {
    let scale = (1u64 << 20) as f64;
    (0..n).map(|_| (rng.random_range(0.0..max) * scale).round() / scale).collect()
}

/// `Σ q L + (1/η) KL(q ‖ π)` evaluated directly from weights.
pub fn kl_objective(q: &[f64], pi: &[f64], l: &[f64], eta: f64) -> f64 {
    q.iter()
        .zip(pi)
        .zip(l)
        .map(|((&qi, &pi), &li)| if qi == 0.0 { 0.0 } else { qi * li + qi * (qi / pi).ln() / eta })
        .sum()
}

/// Exponential weights `π_i exp(-η L_i)` normalized by a plain sum.
pub fn naive_gibbs(pi: &[f64], l: &[f64], eta: f64) -> (Vec<f64>, f64) {
    let m = l.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = pi.iter().zip(l).map(|(&p, &li)| p * (-eta * (li - m)).exp()).collect();
    let z: f64 = raw.iter().sum();
    (raw.iter().map(|r| r / z).collect(), z.ln() - eta * m)
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Minimizes `f(t)` for `q = (1 - t, t)` by scanning `[0, 1]` at 1e-4 and then
/// at 1e-7 around the incumbent.
pub fn brute_force_1simplex(f: impl Fn(f64) -> f64) -> f64 {
    let scan = |lo: f64, hi: f64, h: f64| {
        let steps = ((hi - lo) / h).round() as usize;
        let mut best = (f64::INFINITY, lo);
        for k in 0..=steps {
            let t = (lo + k as f64 * h).clamp(0.0, 1.0);
            let v = f(t);
            if v < best.0 {
                best = (v, t);
            }
        }
        best.1
    };
    let t0 = scan(0.0, 1.0, 1e-4);
    scan((t0 - 1e-4).max(0.0), (t0 + 1e-4).min(1.0), 1e-7)
}

/// Primal problems behind the EL and ET weights for one moment column.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Primal {
    /// minimize `-Σ log(n p_i)`
    El,
    /// minimize `Σ p_i log(n p_i)`
    Et,
}

/// Solves `min f(p)` subject to `Σ p = 1`, `Σ p g = 0` by infeasible-start
/// Newton on the KKT system. Returns `None` when the constraints cannot be
/// met with positive weights.
pub fn primal_weights(g: &[f64], kind: Primal) -> Option<(Vec<f64>, f64)> {
    let n = g.len();
    let nf = n as f64;
    let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g.iter().all(|&v| v == 0.0) {
        return Some((vec![1.0 / nf; n], 0.0));
    }
    if !(gmin < 0.0 && gmax > 0.0) {
        return None;
    }
    let grad = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .map(|&v| match kind {
                Primal::El => -1.0 / v,
                Primal::Et => (nf * v).ln() + 1.0,
            })
            .collect()
    };
    let hdiag = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .map(|&v| match kind {
                Primal::El => 1.0 / (v * v),
                Primal::Et => 1.0 / v,
            })
            .collect()
    };
    let residual = |p: &[f64], nu: &[f64; 2]| -> f64 {
        let gr = grad(p);
        let dual: f64 = (0..n).map(|i| (gr[i] + nu[0] + nu[1] * g[i]).powi(2)).sum();
        let c0 = p.iter().sum::<f64>() - 1.0;
        let c1: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        (dual + c0 * c0 + c1 * c1).sqrt()
    };
    let mut p = vec![1.0 / nf; n];
    let mut nu = [0.0f64; 2];
    'newton: for _ in 0..20_000 {
        let r = residual(&p, &nu);
        if r < 1e-14 {
            break;
        }
        // Eliminate Δp = -H^{-1}(∇f + Aᵀν⁺) and solve the 2x2 system for ν⁺.
        let gr = grad(&p);
        let h = hdiag(&p);
        let rows = [vec![1.0; n], g.to_vec()];
        let prim = [1.0 - p.iter().sum::<f64>(), -p.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()];
        let mut m = [[0.0; 2]; 2];
        let mut rhs = [0.0; 2];
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] = (0..n).map(|i| rows[a][i] * rows[b][i] / h[i]).sum();
            }
            rhs[a] = -prim[a] - (0..n).map(|i| rows[a][i] * gr[i] / h[i]).sum::<f64>();
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let nu_new = [(rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det];
        let dp: Vec<f64> = (0..n).map(|i| -(gr[i] + nu_new[0] + nu_new[1] * g[i]) / h[i]).collect();
        let dnu = [nu_new[0] - nu[0], nu_new[1] - nu[1]];
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + t * b).collect();
            let cnu = [nu[0] + t * dnu[0], nu[1] + t * dnu[1]];
            if cand.iter().all(|&v| v > 0.0) && residual(&cand, &cnu) <= (1.0 - 0.01 * t) * r {
                p = cand;
                nu = cnu;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                if r < 1e-10 {
                    break 'newton;
                }
                return None;
            }
        }
    }
    assert!(residual(&p, &nu) < 1e-9, "primal oracle did not converge on {g:?}");
    let value = match kind {
        Primal::El => p.iter().map(|v| (nf * v).ln()).sum::<f64>(),
        Primal::Et => p.iter().map(|v| v * (nf * v).ln()).sum::<f64>(),
    };
    Some((p, value))
}
