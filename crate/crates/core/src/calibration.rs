//! Learning-rate selection.
//!
//! [`info_matching_eta`] picks the temperature whose Gibbs-posterior
//! covariance `(n η J)^{-1}` matches the sandwich covariance `J^{-1} I J^{-1} / n`
//! in trace. [`safebayes_select`] scans a grid of temperatures and keeps the
//! one with the smallest cumulative posterior-expected prequential loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::gibbs_update;
use crate::grid::{Dataset, ParamGrid, Temperature};
use crate::linalg::{inverse, is_symmetric, matmul, norm2, solve, trace, Matrix};
use crate::loss::{datum_losses, finite_difference_hessian, LossModel};
use crate::scalar::Scalar;
use crate::simplex::Distribution;

/// Gradient-norm threshold for [`loss_minimizer`].
pub const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinimizerPath {
    Newton,
    GradientDescent,
    GridArgmin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Minimizer<T> {
    pub theta: Vec<T>,
    pub gradient_norm: T,
    pub iterations: usize,
    pub path: MinimizerPath,
}

fn mean_gradient<T: Scalar, L: LossModel<T> + ?Sized>(loss: &L, data: &Dataset<T>, theta: &[T]) -> Option<Vec<T>> {
    let mut g = vec![T::zero(); theta.len()];
    for x in data.records() {
        let gi = loss.gradient(theta, x)?;
        for (a, b) in g.iter_mut().zip(gi) {
            *a = *a + b;
        }
    }
    let n = T::from_usize_lossy(data.len());
    Some(g.into_iter().map(|v| v / n).collect())
}

fn mean_loss<T: Scalar, L: LossModel<T> + ?Sized>(loss: &L, data: &Dataset<T>, theta: &[T]) -> T {
    let total: T = data.records().iter().map(|x| loss.loss(theta, x)).sum();
    total / T::from_usize_lossy(data.len())
}

/// Mean Hessian at `theta`, from the oracle when present, else by central
/// differences of the gradient. The flag reports which.
fn mean_hessian<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<(Matrix<T>, bool)> {
    let d = theta.len();
    let mut h = vec![vec![T::zero(); d]; d];
    let mut from_oracle = true;
    for x in data.records() {
        let hi = match loss.hessian(theta, x) {
            Some(h) => h,
            None => {
                from_oracle = false;
                finite_difference_hessian(loss, theta, x)?
            }
        };
        for (row, hrow) in h.iter_mut().zip(hi) {
            for (a, b) in row.iter_mut().zip(hrow) {
                *a = *a + b;
            }
        }
    }
    let n = T::from_usize_lossy(data.len());
    Ok((h.into_iter().map(|r| r.into_iter().map(|v| v / n).collect()).collect(), from_oracle))
}

/// Minimizes the empirical risk `(1/n) Σ l(θ; x_i)` from `init`.
///
/// With a gradient oracle: Newton steps (backtracking on the gradient norm)
/// while the Hessian is positive definite, gradient descent with Armijo
/// backtracking otherwise, until the gradient norm is at most 1e-8. Without a
/// gradient oracle the best atom of `fallback` is returned.
pub fn loss_minimizer<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    data: &Dataset<T>,
    init: &[T],
    fallback: Option<&ParamGrid<T>>,
) -> Result<Minimizer<T>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let Some(mut g) = mean_gradient(loss, data, init) else {
        let grid = fallback.ok_or(Error::MissingOracle("gradient (and no fallback grid)"))?;
        return grid_argmin(loss, data, grid);
    };
    let tol = T::lit(GRADIENT_TOL);
    let mut theta = init.to_vec();
    let mut gn = norm2(&g);
    let mut trace_norms = vec![gn.as_f64()];
    let mut path = MinimizerPath::Newton;
    let mut gd_step = T::one();
    let mut iterations = 0;
    while gn > tol {
        if iterations == MAX_ITER || !gn.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iterations, trace: trace_norms });
        }
        iterations += 1;
        let mut next = None;
        if let Ok((h, _)) = mean_hessian(loss, data, &theta) {
            if let Ok(dir) = solve(&h, &g) {
                let descent: T = dir.iter().zip(&g).map(|(&a, &b)| a * b).sum();
                if descent > T::zero() {
                    let mut t = T::one();
                    for _ in 0..40 {
                        let cand: Vec<T> = theta.iter().zip(&dir).map(|(&a, &b)| a - t * b).collect();
                        if let Some(gc) = mean_gradient(loss, data, &cand) {
                            let n = norm2(&gc);
                            if n <= (T::one() - T::lit(1e-4) * t) * gn {
                                next = Some((cand, gc, n));
                                break;
                            }
                        }
                        t = t * T::lit(0.5);
                    }
                }
            }
        }
        if next.is_none() {
            path = MinimizerPath::GradientDescent;
            let f = mean_loss(loss, data, &theta);
            let mut s = gd_step;
            for _ in 0..80 {
                let cand: Vec<T> = theta.iter().zip(&g).map(|(&a, &b)| a - s * b).collect();
                let fc = mean_loss(loss, data, &cand);
                if fc.is_finite() && fc <= f - T::lit(1e-4) * s * gn * gn {
                    if let Some(gc) = mean_gradient(loss, data, &cand) {
                        let n = norm2(&gc);
                        next = Some((cand, gc, n));
                        gd_step = s + s;
                        break;
                    }
                }
                s = s * T::lit(0.5);
            }
        }
        let Some((cand, gc, n)) = next else {
            return Err(Error::Diverged { iterations, trace: trace_norms });
        };
        theta = cand;
        g = gc;
        gn = n;
        trace_norms.push(gn.as_f64());
    }
    Ok(Minimizer { theta, gradient_norm: gn, iterations, path })
}

fn grid_argmin<T: Scalar, L: LossModel<T> + ?Sized>(loss: &L, data: &Dataset<T>, grid: &ParamGrid<T>) -> Result<Minimizer<T>> {
    let mut best: Option<(T, usize)> = None;
    for (i, atom) in grid.atoms().iter().enumerate() {
        let v = mean_loss(loss, data, atom);
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, i));
        }
    }
    let (_, i) = best.ok_or(Error::AllInfeasible)?;
    Ok(Minimizer { theta: grid.atom(i).to_vec(), gradient_norm: T::nan(), iterations: grid.len(), path: MinimizerPath::GridArgmin })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    InfoMatching,
    Safebayes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationReport<T: Scalar> {
    pub eta_hat: Temperature<T>,
    pub theta_hat: Vec<T>,
    /// `(1/n) Σ ∇l ∇lᵀ` at `theta_hat`.
    pub i_hat: Matrix<T>,
    /// `(1/n) Σ ∇²l` at `theta_hat`.
    pub j_hat: Matrix<T>,
    pub method: CalibrationMethod,
    pub n: usize,
    /// False when `j_hat` came from finite differences of the gradient.
    pub hessian_from_oracle: bool,
}

/// `η̂ = tr(J⁻¹) / tr(J⁻¹ I J⁻¹)` at the empirical loss minimizer (`J / I` in
/// one dimension).
pub fn info_matching_eta<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    data: &Dataset<T>,
    init: &[T],
) -> Result<CalibrationReport<T>> {
    let d = init.len();
    if data.len() < d + 1 {
        return Err(Error::InsufficientData { needed: d + 1, got: data.len() });
    }
    let m = loss_minimizer(loss, data, init, None)?;
    let theta = m.theta;
    let mut i_hat = vec![vec![T::zero(); d]; d];
    for x in data.records() {
        let g = loss.gradient(&theta, x).ok_or(Error::MissingOracle("gradient"))?;
        for a in 0..d {
            for b in 0..d {
                i_hat[a][b] = i_hat[a][b] + g[a] * g[b];
            }
        }
    }
    let n = T::from_usize_lossy(data.len());
    let i_hat: Matrix<T> = i_hat.into_iter().map(|r| r.into_iter().map(|v| v / n).collect()).collect();
    let (mut j_hat, hessian_from_oracle) = mean_hessian(loss, data, &theta)?;
    if !is_symmetric(&j_hat, T::lit(1e-6)) {
        return Err(Error::InvalidArgument("mean Hessian is not symmetric".into()));
    }
    for a in 0..d {
        for b in 0..a {
            let s = (j_hat[a][b] + j_hat[b][a]) * T::lit(0.5);
            j_hat[a][b] = s;
            j_hat[b][a] = s;
        }
    }
    let j_inv = inverse(&j_hat)?;
    let sandwich = matmul(&matmul(&j_inv, &i_hat), &j_inv);
    let eta = trace(&j_inv) / trace(&sandwich);
    let eta_hat = Temperature::new(eta)
        .map_err(|_| Error::InvalidArgument(format!("calibrated temperature {} is not positive", eta.as_f64())))?;
    Ok(CalibrationReport {
        eta_hat,
        theta_hat: theta,
        i_hat,
        j_hat,
        method: CalibrationMethod::InfoMatching,
        n: data.len(),
        hessian_from_oracle,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SafeBayesReport<T: Scalar> {
    pub eta_star: Temperature<T>,
    /// `(η, Σ_t E_{q_t}[l(θ; x_t)])` in the order supplied.
    pub criteria: Vec<(Temperature<T>, T)>,
    pub method: CalibrationMethod,
}

/// Cumulative posterior-expected prequential loss `Σ_t E_{q_t}[l(θ; x_t)]`
/// with `q_1` the prior.
pub fn prequential_expected_loss<T: Scalar, L: LossModel<T> + ?Sized>(
    prior: &Distribution<T>,
    loss: &L,
    data: &Dataset<T>,
    eta: Temperature<T>,
) -> Result<T> {
    let grid = prior.grid().clone();
    let mut cum = vec![T::zero(); prior.len()];
    let mut total = T::zero();
    for t in 0..data.len() {
        let l = datum_losses(loss, &grid, data.record(t), t).map_err(|e| Error::at_step(t + 1, e))?;
        let e = if t == 0 {
            prior.expectation(&l)?
        } else {
            let q = gibbs_update(prior, &cum, eta).map_err(|e| Error::at_step(t + 1, e))?;
            q.posterior.expectation(&l)?
        };
        total = total + e;
        for (c, v) in cum.iter_mut().zip(&l) {
            *c = *c + *v;
        }
    }
    Ok(total)
}

/// Returns the temperature with the smallest prequential expected loss.
/// Criteria within a relative 1e-12 of each other count as tied and the
/// smaller temperature wins.
pub fn safebayes_select<T: Scalar, L: LossModel<T> + ?Sized>(
    prior: &Distribution<T>,
    loss: &L,
    data: &Dataset<T>,
    eta_grid: &[Temperature<T>],
) -> Result<SafeBayesReport<T>> {
    if eta_grid.is_empty() {
        return Err(Error::Empty("temperature grid"));
    }
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let criteria = eta_grid
        .iter()
        .map(|&eta| Ok((eta, prequential_expected_loss(prior, loss, data, eta)?)))
        .collect::<Result<Vec<_>>>()?;
    let tie = |a: T, b: T| (a - b).abs() <= T::lit(1e-12) * T::one().max(a.abs()).max(b.abs());
    let mut best = criteria[0];
    for &(eta, c) in &criteria[1..] {
        if (c < best.1 && !tie(c, best.1)) || (tie(c, best.1) && eta < best.0) {
            best = (eta, c);
        }
    }
    Ok(SafeBayesReport { eta_star: best.0, criteria, method: CalibrationMethod::Safebayes })
}
