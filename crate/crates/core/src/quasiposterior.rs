//! Empirical-likelihood and exponential-tilting weights from their convex
//! duals, the EL quasi-posterior, and a check that the usual convention
//! choices only move the normalizing constant.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{constrained_gibbs_update, GibbsResult};
use crate::grid::{Dataset, ParamGrid, Temperature};
use crate::linalg::{norm2, solve, Matrix};
use crate::scalar::Scalar;
use crate::simplex::{logsumexp, total_variation, Distribution};

const MAX_ITER: usize = 200;
const MULTIPLIER_LIMIT: f64 = 1e10;
/// Required accuracy of `Σ w_i g_i = 0`.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Moment conditions `g(θ; x) ∈ R^k` with `E g(θ0; X) = 0`.
pub trait MomentModel<T: Scalar> {
    fn moments(&self, theta: &[T], x: &[T]) -> Vec<T>;
}

/// `g(θ; x) = x_j - θ_j` for every coordinate of `θ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanMoment;

impl<T: Scalar> MomentModel<T> for MeanMoment {
    fn moments(&self, theta: &[T], x: &[T]) -> Vec<T> {
        theta.iter().zip(x).map(|(&t, &v)| v - t).collect()
    }
}

/// `θ = (μ, σ²)`, `g = (x - μ, (x - μ)² - σ²)` on the first coordinate of `x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanVarianceMoment;

impl<T: Scalar> MomentModel<T> for MeanVarianceMoment {
    fn moments(&self, theta: &[T], x: &[T]) -> Vec<T> {
        let r = x[0] - theta[0];
        vec![r, r * r - theta[1]]
    }
}

/// Moments given by a closure.
pub struct FnMoments<F>(pub F);

impl<T: Scalar, F: Fn(&[T], &[T]) -> Vec<T>> MomentModel<T> for FnMoments<F> {
    fn moments(&self, theta: &[T], x: &[T]) -> Vec<T> {
        (self.0)(theta, x)
    }
}

/// The `n × k` matrix of `g(θ; x_i)`.
pub fn moment_matrix<T: Scalar, M: MomentModel<T> + ?Sized>(
    moments: &M,
    data: &Dataset<T>,
    theta: &[T],
) -> Result<Matrix<T>> {
    let rows: Vec<Vec<T>> = data.records().iter().map(|x| moments.moments(theta, x)).collect();
    check_gmat(&rows)?;
    Ok(rows)
}

fn check_gmat<T: Scalar>(gmat: &[Vec<T>]) -> Result<usize> {
    let k = gmat.first().ok_or(Error::Empty("moment matrix"))?.len();
    if k == 0 {
        return Err(Error::Empty("moment vector"));
    }
    for (i, row) in gmat.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch { index: i, expected: k, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("moment row {i} is not finite")));
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct WeightSolution<T: Scalar> {
    pub weights: Vec<T>,
    /// `λ` for EL, `τ` for ET.
    pub multiplier: Vec<T>,
    /// `log R = Σ log(n p_i)` for EL; `Σ w_i log(n w_i)` for ET.
    pub criterion: T,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Σ w_i g_i‖`.
    pub constraint_residual: T,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn damped_direction<T: Scalar>(h: &[Vec<T>], g: &[T]) -> Option<Vec<T>> {
    solve(h, g).ok().or_else(|| {
        let tr: T = (0..h.len()).map(|i| h[i][i].abs()).sum();
        let ridge = T::lit(1e-10) * (T::one() + tr);
        let hr: Vec<Vec<T>> = h
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().enumerate().map(|(j, &v)| if i == j { v + ridge } else { v }).collect())
            .collect();
        solve(&hr, g).ok()
    })
}

fn constraint_residual<T: Scalar>(gmat: &[Vec<T>], w: &[T], k: usize) -> T {
    let r: Vec<T> = (0..k).map(|j| gmat.iter().zip(w).map(|(row, &wi)| wi * row[j]).sum()).collect();
    norm2(&r)
}

/// Armijo acceptance, except that once the predicted decrease is at the
/// round-off level of `f` a step is accepted when it halves the gradient.
fn accept<T: Scalar>(f: T, f_new: T, predicted: T, grad: T, grad_new: T) -> bool {
    if !f_new.is_finite() {
        return false;
    }
    let noise = T::lit(64.0) * T::epsilon() * (T::one() + f.abs());
    if predicted > noise {
        f_new <= f - T::lit(1e-4) * predicted
    } else {
        f_new <= f + noise && grad_new <= T::lit(0.5) * grad
    }
}

/// Owen's pseudo-logarithm: `ln z` above `eps`, its second-order Taylor
/// extension below. Returns value, first and second derivative.
fn log_star<T: Scalar>(z: T, eps: T) -> (T, T, T) {
    if z >= eps {
        (z.ln(), T::one() / z, -T::one() / (z * z))
    } else {
        let r = z / eps;
        let v = eps.ln() - T::lit(1.5) + T::lit(2.0) * r - T::lit(0.5) * r * r;
        (v, (T::lit(2.0) - r) / eps, -T::one() / (eps * eps))
    }
}

/// Empirical-likelihood weights `p_i = 1 / (n (1 + λᵀg_i))` maximizing
/// `Σ log p_i` subject to `Σ p_i g_i = 0`.
///
/// Damped Newton on the dual `-Σ log*(1 + λᵀg_i)` with `log*` switching to a
/// quadratic below `1/n`. Errors with [`Error::ElInfeasible`] when zero is not
/// inside the convex hull of the rows.
pub fn el_weights<T: Scalar>(gmat: &[Vec<T>]) -> Result<WeightSolution<T>> {
    let k = check_gmat(gmat)?;
    let n = gmat.len();
    let nt = T::from_usize_lossy(n);
    let eps = T::one() / nt;
    let infeasible = || Error::ElInfeasible { theta: String::new() };
    let eval = |lam: &[T]| -> (T, Vec<T>, Matrix<T>) {
        let mut f = T::zero();
        let mut grad = vec![T::zero(); k];
        let mut hess = vec![vec![T::zero(); k]; k];
        for row in gmat {
            let (v, d1, d2) = log_star(T::one() + dot(lam, row), eps);
            f = f - v;
            for a in 0..k {
                grad[a] = grad[a] - d1 * row[a];
                for b in 0..k {
                    hess[a][b] = hess[a][b] - d2 * row[a] * row[b];
                }
            }
        }
        (f, grad, hess)
    };
    let scale: T = gmat.iter().map(|r| norm2(r)).sum::<T>() + T::one();
    let gtol = T::lit(1e-13) * scale;
    let mut lam = vec![T::zero(); k];
    let (mut f, mut grad, mut hess) = eval(&lam);
    let mut iterations = 0;
    let mut converged = norm2(&grad) <= gtol;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let Some(dir) = damped_direction(&hess, &grad) else {
            return Err(infeasible());
        };
        let slope = dot(&dir, &grad);
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<T> = lam.iter().zip(&dir).map(|(&a, &b)| a - t * b).collect();
            let (fc, gc, hc) = eval(&cand);
            if accept(f, fc, t * slope, norm2(&grad), norm2(&gc)) {
                moved = cand != lam;
                lam = cand;
                f = fc;
                grad = gc;
                hess = hc;
                break;
            }
            t = t * T::lit(0.5);
        }
        if norm2(&lam).as_f64() > MULTIPLIER_LIMIT {
            return Err(infeasible());
        }
        converged = norm2(&grad) <= gtol;
        if !moved {
            break;
        }
    }
    let z: Vec<T> = gmat.iter().map(|row| T::one() + dot(&lam, row)).collect();
    if z.iter().any(|&zi| zi < eps) {
        return Err(infeasible());
    }
    let weights: Vec<T> = z.iter().map(|&zi| T::one() / (nt * zi)).collect();
    let residual = constraint_residual(gmat, &weights, k);
    if residual.as_f64() > CONSTRAINT_TOL {
        if norm2(&lam).as_f64() > 1e6 {
            return Err(infeasible());
        }
        converged = false;
    }
    let criterion = -z.iter().map(|zi| zi.ln()).sum::<T>();
    Ok(WeightSolution { weights, multiplier: lam, criterion, converged, iterations, constraint_residual: residual })
}

/// Exponential-tilting weights `w_i ∝ exp(τᵀg_i)` minimizing
/// `KL(w ‖ uniform)` subject to `Σ w_i g_i = 0`.
///
/// Newton with backtracking on the dual `log Σ exp(τᵀg_i)`. Errors with
/// [`Error::EtInfeasible`] when the dual is unbounded.
pub fn et_weights<T: Scalar>(gmat: &[Vec<T>]) -> Result<WeightSolution<T>> {
    let k = check_gmat(gmat)?;
    let n = gmat.len();
    let nt = T::from_usize_lossy(n);
    let infeasible = || Error::EtInfeasible { theta: String::new() };
    let eval = |tau: &[T]| -> (T, Vec<T>, Vec<T>, Matrix<T>) {
        let s: Vec<T> = gmat.iter().map(|row| dot(tau, row)).collect();
        let lse = logsumexp(&s);
        let w: Vec<T> = s.iter().map(|&v| (v - lse).exp()).collect();
        let mean: Vec<T> = (0..k).map(|j| gmat.iter().zip(&w).map(|(r, &wi)| wi * r[j]).sum()).collect();
        let mut hess = vec![vec![T::zero(); k]; k];
        for (row, &wi) in gmat.iter().zip(&w) {
            for a in 0..k {
                for b in 0..k {
                    hess[a][b] = hess[a][b] + wi * (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        (lse, w, mean, hess)
    };
    let scale: T = gmat.iter().map(|r| norm2(r)).fold(T::zero(), T::max) + T::one();
    let gtol = T::lit(1e-14) * scale;
    let mut tau = vec![T::zero(); k];
    let (mut f, mut w, mut grad, mut hess) = eval(&tau);
    let mut iterations = 0;
    let mut converged = norm2(&grad) <= gtol;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let Some(dir) = damped_direction(&hess, &grad) else {
            return Err(infeasible());
        };
        let slope = dot(&dir, &grad);
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<T> = tau.iter().zip(&dir).map(|(&a, &b)| a - t * b).collect();
            let (fc, wc, gc, hc) = eval(&cand);
            if accept(f, fc, t * slope, norm2(&grad), norm2(&gc)) {
                moved = cand != tau;
                tau = cand;
                f = fc;
                w = wc;
                grad = gc;
                hess = hc;
                break;
            }
            t = t * T::lit(0.5);
        }
        if norm2(&tau).as_f64() > MULTIPLIER_LIMIT {
            return Err(infeasible());
        }
        converged = norm2(&grad) <= gtol;
        if !moved {
            break;
        }
    }
    let residual = norm2(&grad);
    if residual.as_f64() > CONSTRAINT_TOL {
        return Err(infeasible());
    }
    if w.iter().any(|&wi| !(wi > T::zero())) {
        return Err(infeasible());
    }
    let criterion: T = w.iter().map(|&wi| wi * (nt * wi).ln()).sum();
    Ok(WeightSolution {
        weights: w,
        multiplier: tau,
        criterion: criterion.max(T::zero()),
        converged: true,
        iterations,
        constraint_residual: residual,
    })
}

fn theta_label<T: Scalar>(theta: &[T]) -> String {
    let parts: Vec<String> = theta.iter().map(|v| format!("{}", v.as_f64())).collect();
    format!("({})", parts.join(", "))
}

/// EL weights at `θ`, with the infeasibility error naming the atom.
pub fn el_at<T: Scalar, M: MomentModel<T> + ?Sized>(moments: &M, data: &Dataset<T>, theta: &[T]) -> Result<WeightSolution<T>> {
    let g = moment_matrix(moments, data, theta)?;
    el_weights(&g).map_err(|e| match e {
        Error::ElInfeasible { .. } => Error::ElInfeasible { theta: theta_label(theta) },
        other => other,
    })
}

/// ET weights at `θ`, with the infeasibility error naming the atom.
pub fn et_at<T: Scalar, M: MomentModel<T> + ?Sized>(moments: &M, data: &Dataset<T>, theta: &[T]) -> Result<WeightSolution<T>> {
    let g = moment_matrix(moments, data, theta)?;
    et_weights(&g).map_err(|e| match e {
        Error::EtInfeasible { .. } => Error::EtInfeasible { theta: theta_label(theta) },
        other => other,
    })
}

/// Per-atom moment-criterion losses; `+inf` on atoms where the weights are
/// infeasible or the dual solve did not converge.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MomentLosses<T: Scalar> {
    pub losses: Vec<T>,
    pub infeasible_atoms: Vec<usize>,
    pub unconverged_atoms: Vec<usize>,
}

/// EL losses `scale * (-log R(θ))`.
pub fn el_losses<T: Scalar, M: MomentModel<T> + ?Sized>(
    data: &Dataset<T>,
    moments: &M,
    grid: &ParamGrid<T>,
    scale: T,
) -> Result<MomentLosses<T>> {
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(Error::InvalidArgument("EL loss scale must be positive".into()));
    }
    let mut out = MomentLosses { losses: Vec::with_capacity(grid.len()), infeasible_atoms: vec![], unconverged_atoms: vec![] };
    for (i, theta) in grid.atoms().iter().enumerate() {
        match el_at(moments, data, theta) {
            Ok(s) if s.converged => out.losses.push(-scale * s.criterion),
            Ok(_) => {
                out.unconverged_atoms.push(i);
                out.losses.push(T::infinity());
            }
            Err(Error::ElInfeasible { .. }) => {
                out.infeasible_atoms.push(i);
                out.losses.push(T::infinity());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Per-atom ET losses `scale * Σ w log(n w)`; `+inf` where ET is infeasible
/// or the dual solve did not converge.
pub fn et_losses<T: Scalar, M: MomentModel<T> + ?Sized>(
    data: &Dataset<T>,
    moments: &M,
    grid: &ParamGrid<T>,
    scale: T,
) -> Result<MomentLosses<T>> {
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(Error::InvalidArgument("ET loss scale must be positive".into()));
    }
    let mut out = MomentLosses { losses: Vec::with_capacity(grid.len()), infeasible_atoms: vec![], unconverged_atoms: vec![] };
    for (i, theta) in grid.atoms().iter().enumerate() {
        match et_at(moments, data, theta) {
            Ok(s) if s.converged => out.losses.push(scale * s.criterion),
            Ok(_) => {
                out.unconverged_atoms.push(i);
                out.losses.push(T::infinity());
            }
            Err(Error::EtInfeasible { .. }) => {
                out.infeasible_atoms.push(i);
                out.losses.push(T::infinity());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct QuasiPosterior<T: Scalar> {
    pub result: GibbsResult<T>,
    pub losses: MomentLosses<T>,
}

/// Gibbs update with the EL loss `scale * (-log R)`; `scale = 1` is the
/// usual convention and any other value is equivalent to rescaling `η`.
pub fn el_quasi_posterior<T: Scalar, M: MomentModel<T> + ?Sized>(
    data: &Dataset<T>,
    moments: &M,
    prior: &Distribution<T>,
    eta: Temperature<T>,
    scale: T,
) -> Result<QuasiPosterior<T>> {
    let losses = el_losses(data, moments, prior.grid(), scale)?;
    let result = constrained_gibbs_update(prior, &losses.losses, eta)?;
    Ok(QuasiPosterior { result, losses })
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ConventionPair<T: Scalar> {
    /// Data-only constant separating the two conventions.
    pub offset: T,
    /// Largest deviation of `L_alt - L_base` from `offset` over feasible atoms.
    pub max_offset_error: T,
    pub posterior_tv: T,
    /// `log Z_alt - log Z_base`.
    pub delta_log_z: T,
    /// `-η · offset`.
    pub expected_delta_log_z: T,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ConventionReport<T: Scalar> {
    pub n: usize,
    /// `-log R` against the un-ratioed `-Σ log p_i`.
    pub el: ConventionPair<T>,
    /// `Σ w log w` against `Σ w log(n w)`.
    pub et: ConventionPair<T>,
    pub el_infeasible_atoms: Vec<usize>,
    pub et_infeasible_atoms: Vec<usize>,
}

fn convention_pair<T: Scalar>(
    prior: &Distribution<T>,
    eta: Temperature<T>,
    base: &[T],
    alt: &[T],
    offset: T,
) -> Result<ConventionPair<T>> {
    let a = constrained_gibbs_update(prior, base, eta)?;
    let b = constrained_gibbs_update(prior, alt, eta)?;
    let max_offset_error = base
        .iter()
        .zip(alt)
        .filter(|(x, _)| x.is_finite())
        .map(|(&x, &y)| (y - x - offset).abs())
        .fold(T::zero(), T::max);
    Ok(ConventionPair {
        offset,
        max_offset_error,
        posterior_tv: total_variation(&a.posterior, &b.posterior)?,
        delta_log_z: b.log_normalizer - a.log_normalizer,
        expected_delta_log_z: -eta.value() * offset,
    })
}

/// Updates under both EL conventions and both ET conventions and compares.
pub fn convention_offset_check<T: Scalar, M: MomentModel<T> + ?Sized>(
    data: &Dataset<T>,
    moments: &M,
    prior: &Distribution<T>,
    eta: Temperature<T>,
) -> Result<ConventionReport<T>> {
    let n = data.len();
    let nt = T::from_usize_lossy(n);
    let ln_n = nt.ln();
    let grid = prior.grid();
    let (mut el_base, mut el_alt, mut et_base, mut et_alt) = (vec![], vec![], vec![], vec![]);
    let (mut el_bad, mut et_bad) = (vec![], vec![]);
    for (i, theta) in grid.atoms().iter().enumerate() {
        match el_at(moments, data, theta) {
            Ok(s) if s.converged => {
                el_base.push(-s.criterion);
                el_alt.push(-s.weights.iter().map(|p| p.ln()).sum::<T>());
            }
            Ok(_) | Err(Error::ElInfeasible { .. }) => {
                el_bad.push(i);
                el_base.push(T::infinity());
                el_alt.push(T::infinity());
            }
            Err(e) => return Err(e),
        }
        match et_at(moments, data, theta) {
            Ok(s) => {
                et_base.push(s.weights.iter().map(|&w| w * w.ln()).sum());
                et_alt.push(s.weights.iter().map(|&w| w * (nt * w).ln()).sum());
            }
            Err(Error::EtInfeasible { .. }) => {
                et_bad.push(i);
                et_base.push(T::infinity());
                et_alt.push(T::infinity());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ConventionReport {
        n,
        el: convention_pair(prior, eta, &el_base, &el_alt, nt * ln_n)?,
        et: convention_pair(prior, eta, &et_base, &et_alt, ln_n)?,
        el_infeasible_atoms: el_bad,
        et_infeasible_atoms: et_bad,
    })
}
