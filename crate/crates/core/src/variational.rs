//! Penalized decision rules over the simplex.
//!
//! [`solve_penalized`] minimizes `E_q[L] + (1/η) D_φ(q ‖ π)` for an
//! f-divergence `D_φ` by exponentiated-gradient (entropic mirror) descent with
//! Armijo backtracking. It never calls the closed-form Gibbs update, so for the
//! KL penalty it serves as an independent check of it. The module also
//! measures product additivity of a divergence and demonstrates that linear
//! (expected-utility) criteria are maximized by point masses.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Temperature;
use crate::scalar::Scalar;
use crate::simplex::{normalize_log_weights, Distribution};

type PhiFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    Kl,
    ReverseKl,
    ChiSquared,
    SquaredHellinger,
    Custom,
}

/// An f-divergence `D(q ‖ π) = Σ π_i φ(q_i / π_i)` given by its generator φ.
///
/// Conventions at the boundary: atoms with `π_i = q_i = 0` contribute 0,
/// `q_i > 0 = π_i` makes the divergence `+inf`, and `q_i = 0 < π_i`
/// contributes `π_i φ(0+)`.
#[derive(Clone)]
pub struct DivergenceSpec<T> {
    name: String,
    kind: DivergenceKind,
    phi: PhiFn<T>,
    dphi: PhiFn<T>,
}

impl<T> fmt::Debug for DivergenceSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceSpec").field("name", &self.name).field("kind", &self.kind).finish()
    }
}

impl<T: Scalar> DivergenceSpec<T> {
    /// `φ(t) = t ln t`.
    pub fn kl() -> Self {
        Self::builtin(
            "KL",
            DivergenceKind::Kl,
            |t: T| if t == T::zero() { T::zero() } else { t * t.ln() },
            |t: T| t.ln() + T::one(),
        )
    }

    /// `φ(t) = -ln t`, i.e. `KL(π ‖ q)`.
    pub fn reverse_kl() -> Self {
        Self::builtin("reverse-KL", DivergenceKind::ReverseKl, |t: T| -t.ln(), |t: T| -T::one() / t)
    }

    /// `φ(t) = (t - 1)^2`.
    pub fn chi_squared() -> Self {
        Self::builtin(
            "chi-squared",
            DivergenceKind::ChiSquared,
            |t: T| (t - T::one()) * (t - T::one()),
            |t: T| T::lit(2.0) * (t - T::one()),
        )
    }

    /// `φ(t) = (√t - 1)^2`.
    pub fn squared_hellinger() -> Self {
        Self::builtin(
            "squared-Hellinger",
            DivergenceKind::SquaredHellinger,
            |t: T| {
                let r = t.sqrt() - T::one();
                r * r
            },
            |t: T| T::one() - T::one() / t.sqrt(),
        )
    }

    /// The four built-in generators.
    pub fn catalog() -> Vec<Self> {
        vec![Self::kl(), Self::reverse_kl(), Self::chi_squared(), Self::squared_hellinger()]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kl" => Ok(Self::kl()),
            "reverse-kl" => Ok(Self::reverse_kl()),
            "chi-squared" | "chi2" => Ok(Self::chi_squared()),
            "squared-hellinger" | "hellinger" => Ok(Self::squared_hellinger()),
            other => Err(Error::InvalidDivergence(format!("unknown divergence '{other}'"))),
        }
    }

    /// User generator with derivative. Rejected unless `φ(1) = 0` and φ passes
    /// the numeric convexity check.
    pub fn custom(
        name: impl Into<String>,
        phi: impl Fn(T) -> T + Send + Sync + 'static,
        dphi: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        let spec = Self { name: name.into(), kind: DivergenceKind::Custom, phi: Arc::new(phi), dphi: Arc::new(dphi) };
        spec.check()?;
        Ok(spec)
    }

    fn builtin(
        name: &str,
        kind: DivergenceKind,
        phi: impl Fn(T) -> T + Send + Sync + 'static,
        dphi: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.to_string(), kind, phi: Arc::new(phi), dphi: Arc::new(dphi) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn phi(&self, t: T) -> T {
        (self.phi)(t)
    }

    pub fn dphi(&self, t: T) -> T {
        (self.dphi)(t)
    }

    /// `φ(1) = 0` within 1e-15 and nondecreasing secant slopes on a fixed
    /// geometric grid of `t` in `[1e-2, ~7.5e2]`.
    pub fn check(&self) -> Result<()> {
        let at_one = self.phi(T::one());
        if !(at_one.abs() <= T::lit(1e-15)) {
            return Err(Error::InvalidDivergence(format!("{}: phi(1) = {} != 0", self.name, at_one.as_f64())));
        }
        let ts: Vec<T> = (0..51).map(|k| T::lit(0.01 * 1.25f64.powi(k))).collect();
        let mut prev_slope = T::neg_infinity();
        for w in ts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let slope = (self.phi(b) - self.phi(a)) / (b - a);
            if !slope.is_finite() {
                return Err(Error::InvalidDivergence(format!("{}: phi not finite near t = {}", self.name, a.as_f64())));
            }
            let tol = T::lit(1e-9) * (T::one() + slope.abs());
            if slope < prev_slope - tol {
                return Err(Error::InvalidDivergence(format!("{}: phi is not convex near t = {}", self.name, a.as_f64())));
            }
            prev_slope = slope;
        }
        Ok(())
    }

    /// `π φ(q / π)` from log-weights, with the boundary conventions above.
    fn term(&self, log_q: T, log_pi: T) -> T {
        let ninf = T::neg_infinity();
        match (log_q == ninf, log_pi == ninf) {
            (true, true) => T::zero(),
            (false, true) => T::infinity(),
            (true, false) => log_pi.exp() * self.phi(T::zero()),
            (false, false) => {
                if self.kind == DivergenceKind::Kl {
                    log_q.exp() * (log_q - log_pi)
                } else {
                    log_pi.exp() * self.phi((log_q - log_pi).exp())
                }
            }
        }
    }

    /// `φ'(q / π)` from log-weights.
    fn slope(&self, log_q: T, log_pi: T) -> T {
        match self.kind {
            DivergenceKind::Kl => log_q - log_pi + T::one(),
            _ => self.dphi((log_q - log_pi).exp()),
        }
    }

    /// `D(q ‖ π)`; `+inf` when `q` is not absolutely continuous w.r.t. `π`.
    pub fn divergence(&self, q: &Distribution<T>, baseline: &Distribution<T>) -> Result<T> {
        if !q.same_grid(baseline) {
            return Err(Error::GridMismatch);
        }
        Ok(q.log_weights().iter().zip(baseline.log_weights()).map(|(&a, &b)| self.term(a, b)).sum())
    }
}

/// Penalized objective `Σ q_i L_i + (1/η) D(q ‖ π)`; `+inf` unless `q ≪ π`.
pub fn objective<T: Scalar>(
    q: &Distribution<T>,
    losses: &[T],
    eta: Temperature<T>,
    div: &DivergenceSpec<T>,
    baseline: &Distribution<T>,
) -> Result<T> {
    if !q.same_grid(baseline) {
        return Err(Error::GridMismatch);
    }
    if losses.len() != q.len() {
        return Err(Error::LengthMismatch { what: "losses", expected: q.len(), got: losses.len() });
    }
    let d = div.divergence(q, baseline)?;
    if d == T::infinity() {
        return Ok(T::infinity());
    }
    Ok(q.expectation(losses)? + d / eta.value())
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Convergence threshold on the KKT residual (and reported step norm).
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Scalar> {
    pub solution: Distribution<T>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// L1 norm of the last accepted step.
    pub final_step_norm: T,
    /// `sqrt(Σ q_i (g_i - ḡ)^2)`: the simplex-projected gradient norm.
    pub kkt_residual: T,
}

/// A line-search candidate in log weights.
struct Trial<T> {
    lq: Vec<T>,
    f: T,
    g: Vec<T>,
    residual: T,
    step: T,
}

/// Minimizes the penalized objective over distributions absolutely continuous
/// with respect to `baseline`.
///
/// Exponentiated-gradient steps `log q ← log q - s ∇f` (renormalized) start at
/// the baseline with `s = η`, halve until the Armijo condition holds, and may
/// double after each accepted step. A run that exhausts `max_iter` or stalls
/// returns `converged = false`.
pub fn solve_penalized<T: Scalar>(
    baseline: &Distribution<T>,
    losses: &[T],
    eta: Temperature<T>,
    div: &DivergenceSpec<T>,
    options: SolverOptions<T>,
) -> Result<SolveReport<T>> {
    let n = baseline.len();
    if losses.len() != n {
        return Err(Error::LengthMismatch { what: "losses", expected: n, got: losses.len() });
    }
    let log_pi = baseline.log_weights().to_vec();
    for i in baseline.support() {
        if !losses[i].is_finite() {
            return Err(Error::NonFiniteLoss { atom: i, datum: None, value: losses[i].as_f64() });
        }
    }
    let inv_eta = T::one() / eta.value();
    let ninf = T::neg_infinity();
    let eval = |lq: &[T]| -> T {
        let mut f = T::zero();
        for i in 0..n {
            if lq[i] == ninf {
                continue;
            }
            f = f + lq[i].exp() * losses[i];
        }
        let d: T = lq.iter().zip(&log_pi).map(|(&a, &b)| div.term(a, b)).sum();
        f + d * inv_eta
    };
    let gradient = |lq: &[T]| -> Vec<T> {
        (0..n)
            .map(|i| if log_pi[i] == ninf { T::zero() } else { losses[i] + inv_eta * div.slope(lq[i], log_pi[i]) })
            .collect()
    };
    let kkt = |lq: &[T], g: &[T]| -> T {
        let mean: T = (0..n).filter(|&i| lq[i] > ninf).map(|i| lq[i].exp() * g[i]).sum();
        (0..n)
            .filter(|&i| lq[i] > ninf)
            .map(|i| lq[i].exp() * (g[i] - mean) * (g[i] - mean))
            .sum::<T>()
            .sqrt()
    };

    let loss_scale: T = baseline.support().map(|i| losses[i].abs()).fold(T::zero(), T::max);
    let c1 = T::lit(0.5);
    let mut lq = log_pi.clone();
    let mut f = eval(&lq);
    let mut g = gradient(&lq);
    let mut residual = kkt(&lq, &g);
    let mut step = eta.value();
    let mut final_step_norm = T::zero();
    let mut converged = residual <= options.tol;
    let mut iterations = 0;

    while !converged && iterations < options.max_iter {
        iterations += 1;
        // Below this scale objective differences are round-off; progress is
        // then judged by contraction of the KKT residual instead.
        let noise = T::lit(64.0) * T::epsilon() * (T::one() + f.abs() + loss_scale);
        let mut s = step;
        let mut accepted = None;
        // Below the round-off floor of f, fall back to the step that shrinks the residual most.
        let mut fallback: Option<Trial<T>> = None;
        for _ in 0..200 {
            let raw: Vec<T> = (0..n).map(|i| if lq[i] == ninf { ninf } else { lq[i] - s * g[i] }).collect();
            let cand = normalize_log_weights(&raw)?;
            let f_new = eval(&cand);
            if f_new.is_finite() {
                let predicted: T = (0..n)
                    .filter(|&i| log_pi[i] > ninf)
                    .map(|i| (cand[i].exp() - lq[i].exp()) * g[i])
                    .sum();
                let decrease = f + c1 * predicted;
                let g_new = gradient(&cand);
                let r_new = kkt(&cand, &g_new);
                if -predicted > noise && f_new <= decrease {
                    accepted = Some(Trial { lq: cand, f: f_new, g: g_new, residual: r_new, step: s });
                    break;
                }
                let better = fallback.as_ref().is_none_or(|b| r_new < b.residual);
                if f_new <= f + noise && r_new < residual && better {
                    fallback = Some(Trial { lq: cand, f: f_new, g: g_new, residual: r_new, step: s });
                }
            }
            s = s * T::lit(0.5);
        }
        let Some(t) = accepted.or(fallback) else {
            break;
        };
        final_step_norm = (0..n).map(|i| (t.lq[i].exp() - lq[i].exp()).abs()).sum();
        lq = t.lq;
        f = t.f;
        g = t.g;
        residual = t.residual;
        converged = residual <= options.tol;
        step = (t.step + t.step).min(T::lit(1e12));
    }
    let solution = Distribution::from_normalized(baseline.grid().clone(), lq)?;
    Ok(SolveReport { objective: f, solution, iterations, converged, final_step_norm, kkt_residual: residual })
}

/// `D(q1⊗q2 ‖ π1⊗π2) - D(q1 ‖ π1) - D(q2 ‖ π2)`, evaluated on the product grid.
pub fn product_additivity_gap<T: Scalar>(
    div: &DivergenceSpec<T>,
    q1: &Distribution<T>,
    pi1: &Distribution<T>,
    q2: &Distribution<T>,
    pi2: &Distribution<T>,
) -> Result<T> {
    if !q1.same_grid(pi1) || !q2.same_grid(pi2) {
        return Err(Error::GridMismatch);
    }
    let joint = div.divergence(&q1.product(q2), &pi1.product(pi2))?;
    Ok(joint - div.divergence(q1, pi1)? - div.divergence(q2, pi2)?)
}

/// Optimal rule for a linear (expected-utility) criterion `U(q) = Σ u_i q_i`.
#[derive(Debug, Clone)]
pub struct VnmRule<T: Scalar> {
    /// Point mass on the lowest-index maximizer.
    pub rule: Distribution<T>,
    /// Every atom attaining the maximal utility, ascending.
    pub argmax: Vec<usize>,
    pub value: T,
}

pub fn vnm_optimal_rule<T: Scalar>(grid: Arc<crate::grid::ParamGrid<T>>, utility: &[T]) -> Result<VnmRule<T>> {
    if utility.len() != grid.len() {
        return Err(Error::LengthMismatch { what: "utilities", expected: grid.len(), got: utility.len() });
    }
    if let Some(i) = utility.iter().position(|u| !u.is_finite()) {
        return Err(Error::InvalidArgument(format!("utility of atom {i} is not finite")));
    }
    let value = utility.iter().copied().fold(T::neg_infinity(), T::max);
    let argmax: Vec<usize> = (0..utility.len()).filter(|&i| utility[i] == value).collect();
    let rule = Distribution::point_mass(grid, argmax[0])?;
    Ok(VnmRule { rule, argmax, value })
}

/// Maximizes `Σ u_i q_i` over the simplex by exponentiated-gradient ascent
/// from `start` (step doubling each iteration) until the duality gap
/// `max u - Σ q u` falls below `tol`.
pub fn maximize_linear_utility<T: Scalar>(
    start: &Distribution<T>,
    utility: &[T],
    tol: T,
    max_iter: usize,
) -> Result<SolveReport<T>> {
    let n = start.len();
    if utility.len() != n {
        return Err(Error::LengthMismatch { what: "utilities", expected: n, got: utility.len() });
    }
    if let Some(i) = utility.iter().position(|u| !u.is_finite()) {
        return Err(Error::InvalidArgument(format!("utility of atom {i} is not finite")));
    }
    let best = start.support().map(|i| utility[i]).fold(T::neg_infinity(), T::max);
    let ninf = T::neg_infinity();
    let mut lq = start.log_weights().to_vec();
    let mut step = T::one();
    let mut iterations = 0;
    let mut final_step_norm = T::zero();
    let value = |lq: &[T]| -> T { (0..n).filter(|&i| lq[i] > ninf).map(|i| lq[i].exp() * utility[i]).sum() };
    let mut gap = best - value(&lq);
    while gap > tol && iterations < max_iter {
        let raw: Vec<T> = (0..n).map(|i| if lq[i] == ninf { ninf } else { lq[i] + step * utility[i] }).collect();
        let cand = normalize_log_weights(&raw)?;
        final_step_norm = (0..n).map(|i| (cand[i].exp() - lq[i].exp()).abs()).sum();
        lq = cand;
        step = step + step;
        iterations += 1;
        gap = best - value(&lq);
    }
    let objective = value(&lq);
    let solution = Distribution::from_normalized(start.grid().clone(), lq)?;
    Ok(SolveReport {
        solution,
        objective,
        iterations,
        converged: gap <= tol,
        final_step_norm,
        kkt_residual: gap.max(T::zero()),
    })
}
