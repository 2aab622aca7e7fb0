//! The x-normalization diagnostic.
//!
//! A loss/temperature pair produces an ordinary Bayesian posterior for some
//! likelihood exactly when `A(θ) = ∫ exp(-η l(θ, x)) μ(dx)` is finite and does
//! not depend on `θ`. [`partition_function_curve`] estimates `A` by quadrature
//! and issues a verdict; [`extract_likelihood`] recovers `p_θ(x)` when the
//! verdict allows it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ParamGrid, QuadratureRule, SampleGrid, Temperature};
use crate::loss::LossModel;
use crate::scalar::Scalar;
use crate::simplex::logsumexp;

/// Printed with every report: a finite grid can refute but not prove.
pub const GRID_CAVEAT: &str = "A belief-posterior verdict only certifies that A(theta) is constant on the supplied \
sample grid; constancy over the whole sample space cannot be checked numerically. A decision-posterior verdict is \
definitive up to the reported quadrature error.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BeliefPosterior,
    DecisionPosterior,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::BeliefPosterior => "belief-posterior",
            Verdict::DecisionPosterior => "decision-posterior",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Thresholds for the verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiagnosticConfig<T> {
    /// Largest relative variation of `A` still read as constant.
    pub rel_tol: T,
    /// The quadrature error must be this many times smaller than the quantity
    /// being judged.
    pub error_margin: T,
}

impl<T: Scalar> Default for DiagnosticConfig<T> {
    fn default() -> Self {
        Self { rel_tol: T::lit(1e-3), error_margin: T::lit(10.0) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiagnosticReport<T> {
    pub a_values: Vec<T>,
    pub log_a_values: Vec<T>,
    /// `(max A - min A) / min A`.
    pub max_rel_variation: T,
    /// Largest relative quadrature error of any `A(θ)`; 0 for exact sums and
    /// for user rules without an error model.
    pub quadrature_error_estimate: T,
    pub verdict: Verdict,
    pub caveat: String,
}

/// Estimates `A(θ)` on every atom of `params` and classifies the pair.
///
/// For trapezoid grids the error estimate compares the full rule with the
/// half-resolution rule (Richardson: `|A_h - A_2h| / 3`).
pub fn partition_function_curve<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    eta: Temperature<T>,
    params: &ParamGrid<T>,
    xs: &SampleGrid<T>,
    config: DiagnosticConfig<T>,
) -> Result<DiagnosticReport<T>> {
    let log_w: Vec<T> = xs.weights().iter().map(|w| w.ln()).collect();
    let coarse: Option<Vec<T>> = match xs.rule() {
        QuadratureRule::Trapezoid { coarse_weights } => Some(coarse_weights.iter().map(|w| w.ln()).collect()),
        _ => None,
    };
    let e = eta.value();
    let mut log_a_values = Vec::with_capacity(params.len());
    let mut err = T::zero();
    let mut terms = vec![T::zero(); xs.len()];
    for (i, theta) in params.atoms().iter().enumerate() {
        for (j, x) in xs.nodes().iter().enumerate() {
            let l = loss.loss(theta, x);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { atom: i, datum: Some(j), value: l.as_f64() });
            }
            terms[j] = -e * l;
        }
        let fine: Vec<T> = terms.iter().zip(&log_w).map(|(&t, &w)| t + w).collect();
        let log_a = logsumexp(&fine);
        if !log_a.is_finite() || !log_a.exp().is_finite() || log_a.exp() == T::zero() {
            return Err(Error::NonFinitePartition { atom: i });
        }
        if let Some(cw) = &coarse {
            let c: Vec<T> = terms.iter().zip(cw).map(|(&t, &w)| t + w).collect();
            let log_c = logsumexp(&c);
            let rel = (T::one() - (log_c - log_a).exp()).abs() / T::lit(3.0);
            err = err.max(rel);
        }
        log_a_values.push(log_a);
    }
    let max = log_a_values.iter().copied().fold(T::neg_infinity(), T::max);
    let min = log_a_values.iter().copied().fold(T::infinity(), T::min);
    let max_rel_variation = (max - min).exp_m1();
    let verdict = classify(max_rel_variation, err, config);
    Ok(DiagnosticReport {
        a_values: log_a_values.iter().map(|v| v.exp()).collect(),
        log_a_values,
        max_rel_variation,
        quadrature_error_estimate: err,
        verdict,
        caveat: GRID_CAVEAT.to_string(),
    })
}

fn classify<T: Scalar>(variation: T, err: T, config: DiagnosticConfig<T>) -> Verdict {
    let resolved = err * config.error_margin;
    if variation <= config.rel_tol {
        if resolved <= config.rel_tol {
            Verdict::BeliefPosterior
        } else {
            Verdict::Inconclusive
        }
    } else if resolved <= variation {
        Verdict::DecisionPosterior
    } else {
        Verdict::Inconclusive
    }
}

/// `log p_θ(x_j)` on the diagnostic grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LikelihoodTable<T> {
    /// `log_p[i][j] = -η l(θ_i, x_j) - log Ā`.
    pub log_p: Vec<Vec<T>>,
    /// Common value `Ā` (arithmetic mean of the estimated `A(θ)`).
    pub normalizer: T,
    pub report: DiagnosticReport<T>,
}

impl<T: Scalar> LikelihoodTable<T> {
    pub fn density(&self, atom: usize, node: usize) -> T {
        self.log_p[atom][node].exp()
    }

    /// Per-atom losses `-(1/η) log p_θ(x_j)` of a node: the log-loss of the
    /// extracted likelihood at the original temperature.
    pub fn node_losses(&self, node: usize, eta: Temperature<T>) -> Vec<T> {
        self.log_p.iter().map(|row| -row[node] / eta.value()).collect()
    }
}

/// Recovers the likelihood implied by a belief-posterior loss.
pub fn extract_likelihood<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    eta: Temperature<T>,
    params: &ParamGrid<T>,
    xs: &SampleGrid<T>,
    config: DiagnosticConfig<T>,
) -> Result<LikelihoodTable<T>> {
    let report = partition_function_curve(loss, eta, params, xs, config)?;
    if report.verdict != Verdict::BeliefPosterior {
        return Err(Error::NotBeliefPosterior { verdict: report.verdict.to_string() });
    }
    let n = T::from_usize_lossy(report.log_a_values.len());
    let log_mean = logsumexp(&report.log_a_values) - n.ln();
    let e = eta.value();
    let log_p = params
        .atoms()
        .iter()
        .map(|theta| xs.nodes().iter().map(|x| -e * loss.loss(theta, x) - log_mean).collect())
        .collect();
    Ok(LikelihoodTable { log_p, normalizer: log_mean.exp(), report })
}
