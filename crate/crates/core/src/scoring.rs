//! Prequential scoring of induced predictives.
//!
//! A posterior over the grid induces the mixture predictive
//! `P(y) = Σ_i q_i p(y | θ_i)`. Scoring these one step ahead compares models
//! through quantities that a data-only loss shift cannot move.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::gibbs_update;
use crate::grid::{Dataset, ParamGrid, Temperature};
use crate::loss::{datum_losses, LossModel};
use crate::scalar::Scalar;
use crate::simplex::Distribution;

/// Rows must integrate to one within this tolerance.
pub const ROW_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    /// Point masses; weights are 1.
    Discrete,
    /// Densities integrated with the quadrature weights.
    Continuous,
}

/// Per-atom predictive densities (or masses) on a one-dimensional outcome grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictiveFamily<T> {
    kind: OutcomeKind,
    nodes: Vec<T>,
    weights: Vec<T>,
    table: Vec<Vec<T>>,
}

impl<T: Scalar> PredictiveFamily<T> {
    /// Probability masses `table[i][j] = P(y = nodes[j] | θ_i)`.
    pub fn discrete(nodes: Vec<T>, table: Vec<Vec<T>>) -> Result<Self> {
        let weights = vec![T::one(); nodes.len()];
        Self::build(OutcomeKind::Discrete, nodes, weights, table)
    }

    /// Density values with quadrature weights on the nodes.
    pub fn continuous(nodes: Vec<T>, weights: Vec<T>, table: Vec<Vec<T>>) -> Result<Self> {
        Self::build(OutcomeKind::Continuous, nodes, weights, table)
    }

    /// Bernoulli(θ) rows on `{0, 1}`; the grid must be one-dimensional with
    /// atoms in `[0, 1]`.
    pub fn bernoulli(grid: &ParamGrid<T>) -> Result<Self> {
        let table = grid
            .atoms()
            .iter()
            .map(|a| {
                let p = a[0];
                if !(p >= T::zero() && p <= T::one()) || grid.dim() != 1 {
                    return Err(Error::InvalidArgument(format!("Bernoulli atom {} outside [0, 1]", p.as_f64())));
                }
                Ok(vec![T::one() - p, p])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::discrete(vec![T::zero(), T::one()], table)
    }

    /// N(θ, σ²) densities on a trapezoid grid over `[lo, hi]`, each row
    /// renormalized so that the truncated mass integrates to one.
    pub fn gaussian(grid: &ParamGrid<T>, sigma: T, lo: T, hi: T, step: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        let sg = crate::grid::SampleGrid::trapezoid(lo, hi, step)?;
        let nodes: Vec<T> = sg.nodes().iter().map(|n| n[0]).collect();
        let weights = sg.weights().to_vec();
        let half = T::lit(0.5);
        let table = grid
            .atoms()
            .iter()
            .map(|a| {
                let raw: Vec<T> = nodes
                    .iter()
                    .map(|&y| {
                        let z = (y - a[0]) / sigma;
                        (-half * z * z).exp()
                    })
                    .collect();
                let mass: T = raw.iter().zip(&weights).map(|(&p, &w)| p * w).sum();
                if !(mass > T::zero()) {
                    return Err(Error::InvalidArgument(format!("no Gaussian mass on the outcome grid for atom {}", a[0].as_f64())));
                }
                Ok(raw.into_iter().map(|p| p / mass).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::continuous(nodes, weights, table)
    }

    fn build(kind: OutcomeKind, nodes: Vec<T>, weights: Vec<T>, table: Vec<Vec<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("outcome grid"));
        }
        if table.is_empty() {
            return Err(Error::Empty("predictive table"));
        }
        if weights.len() != nodes.len() {
            return Err(Error::LengthMismatch { what: "outcome weights", expected: nodes.len(), got: weights.len() });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w > T::zero() && w.is_finite())) {
            return Err(Error::InvalidQuadratureWeight { index, value: value.as_f64() });
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("outcome nodes must be finite".into()));
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != nodes.len() {
                return Err(Error::DimensionMismatch { index: i, expected: nodes.len(), got: row.len() });
            }
            if let Some(&v) = row.iter().find(|v| !(**v >= T::zero() && v.is_finite())) {
                return Err(Error::InvalidArgument(format!("predictive row {i} has invalid value {}", v.as_f64())));
            }
            let total: T = row.iter().zip(&weights).map(|(&p, &w)| p * w).sum();
            if (total - T::one()).abs().as_f64() > ROW_TOL {
                return Err(Error::InvalidArgument(format!("predictive row {i} integrates to {}", total.as_f64())));
            }
        }
        Ok(Self { kind, nodes, weights, table })
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn table(&self) -> &[Vec<T>] {
        &self.table
    }

    pub fn atoms(&self) -> usize {
        self.table.len()
    }

    /// Index of the node `y` snaps to. Exact matches are silent; snapping
    /// within half the spacing to the nearest other node is logged; anything
    /// farther is an error.
    pub fn locate(&self, y: T) -> Result<usize> {
        if !y.is_finite() {
            return Err(Error::OffGrid { y: y.as_f64() });
        }
        let mut best = 0;
        for (j, &z) in self.nodes.iter().enumerate() {
            if (z - y).abs() < (self.nodes[best] - y).abs() {
                best = j;
            }
        }
        let z = self.nodes[best];
        let dist = (z - y).abs();
        if dist == T::zero() {
            return Ok(best);
        }
        let spacing = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != best)
            .map(|(_, &v)| (v - z).abs())
            .fold(T::infinity(), T::min);
        if dist <= spacing * T::lit(0.5) {
            if dist > T::lit(1e-12) * (T::one() + z.abs()) {
                warn!("outcome {} snapped to grid node {}", y.as_f64(), z.as_f64());
            }
            Ok(best)
        } else {
            Err(Error::OffGrid { y: y.as_f64() })
        }
    }
}

/// `P(y_j) = Σ_i q_i p(y_j | θ_i)`.
pub fn induced_predictive<T: Scalar>(posterior: &Distribution<T>, family: &PredictiveFamily<T>) -> Result<Vec<T>> {
    if posterior.len() != family.atoms() {
        return Err(Error::LengthMismatch { what: "predictive rows", expected: posterior.len(), got: family.atoms() });
    }
    let mut out = vec![T::zero(); family.nodes.len()];
    for i in posterior.support() {
        let q = posterior.weight(i);
        for (o, &p) in out.iter_mut().zip(&family.table[i]) {
            *o = *o + q * p;
        }
    }
    Ok(out)
}

/// `log P(y)`; `-inf` when the predictive puts no mass at `y`.
pub fn log_score<T: Scalar>(family: &PredictiveFamily<T>, predictive: &[T], y: T) -> Result<T> {
    check_len(family, predictive)?;
    let j = family.locate(y)?;
    Ok(predictive[j].ln())
}

/// `Σ_j w_j (F(z_j) - 1{z_j >= y})^2` with `F` the predictive CDF on the grid.
pub fn crps<T: Scalar>(family: &PredictiveFamily<T>, predictive: &[T], y: T) -> Result<T> {
    check_len(family, predictive)?;
    if family.nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::UnsortedGrid);
    }
    let mut cdf = T::zero();
    let mut total = T::zero();
    for ((&z, &w), &p) in family.nodes.iter().zip(&family.weights).zip(predictive) {
        cdf = cdf + p * w;
        let step = if z >= y { T::one() } else { T::zero() };
        let d = cdf.min(T::one()) - step;
        total = total + w * d * d;
    }
    Ok(total)
}

fn check_len<T: Scalar>(family: &PredictiveFamily<T>, predictive: &[T]) -> Result<()> {
    if predictive.len() != family.nodes.len() {
        return Err(Error::LengthMismatch { what: "predictive", expected: family.nodes.len(), got: predictive.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringRule {
    /// Log predictive density; larger is better.
    Log,
    /// Continuous ranked probability score; smaller is better.
    Crps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoreTrace<T> {
    pub rule: ScoringRule,
    pub per_step: Vec<T>,
    pub cumulative: T,
    /// 1-based steps whose predictive had zero mass at the outcome.
    pub zero_density_steps: Vec<usize>,
}

impl<T: Scalar> ScoreTrace<T> {
    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    /// CSV with columns `t, score, cumulative` (running sum), `t` from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["t", "score", "cumulative"]).map_err(io)?;
        let mut run = T::zero();
        for (t, &s) in self.per_step.iter().enumerate() {
            run = run + s;
            w.write_record([(t + 1).to_string(), format!("{s:?}"), format!("{run:?}")]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Scores the one-step-ahead predictives `q_t = q(· | x_{1:t-1})` against
/// `y_t`; step 1 uses the prior.
pub fn prequential_score<T: Scalar, L: LossModel<T> + ?Sized>(
    prior: &Distribution<T>,
    loss: &L,
    eta: Temperature<T>,
    family: &PredictiveFamily<T>,
    data: &Dataset<T>,
    rule: ScoringRule,
) -> Result<ScoreTrace<T>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let grid = prior.grid().clone();
    let mut cum = vec![T::zero(); prior.len()];
    let mut per_step = Vec::with_capacity(data.len());
    let mut zero_density_steps = Vec::new();
    for t in 0..data.len() {
        let step = t + 1;
        let predictive = if t == 0 {
            induced_predictive(prior, family)
        } else {
            gibbs_update(prior, &cum, eta).and_then(|g| induced_predictive(&g.posterior, family))
        }
        .map_err(|e| Error::at_step(step, e))?;
        let y = data.outcome(t);
        let s = match rule {
            ScoringRule::Log => log_score(family, &predictive, y),
            ScoringRule::Crps => crps(family, &predictive, y),
        }
        .map_err(|e| Error::at_step(step, e))?;
        if rule == ScoringRule::Log && s == T::neg_infinity() {
            zero_density_steps.push(step);
        }
        per_step.push(s);
        let l = datum_losses(loss, &grid, data.record(t), t).map_err(|e| Error::at_step(step, e))?;
        for (c, v) in cum.iter_mut().zip(l) {
            *c = *c + v;
        }
    }
    let cumulative = per_step.iter().copied().sum();
    Ok(ScoreTrace { rule, per_step, cumulative, zero_density_steps })
}

/// `cumulative_1 - cumulative_0`.
pub fn delta_lpd<T: Scalar>(trace1: &ScoreTrace<T>, trace0: &ScoreTrace<T>) -> Result<T> {
    if trace1.len() != trace0.len() {
        return Err(Error::TraceMismatch(format!("lengths {} and {}", trace1.len(), trace0.len())));
    }
    if trace1.rule != trace0.rule {
        return Err(Error::TraceMismatch(format!("rules {:?} and {:?}", trace1.rule, trace0.rule)));
    }
    Ok(trace1.cumulative - trace0.cumulative)
}
