//! Normalizing-constant bookkeeping.
//!
//! `Z = Σ π_i exp(-η L_i)` moves by the factor `exp(-η c)` under any data-only
//! shift `L + c` while the posterior stays put, so generalized Bayes factors
//! built from `Z` carry no canonical evidential meaning. Records keep the
//! temperature and shift lineage, and every serialized record carries
//! [`WARNING`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{apply_data_shift, gibbs_update, GibbsResult};
use crate::grid::Temperature;
use crate::scalar::Scalar;
use crate::simplex::{total_variation, Distribution};

pub const WARNING: &str = "Gibbs normalizing constants are not canonical evidence: adding a data-only term c(x) to \
the loss leaves the posterior unchanged but multiplies Z by exp(-eta*c), and rescaling the loss changes it too. \
Generalized Bayes factors inherit this arbitrariness; compare models by predictive scores instead.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvidenceRecord<T: Scalar> {
    pub model_id: String,
    pub eta: Temperature<T>,
    #[serde(rename = "log_Z")]
    pub log_z: T,
    /// `log Z~` of the anchored loss; never positive.
    #[serde(rename = "anchored_log_Z")]
    pub anchored_log_z: T,
    /// Data-only shift folded into the loss, 0 if none.
    pub shift_applied: T,
    pub warning: String,
}

impl<T: Scalar> EvidenceRecord<T> {
    pub fn from_result(model_id: impl Into<String>, eta: Temperature<T>, result: &GibbsResult<T>, shift: T) -> Self {
        Self {
            model_id: model_id.into(),
            eta,
            log_z: result.log_normalizer,
            anchored_log_z: result.anchored_log_normalizer,
            shift_applied: shift,
            warning: WARNING.to_string(),
        }
    }

    /// Runs the update and records its constants.
    pub fn compute(model_id: impl Into<String>, prior: &Distribution<T>, losses: &[T], eta: Temperature<T>) -> Result<Self> {
        let r = gibbs_update(prior, losses, eta)?;
        Ok(Self::from_result(model_id, eta, &r, T::zero()))
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ShiftedPairReport<T: Scalar> {
    pub original: EvidenceRecord<T>,
    pub shifted: EvidenceRecord<T>,
    pub posterior_tv: T,
    /// `log Z_c - log Z`.
    pub delta_log_z: T,
    /// `-η c`.
    pub expected_delta_log_z: T,
}

/// Updates with `L` and with `L + c` and compares the results.
pub fn shifted_pair_report<T: Scalar>(
    prior: &Distribution<T>,
    losses: &[T],
    eta: Temperature<T>,
    c: T,
) -> Result<ShiftedPairReport<T>> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument("shift must be finite".into()));
    }
    let base = gibbs_update(prior, losses, eta)?;
    let moved = gibbs_update(prior, &apply_data_shift(losses, c), eta)?;
    let posterior_tv = total_variation(&base.posterior, &moved.posterior)?;
    Ok(ShiftedPairReport {
        delta_log_z: moved.log_normalizer - base.log_normalizer,
        expected_delta_log_z: -eta.value() * c,
        original: EvidenceRecord::from_result("original", eta, &base, T::zero()),
        shifted: EvidenceRecord::from_result("shifted", eta, &moved, c),
        posterior_tv,
    })
}

/// `log BF_10 = log Z_1 - log Z_0`. Records at different temperatures are not
/// comparable and produce an error.
pub fn generalized_bayes_factor<T: Scalar>(m1: &EvidenceRecord<T>, m0: &EvidenceRecord<T>) -> Result<T> {
    if m1.eta != m0.eta {
        return Err(Error::TemperatureMismatch { left: m1.eta.value().as_f64(), right: m0.eta.value().as_f64() });
    }
    Ok(m1.log_z - m0.log_z)
}

/// `-(1/η) log Z~`: the optimal penalized objective of the anchored loss.
pub fn anchored_evidence<T: Scalar>(prior: &Distribution<T>, losses: &[T], eta: Temperature<T>) -> Result<T> {
    let r = gibbs_update(prior, losses, eta)?;
    Ok(-r.anchored_log_normalizer / eta.value())
}

/// Result of shifting two competing models' losses by `c1` and `c0`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct BayesFactorShiftDemo<T: Scalar> {
    pub log_bf: T,
    pub log_bf_shifted: T,
    /// `log BF' - log BF`; equals `η (c0 - c1)`, i.e. `log g(x)`.
    pub delta_log_bf: T,
    pub expected_delta_log_bf: T,
    pub posterior_tv_model1: T,
    pub posterior_tv_model0: T,
    pub records: Vec<EvidenceRecord<T>>,
    pub warning: String,
}

#[allow(clippy::too_many_arguments)]
pub fn bayes_factor_shift_demo<T: Scalar>(
    prior1: &Distribution<T>,
    losses1: &[T],
    prior0: &Distribution<T>,
    losses0: &[T],
    eta: Temperature<T>,
    c1: T,
    c0: T,
) -> Result<BayesFactorShiftDemo<T>> {
    let p1 = shifted_pair_report(prior1, losses1, eta, c1)?;
    let p0 = shifted_pair_report(prior0, losses0, eta, c0)?;
    let label = |mut r: EvidenceRecord<T>, id: &str| {
        r.model_id = id.to_string();
        r
    };
    let log_bf = generalized_bayes_factor(&p1.original, &p0.original)?;
    let log_bf_shifted = generalized_bayes_factor(&p1.shifted, &p0.shifted)?;
    Ok(BayesFactorShiftDemo {
        log_bf,
        log_bf_shifted,
        delta_log_bf: log_bf_shifted - log_bf,
        expected_delta_log_bf: eta.value() * (c0 - c1),
        posterior_tv_model1: p1.posterior_tv,
        posterior_tv_model0: p0.posterior_tv,
        records: vec![
            label(p1.original, "m1"),
            label(p1.shifted, "m1-shifted"),
            label(p0.original, "m0"),
            label(p0.shifted, "m0-shifted"),
        ],
        warning: WARNING.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ParamGrid;
    use std::sync::Arc;

    fn uniform2() -> Distribution<f64> {
        Distribution::uniform(Arc::new(ParamGrid::from_scalars(&[0.0, 1.0]).unwrap()))
    }

    fn eta(v: f64) -> Temperature<f64> {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn shifted_pair_examples() {
        let pi = uniform2();
        let l = [0.0, 3f64.ln()];
        let r = shifted_pair_report(&pi, &l, eta(1.0), 1.0).unwrap();
        assert!(r.posterior_tv <= 1e-15);
        assert!((r.delta_log_z + 1.0).abs() < 1e-12);
        assert_eq!(r.expected_delta_log_z, -1.0);
        assert_eq!(r.shifted.shift_applied, 1.0);

        let r = shifted_pair_report(&pi, &l, eta(1.0), 0.0).unwrap();
        assert_eq!(r.original.log_z, r.shifted.log_z);
        assert_eq!(r.posterior_tv, 0.0);

        let l = [2.5, 4.0];
        let r = shifted_pair_report(&pi, &l, eta(0.5), -2.5).unwrap();
        assert!((r.shifted.log_z - r.original.anchored_log_z).abs() < 1e-15);
    }

    #[test]
    fn bayes_factor_examples() {
        let pi = uniform2();
        let l = [0.0, 3f64.ln()];
        let a = EvidenceRecord::compute("a", &pi, &l, eta(1.0)).unwrap();
        assert_eq!(generalized_bayes_factor(&a, &a).unwrap(), 0.0);
        let b = EvidenceRecord::compute("b", &pi, &l, eta(2.0)).unwrap();
        assert!(matches!(generalized_bayes_factor(&a, &b), Err(Error::TemperatureMismatch { .. })));

        let d = bayes_factor_shift_demo(&pi, &l, &pi, &[1.0, 0.5], eta(1.0), 1.0, 0.0).unwrap();
        assert!((d.delta_log_bf + 1.0).abs() < 1e-12);
        assert!(d.posterior_tv_model1 < 1e-15 && d.posterior_tv_model0 == 0.0);
        assert!(d.records.iter().all(|r| r.warning == WARNING));
    }

    #[test]
    fn anchored_examples() {
        let pi = uniform2();
        let v = anchored_evidence(&pi, &[0.0, 3f64.ln()], eta(1.0)).unwrap();
        assert!((v - 0.405465108108164).abs() < 1e-12);
        let v2 = anchored_evidence(&pi, &[5.0, 5.0 + 3f64.ln()], eta(1.0)).unwrap();
        assert!((v2 - 0.405465108108164).abs() < 1e-12);
        assert_eq!(anchored_evidence(&pi, &[7.0, 7.0], eta(3.0)).unwrap(), 0.0);
    }

    #[test]
    fn record_json_shape() {
        let pi = uniform2();
        let r = EvidenceRecord::compute("m", &pi, &[0.0, 1.0], eta(1.5)).unwrap();
        let s = serde_json::to_value(&r).unwrap();
        for key in ["model_id", "eta", "log_Z", "anchored_log_Z", "shift_applied", "warning"] {
            assert!(s.get(key).is_some(), "{key}");
        }
        let back: EvidenceRecord<f64> = serde_json::from_value(s).unwrap();
        assert_eq!(back, r);
        let bad = serde_json::json!({"model_id":"m","eta":-1.0,"log_Z":0.0,"anchored_log_Z":0.0,"shift_applied":0.0,"warning":""});
        assert!(serde_json::from_value::<EvidenceRecord<f64>>(bad).is_err());
    }
}
