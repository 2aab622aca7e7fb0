//! The generalized-Bayes update `q ∝ π · exp(-η L)` and its companions:
//! block-wise (sequential) updating, data-only shifts and loss rescaling.
//!
//! Internally every update is computed on the anchored loss `L - min L`
//! (minimum over the prior's support). The posterior therefore depends on the
//! loss only through differences between atoms, and a data-only shift that is
//! exactly representable leaves it bit-identical.

use crate::error::{Error, Result};
use crate::grid::Temperature;
use crate::scalar::Scalar;
use crate::simplex::{logsumexp, normalize_log_weights, Distribution};

/// Posterior together with its normalizing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsResult<T: Scalar> {
    pub posterior: Distribution<T>,
    /// `log Z = log sum_i π_i exp(-η L_i)`.
    pub log_normalizer: T,
    /// `log Z~` computed with the anchored loss `L - min L`; always `<= 0`.
    pub anchored_log_normalizer: T,
}

/// Gibbs update of `prior` by cumulative per-atom `losses` at temperature `eta`.
///
/// Atoms with zero prior weight keep zero posterior weight whatever their loss.
/// Any non-finite loss on the prior's support is an error naming the atom.
pub fn gibbs_update<T: Scalar>(prior: &Distribution<T>, losses: &[T], eta: Temperature<T>) -> Result<GibbsResult<T>> {
    tilt(prior, losses, eta, false)
}

/// Like [`gibbs_update`], but a `+inf` loss acts as a hard constraint: the atom
/// receives zero posterior weight. `NaN` and `-inf` are still errors, and at
/// least one supported atom must have finite loss.
pub fn constrained_gibbs_update<T: Scalar>(
    prior: &Distribution<T>,
    losses: &[T],
    eta: Temperature<T>,
) -> Result<GibbsResult<T>> {
    tilt(prior, losses, eta, true)
}

fn tilt<T: Scalar>(prior: &Distribution<T>, losses: &[T], eta: Temperature<T>, allow_pos_inf: bool) -> Result<GibbsResult<T>> {
    if losses.len() != prior.len() {
        return Err(Error::LengthMismatch { what: "losses", expected: prior.len(), got: losses.len() });
    }
    let log_prior = prior.log_weights();
    let mut min_loss = T::infinity();
    for (atom, (&lp, &l)) in log_prior.iter().zip(losses).enumerate() {
        if lp == T::neg_infinity() {
            continue;
        }
        if l.is_finite() {
            min_loss = min_loss.min(l);
        } else if !(allow_pos_inf && l == T::infinity()) {
            return Err(Error::NonFiniteLoss { atom, datum: None, value: l.as_f64() });
        }
    }
    if min_loss == T::infinity() {
        return Err(Error::AllInfeasible);
    }
    let eta = eta.value();
    let tilted: Vec<T> = log_prior
        .iter()
        .zip(losses)
        .map(|(&lp, &l)| {
            if lp == T::neg_infinity() || !l.is_finite() {
                T::neg_infinity()
            } else {
                lp - eta * (l - min_loss)
            }
        })
        .collect();
    let anchored = logsumexp(&tilted).min(T::zero());
    let log_weights = normalize_log_weights(&tilted)?;
    let posterior = Distribution::from_normalized(prior.grid().clone(), log_weights)?;
    Ok(GibbsResult { posterior, log_normalizer: anchored - eta * min_loss, anchored_log_normalizer: anchored })
}

/// Updates block by block, feeding each posterior in as the next prior.
///
/// The returned `log_normalizer` is the sum of the per-stage log normalizers
/// (which equals the one-shot value), and the anchored value is taken relative
/// to the minimum of the summed losses.
pub fn sequential_update<T: Scalar>(
    prior: &Distribution<T>,
    loss_blocks: &[Vec<T>],
    eta: Temperature<T>,
) -> Result<GibbsResult<T>> {
    let mut current = prior.clone();
    let mut log_normalizer = T::zero();
    let mut total = vec![T::zero(); prior.len()];
    for (step, block) in loss_blocks.iter().enumerate() {
        let stage = gibbs_update(&current, block, eta).map_err(|e| Error::at_step(step, e))?;
        log_normalizer = log_normalizer + stage.log_normalizer;
        current = stage.posterior;
        for (acc, &v) in total.iter_mut().zip(block) {
            *acc = *acc + v;
        }
    }
    let min_total = prior
        .support()
        .map(|i| total[i])
        .fold(T::infinity(), T::min);
    let anchored = if loss_blocks.is_empty() {
        T::zero()
    } else {
        (log_normalizer + eta.value() * min_total).min(T::zero())
    };
    Ok(GibbsResult { posterior: current, log_normalizer, anchored_log_normalizer: anchored })
}

/// Adds the data-only constant `c` to every atom's loss.
///
/// Composed with [`gibbs_update`] this leaves the posterior unchanged and
/// multiplies `Z` by `exp(-η c)`.
pub fn apply_data_shift<T: Scalar>(losses: &[T], c: T) -> Vec<T> {
    losses.iter().map(|&l| l + c).collect()
}

/// Rescales the loss by `a > 0` and the temperature by `1 / a`, returning
/// `(a L, η / a)`. The product `η L` and hence the update are unchanged.
pub fn apply_loss_scaling<T: Scalar>(losses: &[T], eta: Temperature<T>, a: T) -> Result<(Vec<T>, Temperature<T>)> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("loss scale must be finite and > 0, got {}", a.as_f64())));
    }
    let scaled = losses.iter().map(|&l| a * l).collect();
    Ok((scaled, Temperature::new(eta.value() / a)?))
}
