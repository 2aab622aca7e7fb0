//! Per-datum loss oracles `l(theta; x)` and a small catalog of standard losses.
//!
//! Losses are evaluated at arbitrary real `theta`, not only at grid atoms, so
//! the same oracle serves both grid updates and calibration.

use crate::error::{Error, Result};
use crate::grid::{Dataset, ParamGrid};
use crate::scalar::Scalar;

/// A loss `l(theta; x)` with optional derivative oracles in `theta`.
pub trait LossModel<T: Scalar> {
    fn loss(&self, theta: &[T], x: &[T]) -> T;

    /// Gradient in `theta`, if available.
    fn gradient(&self, _theta: &[T], _x: &[T]) -> Option<Vec<T>> {
        None
    }

    /// Hessian in `theta`, if available.
    fn hessian(&self, _theta: &[T], _x: &[T]) -> Option<Vec<Vec<T>>> {
        None
    }

    fn name(&self) -> String {
        "custom".to_string()
    }
}

impl<T: Scalar, L: LossModel<T> + ?Sized> LossModel<T> for &L {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        (**self).loss(theta, x)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(theta, x)
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        (**self).hessian(theta, x)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<T: Scalar, L: LossModel<T> + ?Sized> LossModel<T> for Box<L> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        (**self).loss(theta, x)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(theta, x)
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        (**self).hessian(theta, x)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Per-atom losses of a single datum. Errors on any non-finite value.
pub fn datum_losses<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    grid: &ParamGrid<T>,
    x: &[T],
    datum: usize,
) -> Result<Vec<T>> {
    grid.atoms()
        .iter()
        .enumerate()
        .map(|(atom, theta)| {
            let v = loss.loss(theta, x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteLoss { atom, datum: Some(datum), value: v.as_f64() })
            }
        })
        .collect()
}

/// Cumulative loss `L_n(theta_i) = sum_t l(theta_i; x_t)` on every atom.
pub fn cumulative_losses<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    grid: &ParamGrid<T>,
    data: &Dataset<T>,
) -> Result<Vec<T>> {
    let mut total = vec![T::zero(); grid.len()];
    for (t, x) in data.records().iter().enumerate() {
        let row = datum_losses(loss, grid, x, t)?;
        for (acc, v) in total.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    Ok(total)
}

/// Central finite-difference step `1e-5 * (1 + |theta_k|)`.
fn fd_step<T: Scalar>(v: T) -> T {
    T::lit(1e-5) * (T::one() + v.abs())
}

/// Hessian by central differences of the gradient oracle.
pub fn finite_difference_hessian<T: Scalar, L: LossModel<T> + ?Sized>(
    loss: &L,
    theta: &[T],
    x: &[T],
) -> Result<Vec<Vec<T>>> {
    let d = theta.len();
    let mut h = vec![vec![T::zero(); d]; d];
    let two = T::lit(2.0);
    for k in 0..d {
        let step = fd_step(theta[k]);
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[k] = plus[k] + step;
        minus[k] = minus[k] - step;
        let gp = loss.gradient(&plus, x).ok_or(Error::MissingOracle("gradient"))?;
        let gm = loss.gradient(&minus, x).ok_or(Error::MissingOracle("gradient"))?;
        for j in 0..d {
            h[j][k] = (gp[j] - gm[j]) / (two * step);
        }
    }
    // symmetrize
    for j in 0..d {
        for k in (j + 1)..d {
            let avg = (h[j][k] + h[k][j]) / two;
            h[j][k] = avg;
            h[k][j] = avg;
        }
    }
    Ok(h)
}

/// Largest absolute discrepancy between the gradient oracle and central
/// differences of the loss.
pub fn gradient_check<T: Scalar, L: LossModel<T> + ?Sized>(loss: &L, theta: &[T], x: &[T]) -> Result<T> {
    let g = loss.gradient(theta, x).ok_or(Error::MissingOracle("gradient"))?;
    let two = T::lit(2.0);
    let mut worst = T::zero();
    for k in 0..theta.len() {
        let step = fd_step(theta[k]);
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[k] = plus[k] + step;
        minus[k] = minus[k] - step;
        let fd = (loss.loss(&plus, x) - loss.loss(&minus, x)) / (two * step);
        worst = worst.max((fd - g[k]).abs());
    }
    Ok(worst)
}

/// Gaussian negative log-likelihood with known scale:
/// `(y - theta)^2 / (2 sigma^2) + ln(sigma sqrt(2 pi))`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLogLik<T> {
    pub sigma: T,
}

impl<T: Scalar> LossModel<T> for GaussianLogLik<T> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let r = (x[0] - theta[0]) / self.sigma;
        r * r * T::lit(0.5) + (self.sigma * (T::TAU()).sqrt()).ln()
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        Some(vec![(theta[0] - x[0]) / (self.sigma * self.sigma)])
    }
    fn hessian(&self, _theta: &[T], _x: &[T]) -> Option<Vec<Vec<T>>> {
        Some(vec![vec![T::one() / (self.sigma * self.sigma)]])
    }
    fn name(&self) -> String {
        "gaussian-loglik".into()
    }
}

/// Criterion loss for a scale parameter: `y^2 / (2 sigma^2)`.
///
/// Not a log-likelihood: its `x`-normalizer grows linearly in `sigma`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianScale;

impl<T: Scalar> LossModel<T> for GaussianScale {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let s = theta[0];
        if !(s > T::zero()) {
            return T::nan();
        }
        x[0] * x[0] / (T::lit(2.0) * s * s)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        let s = theta[0];
        Some(vec![-x[0] * x[0] / (s * s * s)])
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        let s = theta[0];
        Some(vec![vec![T::lit(3.0) * x[0] * x[0] / (s * s * s * s)]])
    }
    fn name(&self) -> String {
        "gaussian-scale".into()
    }
}

/// Bernoulli negative log-likelihood `-x ln p - (1 - x) ln(1 - p)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BernoulliLogLik;

impl<T: Scalar> LossModel<T> for BernoulliLogLik {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let p = theta[0];
        let y = x[0];
        // 0 * ln 0 terms are dropped so boundary atoms stay finite where possible
        let mut v = T::zero();
        if y != T::zero() {
            v = v - y * p.ln();
        }
        if y != T::one() {
            v = v - (T::one() - y) * (T::one() - p).ln();
        }
        v
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        let (p, y) = (theta[0], x[0]);
        Some(vec![-y / p + (T::one() - y) / (T::one() - p)])
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        let (p, y) = (theta[0], x[0]);
        let q = T::one() - p;
        Some(vec![vec![y / (p * p) + (T::one() - y) / (q * q)]])
    }
    fn name(&self) -> String {
        "bernoulli-loglik".into()
    }
}

/// Squared error `(x - theta)^2 / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl<T: Scalar> LossModel<T> for SquaredLoss {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let r = x[0] - theta[0];
        r * r * T::lit(0.5)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        Some(vec![theta[0] - x[0]])
    }
    fn hessian(&self, _theta: &[T], _x: &[T]) -> Option<Vec<Vec<T>>> {
        Some(vec![vec![T::one()]])
    }
    fn name(&self) -> String {
        "squared".into()
    }
}

/// Least squares for a linear predictor: records are `(z_1, .., z_d, y)` and
/// the loss is `(y - theta . z)^2 / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearSquared;

impl<T: Scalar> LossModel<T> for LinearSquared {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let r = residual(theta, x);
        r * r * T::lit(0.5)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        let r = residual(theta, x);
        Some(x[..theta.len()].iter().map(|&z| -r * z).collect())
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        let z = &x[..theta.len()];
        Some(z.iter().map(|&a| z.iter().map(|&b| a * b).collect()).collect())
    }
    fn name(&self) -> String {
        "linear-squared".into()
    }
}

fn residual<T: Scalar>(theta: &[T], x: &[T]) -> T {
    let d = theta.len();
    let fit: T = theta.iter().zip(&x[..d]).map(|(&a, &b)| a * b).sum();
    x[d] - fit
}

/// Check (pinball) loss for the `tau` quantile. No derivative oracles, so
/// calibration falls back to a grid search.
#[derive(Debug, Clone, Copy)]
pub struct CheckLoss<T> {
    pub tau: T,
}

impl<T: Scalar> LossModel<T> for CheckLoss<T> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        let u = x[0] - theta[0];
        if u >= T::zero() {
            self.tau * u
        } else {
            (self.tau - T::one()) * u
        }
    }
    fn name(&self) -> String {
        "check".into()
    }
}

/// `l(theta; x) + c(x)`: a data-only shift. Derivatives in `theta` are unchanged.
pub struct Shifted<L, F> {
    pub inner: L,
    pub shift: F,
}

impl<T: Scalar, L: LossModel<T>, F: Fn(&[T]) -> T> LossModel<T> for Shifted<L, F> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        self.inner.loss(theta, x) + (self.shift)(x)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        self.inner.gradient(theta, x)
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        self.inner.hessian(theta, x)
    }
    fn name(&self) -> String {
        format!("shifted({})", self.inner.name())
    }
}

/// `a * l(theta; x)` for a fixed `a > 0`.
pub struct Scaled<L, T> {
    pub inner: L,
    pub factor: T,
}

impl<T: Scalar, L: LossModel<T>> LossModel<T> for Scaled<L, T> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        self.factor * self.inner.loss(theta, x)
    }
    fn gradient(&self, theta: &[T], x: &[T]) -> Option<Vec<T>> {
        self.inner.gradient(theta, x).map(|g| g.into_iter().map(|v| v * self.factor).collect())
    }
    fn hessian(&self, theta: &[T], x: &[T]) -> Option<Vec<Vec<T>>> {
        self.inner
            .hessian(theta, x)
            .map(|h| h.into_iter().map(|row| row.into_iter().map(|v| v * self.factor).collect()).collect())
    }
    fn name(&self) -> String {
        format!("scaled({})", self.inner.name())
    }
}

/// Loss given by a closure, without derivative oracles.
pub struct FnLoss<F> {
    pub name: String,
    pub f: F,
}

impl<T: Scalar, F: Fn(&[T], &[T]) -> T> LossModel<T> for FnLoss<F> {
    fn loss(&self, theta: &[T], x: &[T]) -> T {
        (self.f)(theta, x)
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}
