//! Log-space probability vectors on a [`ParamGrid`].
//!
//! Every weight is stored as a natural logarithm; zero-probability atoms are
//! kept as `-inf` so grids stay aligned across operations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::scalar::Scalar;

/// `log(sum(exp(v)))`, reduced in ascending index order.
///
/// Returns `-inf` for an empty or all `-inf` input and `+inf` if any entry is
/// `+inf`.
pub fn logsumexp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max == T::infinity() {
        return max;
    }
    let mut sum = T::zero();
    for &v in values {
        sum = sum + (v - max).exp();
    }
    max + sum.ln()
}

/// Normalizes raw log-weights so that their exponentials sum to one.
///
/// The result is computed as `(v_i - max) - ln(sum exp(v_j - max))`, so adding
/// a constant to every input leaves the output bit-identical whenever the
/// differences `v_i - max` are themselves exact.
pub fn normalize_log_weights<T: Scalar>(raw: &[T]) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Err(Error::Empty("log-weights"));
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| v.is_nan() || **v == T::infinity()) {
        return Err(Error::InvalidWeight { index, value: value.as_f64() });
    }
    let max = raw.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Err(Error::DegenerateWeights);
    }
    let centered: Vec<T> = raw.iter().map(|&v| v - max).collect();
    let mut sum = T::zero();
    for &c in &centered {
        sum = sum + c.exp();
    }
    let log_sum = sum.ln();
    Ok(centered.into_iter().map(|c| c - log_sum).collect())
}

/// Probability weights on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T: Scalar> {
    grid: Arc<ParamGrid<T>>,
    log_weights: Vec<T>,
}

impl<T: Scalar> Distribution<T> {
    pub fn uniform(grid: Arc<ParamGrid<T>>) -> Self {
        let lw = -T::from_usize_lossy(grid.len()).ln();
        let log_weights = vec![lw; grid.len()];
        Self { grid, log_weights }
    }

    /// Normalizes arbitrary (unnormalized) log-weights onto the grid.
    pub fn from_log_weights(grid: Arc<ParamGrid<T>>, raw: &[T]) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::LengthMismatch { what: "log-weights", expected: grid.len(), got: raw.len() });
        }
        let log_weights = normalize_log_weights(raw)?;
        Ok(Self { grid, log_weights })
    }

    /// Normalizes nonnegative weights onto the grid.
    pub fn from_weights(grid: Arc<ParamGrid<T>>, weights: &[T]) -> Result<Self> {
        if let Some((index, &value)) =
            weights.iter().enumerate().find(|(_, w)| !(**w >= T::zero()) || !w.is_finite())
        {
            return Err(Error::InvalidWeight { index, value: value.as_f64() });
        }
        let raw: Vec<T> = weights.iter().map(|w| w.ln()).collect();
        Self::from_log_weights(grid, &raw)
    }

    pub fn point_mass(grid: Arc<ParamGrid<T>>, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::AtomOutOfRange { index, len: grid.len() });
        }
        let mut log_weights = vec![T::neg_infinity(); grid.len()];
        log_weights[index] = T::zero();
        Ok(Self { grid, log_weights })
    }

    /// Wraps log-weights that the caller guarantees are already normalized.
    /// The simplex invariant is re-checked.
    pub(crate) fn from_normalized(grid: Arc<ParamGrid<T>>, log_weights: Vec<T>) -> Result<Self> {
        let d = Self { grid, log_weights };
        d.validate()?;
        Ok(d)
    }

    /// Checks the simplex invariant at [`Scalar::simplex_tol`].
    pub fn validate(&self) -> Result<()> {
        if self.log_weights.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                what: "log-weights",
                expected: self.grid.len(),
                got: self.log_weights.len(),
            });
        }
        if let Some((index, &value)) =
            self.log_weights.iter().enumerate().find(|(_, v)| v.is_nan() || **v == T::infinity())
        {
            return Err(Error::InvalidWeight { index, value: value.as_f64() });
        }
        let total: T = self.log_weights.iter().map(|v| v.exp()).sum();
        let deviation = (total - T::one()).abs();
        if deviation > T::simplex_tol() {
            return Err(Error::NotNormalized { deviation: deviation.as_f64() });
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<ParamGrid<T>> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<T> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }

    pub fn weight(&self, i: usize) -> T {
        self.log_weights[i].exp()
    }

    /// Indices of atoms with positive probability.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.log_weights.iter().enumerate().filter(|(_, v)| **v > T::neg_infinity()).map(|(i, _)| i)
    }

    /// True if both distributions index the same grid (same allocation or
    /// equal atoms).
    pub fn same_grid(&self, other: &Distribution<T>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `sum_i q_i f_i` with the convention `0 * f = 0` for any `f`.
    pub fn expectation(&self, values: &[T]) -> Result<T> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch { what: "expectation values", expected: self.len(), got: values.len() });
        }
        Ok(self
            .log_weights
            .iter()
            .zip(values)
            .filter(|(lw, _)| **lw > T::neg_infinity())
            .map(|(lw, &v)| lw.exp() * v)
            .sum())
    }

    /// Product measure on the product grid (see [`ParamGrid::product`]).
    pub fn product(&self, other: &Distribution<T>) -> Distribution<T> {
        let grid = Arc::new(self.grid.product(&other.grid));
        let mut log_weights = Vec::with_capacity(grid.len());
        for &a in &self.log_weights {
            for &b in &other.log_weights {
                log_weights.push(a + b);
            }
        }
        Distribution { grid, log_weights }
    }
}

/// Total variation distance `0.5 * sum |p_i - q_i|`.
pub fn total_variation<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T> {
    if !p.same_grid(q) {
        return Err(Error::GridMismatch);
    }
    let half = T::lit(0.5);
    let s: T = p.log_weights.iter().zip(&q.log_weights).map(|(a, b)| (a.exp() - b.exp()).abs()).sum();
    Ok(half * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Arc<ParamGrid<f64>> {
        Arc::new(ParamGrid::from_scalars(&[0.0, 1.0]).unwrap())
    }

    #[test]
    fn normalize_examples() {
        let h = 0.5_f64.ln();
        assert_eq!(normalize_log_weights(&[0.0, 0.0]).unwrap(), vec![h, h]);
        let v = normalize_log_weights(&[-1000.0, -1000.0]).unwrap();
        assert_eq!(v, vec![h, h]);
        let v = normalize_log_weights(&[3.0_f64.ln(), 0.0]).unwrap();
        assert!((v[0] - 0.75_f64.ln()).abs() < 1e-15);
        assert!((v[1] - 0.25_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_errors() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(normalize_log_weights(&[ninf, ninf]), Err(Error::DegenerateWeights));
        assert!(matches!(normalize_log_weights(&[0.0, f64::NAN]), Err(Error::InvalidWeight { index: 1, .. })));
        assert!(normalize_log_weights::<f64>(&[]).is_err());
        // -inf entries survive as zero-probability atoms
        let v = normalize_log_weights(&[ninf, 2.0]).unwrap();
        assert_eq!(v, vec![ninf, 0.0]);
    }

    #[test]
    fn logsumexp_edge_cases() {
        assert_eq!(logsumexp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 1.0]), 1.0);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn tv_examples() {
        let g = grid2();
        let u = Distribution::uniform(g.clone());
        assert_eq!(total_variation(&u, &u).unwrap(), 0.0);
        let a = Distribution::point_mass(g.clone(), 0).unwrap();
        let b = Distribution::point_mass(g.clone(), 1).unwrap();
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
        let p = Distribution::from_weights(g.clone(), &[0.75, 0.25]).unwrap();
        assert!((total_variation(&p, &u).unwrap() - 0.25).abs() < 1e-15);
        assert!((total_variation(&u, &p).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_rejects_other_grid() {
        let u = Distribution::uniform(grid2());
        let other = Distribution::uniform(Arc::new(ParamGrid::from_scalars(&[5.0, 6.0]).unwrap()));
        assert_eq!(total_variation(&u, &other), Err(Error::GridMismatch));
        // equal atoms in a separate allocation count as the same grid
        let twin = Distribution::uniform(grid2());
        assert!(total_variation(&u, &twin).is_ok());
    }

    #[test]
    fn validate_catches_unnormalized() {
        let d = Distribution { grid: grid2(), log_weights: vec![0.0, 0.0] };
        assert!(matches!(d.validate(), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn expectation_ignores_infinite_values_off_support() {
        let d = Distribution::point_mass(grid2(), 0).unwrap();
        assert_eq!(d.expectation(&[2.0, f64::INFINITY]).unwrap(), 2.0);
    }

    #[test]
    fn product_of_uniforms_is_uniform() {
        let u = Distribution::uniform(grid2());
        let p = u.product(&u);
        assert_eq!(p.len(), 4);
        p.validate().unwrap();
        assert!(p.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn works_in_single_precision() {
        let v = normalize_log_weights(&[3.0_f32.ln(), 0.0]).unwrap();
        assert!((v[0].exp() - 0.75).abs() < 1e-6);
    }
}
