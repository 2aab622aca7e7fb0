//! Finite parameter grids, sample-space quadrature grids, datasets and the
//! temperature newtype.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered, finite set of parameter (or action) atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ParamGrid<T> {
    atoms: Vec<Vec<T>>,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> ParamGrid<T> {
    /// Builds a grid, checking that it is nonempty, of uniform dimension and
    /// free of duplicate atoms.
    pub fn new(atoms: Vec<Vec<T>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("parameter grid"));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { index: 0, expected: 1, got: 0 });
        }
        for (index, a) in atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::DimensionMismatch { index, expected: dim, got: a.len() });
            }
            if let Some(&v) = a.iter().find(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!(
                    "atom {index} has coordinate {}",
                    v.as_f64()
                )));
            }
        }
        // Sort indices lexicographically and compare neighbours.
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| lex_cmp(&atoms[i], &atoms[j]).then(i.cmp(&j)));
        for w in order.windows(2) {
            if atoms[w[0]] == atoms[w[1]] {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::DuplicateAtom { first, second });
            }
        }
        Ok(Self { atoms, labels: None })
    }

    /// One-dimensional grid from scalar atoms.
    pub fn from_scalars(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// `num` evenly spaced one-dimensional atoms on `[start, stop]`.
    pub fn linspace(start: T, stop: T, num: usize) -> Result<Self> {
        if num == 0 {
            return Err(Error::Empty("parameter grid"));
        }
        if num == 1 {
            return Self::from_scalars(&[start]);
        }
        let step = (stop - start) / T::from_usize_lossy(num - 1);
        let values: Vec<T> = (0..num)
            .map(|i| if i + 1 == num { stop } else { start + step * T::from_usize_lossy(i) })
            .collect();
        Self::from_scalars(&values)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.atoms.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: self.atoms.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atom(&self, i: usize) -> &[T] {
        &self.atoms[i]
    }

    pub fn atoms(&self) -> &[Vec<T>] {
        &self.atoms
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display label for atom `i`, falling back to its coordinates.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => {
                let coords: Vec<String> = self.atoms[i].iter().map(|v| v.to_string()).collect();
                coords.join(";")
            }
        }
    }

    /// Cartesian product grid; atom `(i, j)` sits at index `i * other.len() + j`.
    pub fn product(&self, other: &ParamGrid<T>) -> ParamGrid<T> {
        let mut atoms = Vec::with_capacity(self.len() * other.len());
        for a in &self.atoms {
            for b in &other.atoms {
                let mut v = a.clone();
                v.extend_from_slice(b);
                atoms.push(v);
            }
        }
        ParamGrid { atoms, labels: None }
    }
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Learning rate / temperature `eta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "f64", into = "f64")]
pub struct Temperature<T: Scalar>(T);

impl<T: Scalar> Temperature<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta.is_finite() && eta > T::zero() {
            Ok(Self(eta))
        } else {
            Err(Error::InvalidTemperature(eta.as_f64()))
        }
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }
}

impl<T: Scalar> TryFrom<f64> for Temperature<T> {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(T::lit(v))
    }
}

impl<T: Scalar> From<Temperature<T>> for f64 {
    fn from(t: Temperature<T>) -> f64 {
        t.0.as_f64()
    }
}

/// How a [`SampleGrid`] can estimate its own integration error.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadratureRule<T> {
    /// Counting measure on a finite sample space: sums are exact.
    Exact,
    /// Composite trapezoid on an even number of equal intervals. The coarse
    /// weights describe the same rule at half resolution (every other node;
    /// zero on the skipped ones) and drive the Richardson error estimate.
    Trapezoid { coarse_weights: Vec<T> },
    /// User supplied nodes and weights without an error model.
    Custom,
}

/// Quadrature nodes and positive weights on the sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid<T> {
    nodes: Vec<Vec<T>>,
    weights: Vec<T>,
    rule: QuadratureRule<T>,
}

impl<T: Scalar> SampleGrid<T> {
    pub fn new(nodes: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        Self::validated(nodes, weights, QuadratureRule::Custom)
    }

    /// Counting measure on the given sample points (unit weights, exact sums).
    pub fn counting(nodes: Vec<Vec<T>>) -> Result<Self> {
        let weights = vec![T::one(); nodes.len()];
        Self::validated(nodes, weights, QuadratureRule::Exact)
    }

    /// Composite trapezoid rule on `[lo, hi]` with spacing close to `step`.
    ///
    /// The interval count is rounded to the nearest even number so that the
    /// half-resolution rule used for the error estimate shares the endpoints.
    pub fn trapezoid(lo: T, hi: T, step: T) -> Result<Self> {
        if !(hi > lo) || !(step > T::zero()) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument("trapezoid grid needs lo < hi and step > 0".into()));
        }
        let raw = ((hi - lo) / step).round().to_usize().unwrap_or(0).max(2);
        let intervals = raw + raw % 2;
        let h = (hi - lo) / T::from_usize_lossy(intervals);
        let half = T::lit(0.5);
        let nodes: Vec<Vec<T>> = (0..=intervals)
            .map(|i| vec![if i == intervals { hi } else { lo + h * T::from_usize_lossy(i) }])
            .collect();
        let weights: Vec<T> = (0..=intervals)
            .map(|i| if i == 0 || i == intervals { h * half } else { h })
            .collect();
        let coarse_weights: Vec<T> = (0..=intervals)
            .map(|i| {
                if i % 2 == 1 {
                    T::zero()
                } else if i == 0 || i == intervals {
                    h
                } else {
                    h + h
                }
            })
            .collect();
        Self::validated(nodes, weights, QuadratureRule::Trapezoid { coarse_weights })
    }

    fn validated(nodes: Vec<Vec<T>>, weights: Vec<T>, rule: QuadratureRule<T>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("sample grid"));
        }
        if nodes.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "quadrature weights",
                expected: nodes.len(),
                got: weights.len(),
            });
        }
        if let Some((index, &value)) =
            weights.iter().enumerate().find(|(_, w)| !(**w > T::zero() && w.is_finite()))
        {
            return Err(Error::InvalidQuadratureWeight { index, value: value.as_f64() });
        }
        Ok(Self { nodes, weights, rule })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<T>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    /// Same nodes, weights multiplied pointwise by `factor(node)`.
    /// Used to change the dominating measure; the error model is dropped.
    pub fn reweighted(&self, factor: impl Fn(&[T]) -> T) -> Result<Self> {
        let weights = self.nodes.iter().zip(&self.weights).map(|(x, &w)| w * factor(x)).collect();
        Self::validated(self.nodes.clone(), weights, QuadratureRule::Custom)
    }
}

/// Ordered observations. Order is significant for prequential evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    records: Vec<Vec<T>>,
    outcome_index: usize,
}

impl<T: Scalar> Dataset<T> {
    /// `outcome_index` selects the predicted component `y_t` of each record.
    pub fn new(records: Vec<Vec<T>>, outcome_index: usize) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if outcome_index >= r.len() {
                return Err(Error::InvalidArgument(format!(
                    "record {i} has {} components; outcome index is {outcome_index}",
                    r.len()
                )));
            }
        }
        Ok(Self { records, outcome_index })
    }

    /// Scalar observations, each record being `[y]`.
    pub fn from_scalars(values: &[T]) -> Self {
        Self { records: values.iter().map(|&v| vec![v]).collect(), outcome_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Vec<T>] {
        &self.records
    }

    pub fn record(&self, t: usize) -> &[T] {
        &self.records[t]
    }

    pub fn outcome_index(&self) -> usize {
        self.outcome_index
    }

    pub fn outcome(&self, t: usize) -> T {
        self.records[t][self.outcome_index]
    }

    /// Dataset with every record transformed by `f` (same outcome index).
    pub fn map_records(&self, f: impl Fn(&[T]) -> Vec<T>) -> Result<Self> {
        Self::new(self.records.iter().map(|r| f(r)).collect(), self.outcome_index)
    }
}
