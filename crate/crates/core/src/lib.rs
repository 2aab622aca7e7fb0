//! Generalized-Bayes (Gibbs) posteriors on finite parameter grids.
//!
//! The crate is generic over the floating-point type through [`Scalar`]
//! (implemented for `f64` and `f32`); the aliases at the bottom of this file
//! fix the common choices.
//!
//! ```
//! use std::sync::Arc;
//! use gbayes::{gibbs_update, Distribution, ParamGrid, Temperature};
//!
//! let grid = Arc::new(ParamGrid::from_scalars(&[0.0, 1.0]).unwrap());
//! let prior = Distribution::uniform(grid);
//! let r = gibbs_update(&prior, &[0.0, 3f64.ln()], Temperature::new(1.0).unwrap()).unwrap();
//! assert!((r.posterior.weight(0) - 0.75).abs() < 1e-12);
//! ```

pub mod bayesianity;
pub mod calibration;
pub mod error;
pub mod evidence;
pub mod gibbs;
pub mod grid;
pub mod linalg;
pub mod loss;
pub mod quasiposterior;
pub mod scalar;
pub mod scoring;
pub mod simplex;
pub mod variational;

pub use bayesianity::{extract_likelihood, partition_function_curve, DiagnosticConfig, DiagnosticReport, Verdict};
pub use calibration::{info_matching_eta, loss_minimizer, safebayes_select, CalibrationReport, SafeBayesReport};
pub use error::{Error, Result};
pub use evidence::{anchored_evidence, generalized_bayes_factor, shifted_pair_report, EvidenceRecord};
pub use gibbs::{constrained_gibbs_update, gibbs_update, sequential_update, GibbsResult};
pub use grid::{Dataset, ParamGrid, QuadratureRule, SampleGrid, Temperature};
pub use loss::LossModel;
pub use quasiposterior::{convention_offset_check, el_quasi_posterior, el_weights, et_weights, MomentModel, WeightSolution};
pub use scalar::Scalar;
pub use scoring::{crps, delta_lpd, induced_predictive, log_score, prequential_score, PredictiveFamily, ScoreTrace, ScoringRule};
pub use simplex::{logsumexp, normalize_log_weights, total_variation, Distribution};
pub use variational::{objective, product_additivity_gap, solve_penalized, vnm_optimal_rule, DivergenceSpec, SolveReport};

pub type ParamGridF64 = ParamGrid<f64>;
pub type DistributionF64 = Distribution<f64>;
pub type TemperatureF64 = Temperature<f64>;
pub type SampleGridF64 = SampleGrid<f64>;
pub type DatasetF64 = Dataset<f64>;
pub type PredictiveFamilyF64 = PredictiveFamily<f64>;

pub type ParamGridF32 = ParamGrid<f32>;
pub type DistributionF32 = Distribution<f32>;
pub type TemperatureF32 = Temperature<f32>;
pub type SampleGridF32 = SampleGrid<f32>;
pub type DatasetF32 = Dataset<f32>;
pub type PredictiveFamilyF32 = PredictiveFamily<f32>;
