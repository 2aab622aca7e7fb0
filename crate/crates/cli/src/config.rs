//! Experiment configuration: one JSON document per run. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use gbayes::loss::{BernoulliLogLik, GaussianLogLik, GaussianScale, SquaredLoss};
use gbayes::quasiposterior::{el_losses, et_losses, MeanMoment, MeanVarianceMoment, MomentLosses};
use gbayes::{Dataset, Distribution, LossModel, ParamGrid, PredictiveFamily, SampleGrid, Temperature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution as _, Normal, StudentT};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub loss: Option<LossSpec>,
    /// Per-atom cumulative losses given directly.
    #[serde(default)]
    pub losses: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseSpec>,
    #[serde(default)]
    pub variational: Option<VariationalSpec>,
    #[serde(default)]
    pub additivity: Option<AdditivitySpec>,
    #[serde(default)]
    pub evidence: Option<EvidenceSpec>,
    #[serde(default)]
    pub score: Option<ScoreSpec>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSpec>,
    #[serde(default)]
    pub quasi: Option<QuasiSpec>,
    #[serde(default)]
    pub vnm: Option<VnmSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Values(Vec<f64>),
    Linspace { start: f64, stop: f64, num: usize },
    /// Multi-dimensional atoms.
    Atoms(Vec<Vec<f64>>),
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<ParamGrid<f64>>> {
        let g = match self {
            GridSpec::Values(v) => ParamGrid::from_scalars(v)?,
            GridSpec::Linspace { start, stop, num } => ParamGrid::linspace(*start, *stop, *num)?,
            GridSpec::Atoms(a) => ParamGrid::new(a.clone())?,
        };
        Ok(Arc::new(g))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    #[default]
    Uniform,
    Weights(Vec<f64>),
}

impl PriorSpec {
    pub fn build(&self, grid: Arc<ParamGrid<f64>>) -> Result<Distribution<f64>> {
        Ok(match self {
            PriorSpec::Uniform => Distribution::uniform(grid),
            PriorSpec::Weights(w) => Distribution::from_weights(grid, w)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSpec {
    #[default]
    Mean,
    MeanVariance,
}

fn one() -> f64 {
    1.0
}

/// The built-in loss catalog.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossSpec {
    GaussianLoglik {
        #[serde(default = "one")]
        sigma: f64,
    },
    GaussianScale,
    BernoulliLoglik,
    Squared,
    ElMoment {
        #[serde(default)]
        moment: MomentSpec,
        #[serde(default = "one")]
        scale: f64,
    },
    EtMoment {
        #[serde(default)]
        moment: MomentSpec,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl LossSpec {
    /// The per-datum oracle; moment criteria have none.
    pub fn per_datum(&self) -> Result<Box<dyn LossModel<f64>>> {
        Ok(match *self {
            LossSpec::GaussianLoglik { sigma } => {
                if !(sigma > 0.0) {
                    bail!("gaussian-loglik needs sigma > 0");
                }
                Box::new(GaussianLogLik { sigma })
            }
            LossSpec::GaussianScale => Box::new(GaussianScale),
            LossSpec::BernoulliLoglik => Box::new(BernoulliLogLik),
            LossSpec::Squared => Box::new(SquaredLoss),
            LossSpec::ElMoment { .. } | LossSpec::EtMoment { .. } => {
                bail!("moment losses are whole-sample criteria and have no per-datum form")
            }
        })
    }

    /// Cumulative per-atom losses on `grid`; infeasible moment atoms get `+inf`.
    pub fn cumulative(&self, grid: &ParamGrid<f64>, data: &Dataset<f64>) -> Result<MomentLosses<f64>> {
        let moment_losses = |moment: MomentSpec, scale: f64, el: bool| -> Result<MomentLosses<f64>> {
            let out = match (moment, el) {
                (MomentSpec::Mean, true) => el_losses(data, &MeanMoment, grid, scale)?,
                (MomentSpec::MeanVariance, true) => el_losses(data, &MeanVarianceMoment, grid, scale)?,
                (MomentSpec::Mean, false) => et_losses(data, &MeanMoment, grid, scale)?,
                (MomentSpec::MeanVariance, false) => et_losses(data, &MeanVarianceMoment, grid, scale)?,
            };
            Ok(out)
        };
        match *self {
            LossSpec::ElMoment { moment, scale } => moment_losses(moment, scale, true),
            LossSpec::EtMoment { moment, scale } => moment_losses(moment, scale, false),
            _ => {
                let loss = self.per_datum()?;
                let losses = gbayes::loss::cumulative_losses(loss.as_ref(), grid, data)?;
                Ok(MomentLosses { losses, infeasible_atoms: vec![], unconverged_atoms: vec![] })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Scalar observations.
    Inline(Vec<f64>),
    /// Multi-column records with the outcome column named.
    Records { rows: Vec<Vec<f64>>, outcome: usize },
    Csv {
        path: PathBuf,
        #[serde(default)]
        column: usize,
        #[serde(default = "yes")]
        has_header: bool,
    },
    Synthetic {
        generator: Generator,
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    StudentT { df: f64, loc: f64, scale: f64 },
}

impl DataSpec {
    /// `base` resolves relative CSV paths; `seed_override` replaces the
    /// configured seed of synthetic data.
    pub fn load(&self, base: &Path, seed_override: Option<u64>) -> Result<Dataset<f64>> {
        match self {
            DataSpec::Inline(v) => Ok(Dataset::from_scalars(v)),
            DataSpec::Records { rows, outcome } => Ok(Dataset::new(rows.clone(), *outcome)?),
            DataSpec::Csv { path, column, has_header } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let mut rdr = csv::ReaderBuilder::new()
                    .has_headers(*has_header)
                    .from_path(&full)
                    .with_context(|| format!("reading {}", full.display()))?;
                let mut values = Vec::new();
                for (i, rec) in rdr.records().enumerate() {
                    let rec = rec?;
                    let field = rec.get(*column).ok_or_else(|| anyhow!("row {} has no column {column}", i + 1))?;
                    values.push(field.trim().parse::<f64>().with_context(|| format!("row {}: {field:?}", i + 1))?);
                }
                Ok(Dataset::from_scalars(&values))
            }
            DataSpec::Synthetic { generator, n, seed } => {
                let seed = seed_override.or(*seed).ok_or_else(|| anyhow!("synthetic data requires a seed"))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values: Vec<f64> = match *generator {
                    Generator::Normal { mean, sd } => {
                        let d = Normal::new(mean, sd)?;
                        (0..*n).map(|_| d.sample(&mut rng)).collect()
                    }
                    Generator::Bernoulli { p } => {
                        let d = Bernoulli::new(p)?;
                        (0..*n).map(|_| if d.sample(&mut rng) { 1.0 } else { 0.0 }).collect()
                    }
                    Generator::StudentT { df, loc, scale } => {
                        let d = StudentT::new(df)?;
                        (0..*n).map(|_| loc + scale * d.sample(&mut rng)).collect()
                    }
                };
                Ok(Dataset::from_scalars(&values))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SampleGridSpec {
    Trapezoid { lo: f64, hi: f64, step: f64 },
    Counting(Vec<f64>),
}

impl SampleGridSpec {
    pub fn build(&self) -> Result<SampleGrid<f64>> {
        Ok(match self {
            SampleGridSpec::Trapezoid { lo, hi, step } => SampleGrid::trapezoid(*lo, *hi, *step)?,
            SampleGridSpec::Counting(v) => SampleGrid::counting(v.iter().map(|&x| vec![x]).collect())?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSpec {
    pub sample_grid: SampleGridSpec,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub error_margin: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalSpec {
    #[serde(default)]
    pub divergences: Option<Vec<String>>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditivitySpec {
    #[serde(default)]
    pub divergences: Option<Vec<String>>,
    #[serde(default)]
    pub q1: Option<Vec<f64>>,
    #[serde(default)]
    pub pi1: Option<Vec<f64>>,
    #[serde(default)]
    pub q2: Option<Vec<f64>>,
    #[serde(default)]
    pub pi2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceSpec {
    /// Data-only shift applied to the primary model.
    pub shift: f64,
    #[serde(default)]
    pub rival: Option<RivalSpec>,
}

/// A competing model for the Bayes-factor demonstration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RivalSpec {
    pub grid: GridSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    pub losses: Vec<f64>,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSpec {
    Log,
    Crps,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Bernoulli,
    Gaussian { sigma: f64, lo: f64, hi: f64, step: f64 },
}

impl FamilySpec {
    pub fn build(&self, grid: &ParamGrid<f64>) -> Result<PredictiveFamily<f64>> {
        Ok(match *self {
            FamilySpec::Bernoulli => PredictiveFamily::bernoulli(grid)?,
            FamilySpec::Gaussian { sigma, lo, hi, step } => PredictiveFamily::gaussian(grid, sigma, lo, hi, step)?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    pub loss: LossSpec,
    pub family: FamilySpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSpec {
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_rules")]
    pub rules: Vec<RuleSpec>,
}

fn default_rules() -> Vec<RuleSpec> {
    vec![RuleSpec::Log, RuleSpec::Crps]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSpec {
    InfoMatching,
    Safebayes,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub method: MethodSpec,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub eta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiSpec {
    #[serde(default)]
    pub moment: MomentSpec,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnmSpec {
    pub utility: Vec<f64>,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Arc<ParamGrid<f64>>> {
        self.grid.as_ref().ok_or_else(|| anyhow!("config is missing `grid`"))?.build()
    }

    pub fn prior(&self) -> Result<Distribution<f64>> {
        self.prior.build(self.grid()?)
    }

    pub fn eta(&self) -> Result<Temperature<f64>> {
        let v = self.eta.ok_or_else(|| anyhow!("config is missing `eta`"))?;
        Ok(Temperature::new(v)?)
    }

    pub fn loss(&self) -> Result<&LossSpec> {
        self.loss.as_ref().ok_or_else(|| anyhow!("config is missing `loss`"))
    }

    pub fn data(&self, base: &Path, seed: Option<u64>) -> Result<Dataset<f64>> {
        self.data.as_ref().ok_or_else(|| anyhow!("config is missing `data`"))?.load(base, seed)
    }
}
