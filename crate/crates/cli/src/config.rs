//! JSON run configuration. The schema is described in `docs/config.md`.

use std::path::Path;
use std::sync::Arc;

use dpplearn::kernels::{
    GaussianQualitySimilarity, GaussianSimilarity, GroundSet, KernelFamily, PolynomialKernel,
};
use dpplearn::likelihood::{Cardinality, GaussianLayout, ModelKind, ModelSpec, Prior};
use dpplearn::mle::AscentOptions;
use dpplearn::sampling::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Version of the configuration schema this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DiscreteDpp,
    DiscreteKdpp,
    ContinuousDpp,
    ContinuousKdpp,
    ConditionalKdpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    GaussianQualitySimilarity,
    GaussianSimilarity,
    Polynomial,
    Feature,
}

/// Regular lattice with inclusive end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_match_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Sample size of k-DPP families.
    #[serde(default)]
    pub k: Option<usize>,
    /// Kernel of discrete families.
    #[serde(default)]
    pub kernel: KernelKind,
    /// Ground set of discrete spatial families.
    #[serde(default)]
    pub ground: Option<LatticeConfig>,
    /// Dimension of continuous families.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Continuous families share `rho`, `sigma` across dimensions.
    #[serde(default = "default_true")]
    pub isotropic: bool,
    /// One prior per parameter; defaults to `Inv-Gamma(0.001, 0.001)` on
    /// positive parameters and flat on real ones.
    #[serde(default)]
    pub priors: Option<Vec<Prior>>,
    /// Points outside this box are rejected when data are loaded.
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    /// L2-normalize feature vectors of feature kernels.
    #[serde(default = "default_true")]
    pub normalize_features: bool,
    /// Coordinate tolerance when matching data points to ground items.
    #[serde(default = "default_match_tolerance")]
    pub match_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Parameters of the generating model, in model parameter order.
    pub truth: Vec<f64>,
    pub samples: usize,
    /// Discretization of continuous families.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn default_init_spread() -> f64 {
    1.0
}

fn default_max_steps() -> usize {
    dpplearn::mcmc::DEFAULT_MAX_STEPS
}

fn default_max_eigenvalues() -> usize {
    dpplearn::mcmc::DEFAULT_MAX_EIGENVALUES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Starting values: one vector per chain, or a single vector that every
    /// chain perturbs.
    #[serde(default)]
    pub init: Vec<Vec<f64>>,
    /// Half-width of the uniform perturbation of a shared start, on the
    /// sampling scale (log scale for positive parameters).
    #[serde(default = "default_init_spread")]
    pub init_spread: f64,
    #[serde(default)]
    pub proposal_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub slice_width: Option<Vec<f64>>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_max_eigenvalues")]
    pub max_eigenvalues: usize,
    #[serde(default)]
    pub mle: AscentOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init: Vec::new(),
            init_spread: default_init_spread(),
            proposal_scale: None,
            slice_width: None,
            max_steps: default_max_steps(),
            max_eigenvalues: default_max_eigenvalues(),
            mle: AscentOptions::default(),
        }
    }
}

fn default_orders() -> Vec<u32> {
    vec![0, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    #[serde(default = "default_max_eigenvalues")]
    pub max_eigenvalues: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            max_eigenvalues: default_max_eigenvalues(),
        }
    }
}

fn default_posterior_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Posterior draws averaged in the posterior-averaged likelihood.
    #[serde(default = "default_posterior_draws")]
    pub posterior_draws: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            posterior_draws: default_posterior_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
}

impl Config {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        match m.family {
            Family::DiscreteKdpp | Family::ContinuousKdpp => match m.k {
                Some(k) if k >= 1 => {}
                _ => return Err(CliError::Config("k-DPP families need k >= 1".into())),
            },
            _ => {}
        }
        match m.family {
            Family::DiscreteDpp | Family::DiscreteKdpp if m.kernel != KernelKind::Feature && m.ground.is_none() => {
                return Err(CliError::Config("discrete spatial families need a `ground` lattice".into()))
            }
            Family::ContinuousDpp | Family::ContinuousKdpp if m.dim.is_none_or(|d| d == 0) => {
                return Err(CliError::Config("continuous families need `dim` >= 1".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn cardinality(&self) -> Cardinality {
        match (self.model.family, self.model.k) {
            (Family::DiscreteKdpp | Family::ContinuousKdpp, Some(k)) => Cardinality::Fixed(k),
            _ => Cardinality::Free,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.model.family, Family::ContinuousDpp | Family::ContinuousKdpp)
    }

    /// Spatial ground set of discrete families.
    pub fn ground_set(&self) -> CliResult<Arc<GroundSet>> {
        let g = self
            .model
            .ground
            .as_ref()
            .ok_or_else(|| CliError::Config("model has no `ground` lattice".into()))?;
        Ok(Arc::new(GroundSet::grid(&g.lower, &g.upper, &g.points)?))
    }

    /// Kernel family over the spatial ground set.
    pub fn spatial_family(&self) -> CliResult<Arc<dyn KernelFamily>> {
        let g = self.ground_set()?;
        Ok(match self.model.kernel {
            KernelKind::GaussianQualitySimilarity => Arc::new(GaussianQualitySimilarity::new(g)),
            KernelKind::GaussianSimilarity => Arc::new(GaussianSimilarity::new(g)),
            KernelKind::Polynomial => Arc::new(PolynomialKernel::new(g)),
            KernelKind::Feature => {
                return Err(CliError::Config(
                    "feature kernels are built from a feature file (image-diversity)".into(),
                ))
            }
        })
    }

    /// Model specification; discrete families use `families` when given and
    /// the spatial ground set otherwise.
    pub fn model_spec(&self, families: Option<Vec<Arc<dyn KernelFamily>>>) -> CliResult<ModelSpec> {
        let kind = match self.model.family {
            Family::DiscreteDpp | Family::DiscreteKdpp => ModelKind::Discrete {
                families: match families {
                    Some(f) => f,
                    None => vec![self.spatial_family()?],
                },
                cardinality: self.cardinality(),
            },
            Family::ContinuousDpp | Family::ContinuousKdpp => ModelKind::Continuous {
                layout: GaussianLayout {
                    dim: self.model.dim.unwrap_or(0),
                    isotropic: self.model.isotropic,
                },
                cardinality: self.cardinality(),
            },
            Family::ConditionalKdpp => ModelKind::Conditional {
                families: families.ok_or_else(|| {
                    CliError::Config("conditional models are built from a feature file (image-diversity)".into())
                })?,
            },
        };
        let spec = ModelSpec::new(kind)?;
        match &self.model.priors {
            Some(p) => Ok(spec.with_priors(p.clone())?),
            None => Ok(spec),
        }
    }
}
