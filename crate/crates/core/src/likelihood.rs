//! Log-likelihoods and log-posteriors of DPP and k-DPP models, exact and
//! bounded.
//!
//! For samples `A^1..A^T` the DPP log-likelihood is
//! `sum_t log det L_{A^t} - T log det(L + I)` and the k-DPP one replaces the
//! normalizer by `log e_k(lambda)`. Priors are inverse-gamma on every
//! positive parameter. The exact and bounded paths share the assembly of
//! prior, data term and normalizer, so a bounded evaluation whose
//! truncation is complete reproduces the exact value bit for bit.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conditional::{conditional_log_prob, ConditionalSample};
use crate::error::{DppError, Result};
use crate::kernels::{DiscreteKernel, GaussianTheta, KernelFamily, PointConfig, Transform};
use crate::linalg;
use crate::mcmc::{BoundedLogTarget, LogTarget, PosteriorBounds, Reparameterized, DEFAULT_MAX_EIGENVALUES};
use crate::spectral::{
    dpp_log_normalizer_bounds, kdpp_log_normalizer_bounds, EigenOracle, MatrixSpectrum, NormalizerBounds,
    TruncationState,
};
use crate::kernels::continuous::GaussianSpectrum;

/// `Inv-Gamma(shape, scale)` prior; the log-density drops its normalizing
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for InvGammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.001,
            scale: 0.001,
        }
    }
}

impl InvGammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        crate::error::check_positive("prior shape", shape)?;
        crate::error::check_positive("prior scale", scale)?;
        Ok(Self { shape, scale })
    }

    /// `-(shape + 1) log x - scale / x`, `-inf` for `x <= 0`.
    pub fn log_density(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        -(self.shape + 1.0) * x.ln() - self.scale / x
    }
}

/// Prior of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Prior {
    InvGamma(InvGammaPrior),
    /// Improper flat prior on the real line (for real-valued parameters
    /// such as a polynomial offset).
    Flat,
}

impl Prior {
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Prior::InvGamma(p) => p.log_density(x),
            Prior::Flat => {
                if x.is_finite() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn default_for(t: Transform) -> Self {
        match t {
            Transform::Log => Prior::InvGamma(InvGammaPrior::default()),
            Transform::Identity => Prior::Flat,
        }
    }
}

/// Whether samples have free or fixed cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinality {
    Free,
    Fixed(usize),
}

/// Parameter layout of the continuous Gaussian kernel: `alpha, rho, sigma`
/// shared across dimensions when isotropic, else
/// `alpha, rho1..D, sigma1..D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianLayout {
    pub dim: usize,
    pub isotropic: bool,
}

impl GaussianLayout {
    pub fn param_names(&self) -> Vec<String> {
        if self.isotropic {
            vec!["alpha".into(), "rho".into(), "sigma".into()]
        } else {
            let mut v = vec!["alpha".to_string()];
            v.extend((1..=self.dim).map(|d| format!("rho{d}")));
            v.extend((1..=self.dim).map(|d| format!("sigma{d}")));
            v
        }
    }

    pub fn n_params(&self) -> usize {
        if self.isotropic {
            3
        } else {
            1 + 2 * self.dim
        }
    }

    pub fn theta(&self, params: &[f64]) -> Result<GaussianTheta> {
        if params.len() != self.n_params() {
            return Err(DppError::DimensionMismatch {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if self.isotropic {
            GaussianTheta::isotropic(params[0], params[1], params[2], self.dim)
        } else {
            GaussianTheta::new(
                params[0],
                params[1..=self.dim].to_vec(),
                params[1 + self.dim..].to_vec(),
            )
        }
    }

    pub fn params(&self, theta: &GaussianTheta) -> Vec<f64> {
        if self.isotropic {
            vec![theta.alpha, theta.rho[0], theta.sigma[0]]
        } else {
            let mut v = vec![theta.alpha];
            v.extend(&theta.rho);
            v.extend(&theta.sigma);
            v
        }
    }
}

/// The model family and its parameterization.
#[derive(Debug, Clone)]
pub enum ModelKind {
    /// DPP or k-DPP over one or more discrete ground sets that share
    /// parameters; `families[g]` builds the kernel of group `g`.
    Discrete {
        families: Vec<Arc<dyn KernelFamily>>,
        cardinality: Cardinality,
    },
    /// DPP or k-DPP on `R^D` with the Gaussian kernel.
    Continuous {
        layout: GaussianLayout,
        cardinality: Cardinality,
    },
    /// Conditional k-DPP: each sample adds items to a given set.
    Conditional { families: Vec<Arc<dyn KernelFamily>> },
}

/// A model family with one prior per scalar parameter.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub priors: Vec<Prior>,
}

impl ModelSpec {
    /// Default priors: `Inv-Gamma(0.001, 0.001)` on positive parameters,
    /// flat on real ones.
    pub fn new(kind: ModelKind) -> Result<Self> {
        let mut spec = Self { kind, priors: Vec::new() };
        spec.check_families()?;
        spec.priors = spec.transforms().into_iter().map(Prior::default_for).collect();
        Ok(spec)
    }

    pub fn with_priors(mut self, priors: Vec<Prior>) -> Result<Self> {
        if priors.len() != self.n_params() {
            return Err(DppError::DimensionMismatch {
                expected: self.n_params(),
                got: priors.len(),
            });
        }
        self.priors = priors;
        Ok(self)
    }

    fn families(&self) -> Option<&[Arc<dyn KernelFamily>]> {
        match &self.kind {
            ModelKind::Discrete { families, .. } | ModelKind::Conditional { families } => Some(families),
            ModelKind::Continuous { .. } => None,
        }
    }

    fn check_families(&self) -> Result<()> {
        if let Some(f) = self.families() {
            let Some(first) = f.first() else {
                return Err(DppError::Empty("model needs at least one ground set".into()));
            };
            let names = first.param_names();
            if f.iter().any(|g| g.param_names() != names) {
                return Err(DppError::InvalidArgument("ground-set families disagree on parameters".into()));
            }
        }
        if let ModelKind::Discrete {
            cardinality: Cardinality::Fixed(0),
            ..
        }
        | ModelKind::Continuous {
            cardinality: Cardinality::Fixed(0),
            ..
        } = self.kind
        {
            return Err(DppError::InvalidArgument("k-DPP needs k >= 1".into()));
        }
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        match &self.kind {
            ModelKind::Continuous { layout, .. } => layout.param_names(),
            _ => self.families().map(|f| f[0].param_names()).unwrap_or_default(),
        }
    }

    pub fn transforms(&self) -> Vec<Transform> {
        match &self.kind {
            ModelKind::Continuous { layout, .. } => vec![Transform::Log; layout.n_params()],
            _ => self.families().map(|f| f[0].transforms()).unwrap_or_default(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    pub fn log_prior(&self, params: &[f64]) -> f64 {
        params.iter().zip(&self.priors).map(|(x, p)| p.log_density(*x)).sum()
    }
}

/// An observed subset of the ground set of group `group`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub group: usize,
    pub items: Vec<usize>,
}

impl Subset {
    pub fn new(items: Vec<usize>) -> Self {
        Self { group: 0, items }
    }
}

/// Training data matching a [`ModelKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Subsets(Vec<Subset>),
    Points(Vec<PointConfig>),
    Conditional(Vec<ConditionalSample>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Subsets(v) => v.len(),
            Observations::Points(v) => v.len(),
            Observations::Conditional(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reject point configurations with coordinates outside `[lower, upper]`.
pub fn check_domain(data: &[PointConfig], lower: &[f64], upper: &[f64]) -> Result<()> {
    for (t, cfg) in data.iter().enumerate() {
        if lower.len() != cfg.dim() || upper.len() != cfg.dim() {
            return Err(DppError::DimensionMismatch {
                expected: cfg.dim(),
                got: lower.len(),
            });
        }
        for p in cfg.points() {
            if p.iter().zip(lower.iter().zip(upper)).any(|(x, (lo, hi))| x < lo || x > hi) {
                return Err(DppError::InvalidArgument(format!(
                    "sample {t} has point {p:?} outside the declared domain"
                )));
            }
        }
    }
    Ok(())
}

/// Continuous DPP normalizers are evaluated to this relative trace gap.
pub const CONTINUOUS_TAIL_TOL: f64 = 1e-12;

fn subset_log_det(l: &DMatrix<f64>, items: &[usize]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    match linalg::log_det_spd(&linalg::submatrix(l, items)) {
        Ok(v) => v,
        Err(e) => {
            log::debug!("singular sample submatrix ({e}); likelihood is zero");
            f64::NEG_INFINITY
        }
    }
}

fn points_log_det(theta: &GaussianTheta, cfg: &PointConfig) -> f64 {
    if cfg.is_empty() {
        return 0.0;
    }
    match linalg::log_det_spd(&theta.kernel_matrix(cfg.points())) {
        Ok(v) => v,
        Err(e) => {
            log::debug!("singular sample kernel ({e}); likelihood is zero");
            f64::NEG_INFINITY
        }
    }
}

fn has_duplicates<T: PartialOrd + Clone>(items: &[T]) -> bool {
    let mut v = items.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.windows(2).any(|w| w[0] == w[1])
}

/// `prior + data - sum_g T_g * normalizer_g`, the one place where the pieces
/// are combined.
fn assemble(prior: f64, data: f64, normalizers: &[(usize, f64)]) -> f64 {
    let mut total = prior + data;
    for &(count, norm) in normalizers {
        total -= count as f64 * norm;
    }
    total
}

fn normalizer_bounds(state: &TruncationState, k: Option<usize>) -> Result<NormalizerBounds> {
    match k {
        None => state.dpp_bounds(),
        Some(k) => state.kdpp_bounds(k),
    }
}

/// Exact log normalizer of a discrete kernel from its full spectrum.
fn discrete_normalizer(l: &DMatrix<f64>, k: Option<usize>) -> Result<f64> {
    let n = l.nrows();
    let trunc = MatrixSpectrum::new(l.clone()).truncation(n)?;
    Ok(match k {
        None => dpp_log_normalizer_bounds(&trunc)?.log_lower,
        Some(k) => kdpp_log_normalizer_bounds(&trunc, k)?.log_lower,
    })
}

/// Continuous DPP normalizer from a truncation whose trace gap is below
/// `CONTINUOUS_TAIL_TOL * alpha`; the midpoint of the bounds is returned.
fn continuous_normalizer(theta: &GaussianTheta) -> Result<f64> {
    let mut spectrum = GaussianSpectrum::new(theta);
    let mut m = crate::spectral::INITIAL_M;
    loop {
        let trunc = spectrum.truncation(m)?;
        let b = dpp_log_normalizer_bounds(&trunc)?;
        if b.width() <= CONTINUOUS_TAIL_TOL * theta.alpha || spectrum.underflowed() {
            return Ok(b.log_lower + 0.5 * b.width());
        }
        m *= 2;
    }
}

/// A model together with its training data.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    data: Observations,
    group_counts: Vec<usize>,
    degenerate: bool,
    max_eigenvalues: usize,
}

impl Posterior {
    pub fn new(spec: ModelSpec, data: Observations) -> Result<Self> {
        if spec.priors.len() != spec.n_params() {
            return Err(DppError::DimensionMismatch {
                expected: spec.n_params(),
                got: spec.priors.len(),
            });
        }
        let mut degenerate = false;
        let group_counts = match (&spec.kind, &data) {
            (ModelKind::Discrete { families, cardinality }, Observations::Subsets(samples)) => {
                let mut counts = vec![0; families.len()];
                for (t, s) in samples.iter().enumerate() {
                    let fam = families.get(s.group).ok_or_else(|| {
                        DppError::InvalidArgument(format!("sample {t} refers to unknown group {}", s.group))
                    })?;
                    if let Some(&bad) = s.items.iter().find(|&&i| i >= fam.size()) {
                        return Err(DppError::InvalidArgument(format!(
                            "sample {t} has item {bad} outside a ground set of size {}",
                            fam.size()
                        )));
                    }
                    if let Cardinality::Fixed(k) = cardinality {
                        if s.items.len() != *k {
                            return Err(DppError::CardinalityMismatch {
                                sample: t,
                                expected: *k,
                                got: s.items.len(),
                            });
                        }
                    }
                    if has_duplicates(&s.items) {
                        log::warn!("sample {t} repeats an item; its likelihood is zero");
                        degenerate = true;
                    }
                    counts[s.group] += 1;
                }
                counts
            }
            (ModelKind::Continuous { layout, cardinality }, Observations::Points(samples)) => {
                for (t, cfg) in samples.iter().enumerate() {
                    if cfg.dim() != layout.dim {
                        return Err(DppError::DimensionMismatch {
                            expected: layout.dim,
                            got: cfg.dim(),
                        });
                    }
                    if let Cardinality::Fixed(k) = cardinality {
                        if cfg.len() != *k {
                            return Err(DppError::CardinalityMismatch {
                                sample: t,
                                expected: *k,
                                got: cfg.len(),
                            });
                        }
                    }
                    if has_duplicates(cfg.points()) {
                        log::warn!("sample {t} repeats a point; its likelihood is zero");
                        degenerate = true;
                    }
                }
                vec![samples.len()]
            }
            (ModelKind::Conditional { families }, Observations::Conditional(samples)) => {
                let mut counts = vec![0; families.len()];
                for (t, s) in samples.iter().enumerate() {
                    let fam = families.get(s.group).ok_or_else(|| {
                        DppError::InvalidArgument(format!("sample {t} refers to unknown group {}", s.group))
                    })?;
                    let n = fam.size();
                    if s.given.iter().chain(&s.added).any(|&i| i >= n) {
                        return Err(DppError::InvalidArgument(format!("sample {t} has an item outside its ground set")));
                    }
                    if s.added.is_empty() {
                        return Err(DppError::Empty(format!("sample {t} adds no items")));
                    }
                    if let Some(b) = s.added.iter().find(|b| s.given.contains(b)) {
                        return Err(DppError::InvalidArgument(format!(
                            "sample {t}: added item {b} is already in the given set"
                        )));
                    }
                    if s.given.len() + s.added.len() > n {
                        return Err(DppError::InvalidArgument(format!("sample {t} exceeds its ground set")));
                    }
                    counts[s.group] += 1;
                }
                counts
            }
            _ => {
                return Err(DppError::InvalidArgument(
                    "observations do not match the model family".into(),
                ))
            }
        };
        Ok(Self {
            spec,
            data,
            group_counts,
            degenerate,
            max_eigenvalues: DEFAULT_MAX_EIGENVALUES,
        })
    }

    /// Cap on the truncation size of bounded evaluations.
    pub fn with_max_eigenvalues(mut self, cap: usize) -> Self {
        self.max_eigenvalues = cap.max(1);
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &Observations {
        &self.data
    }

    pub fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        self.spec.transforms()
    }

    /// Log-scale (for positive parameters) view used by the samplers.
    pub fn sampling_target(&self) -> Reparameterized<'_, Self> {
        Reparameterized::new(self, self.transforms(), self.param_names())
    }

    pub fn log_prior(&self, params: &[f64]) -> f64 {
        self.spec.log_prior(params)
    }

    fn check_len(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.spec.n_params() {
            return Err(DppError::DimensionMismatch {
                expected: self.spec.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Kernel matrix per group; `None` when the parameters are invalid.
    fn kernels(&self, families: &[Arc<dyn KernelFamily>], params: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        families
            .iter()
            .zip(&self.group_counts)
            .map(|(f, &count)| {
                if count == 0 {
                    return Some(DMatrix::zeros(0, 0));
                }
                match f.kernel(params) {
                    Ok(k) => Some(k.into_matrix()),
                    Err(e) => {
                        log::debug!("kernel construction failed: {e}");
                        None
                    }
                }
            })
            .collect()
    }

    fn cardinality_k(&self) -> Option<usize> {
        match self.spec.kind {
            ModelKind::Discrete {
                cardinality: Cardinality::Fixed(k),
                ..
            }
            | ModelKind::Continuous {
                cardinality: Cardinality::Fixed(k),
                ..
            } => Some(k),
            _ => None,
        }
    }

    /// Data term `sum_t log det L_{A^t}` plus whatever is needed for the
    /// normalizers. `None` when the likelihood is zero.
    fn data_term(&self, params: &[f64]) -> Result<Option<(f64, Evaluated)>> {
        if self.degenerate {
            return Ok(None);
        }
        match (&self.spec.kind, &self.data) {
            (ModelKind::Discrete { families, .. }, Observations::Subsets(samples)) => {
                let Some(kernels) = self.kernels(families, params) else {
                    return Ok(None);
                };
                let mut total = 0.0;
                for s in samples {
                    total += subset_log_det(&kernels[s.group], &s.items);
                }
                Ok(Some((total, Evaluated::Discrete(kernels))))
            }
            (ModelKind::Continuous { layout, .. }, Observations::Points(samples)) => {
                let theta = match layout.theta(params) {
                    Ok(t) => t,
                    Err(_) => return Ok(None),
                };
                let total = samples.iter().map(|c| points_log_det(&theta, c)).sum();
                Ok(Some((total, Evaluated::Continuous(theta))))
            }
            (ModelKind::Conditional { families }, Observations::Conditional(samples)) => {
                let Some(kernels) = self.kernels(families, params) else {
                    return Ok(None);
                };
                let mut total = 0.0;
                for s in samples {
                    total += match conditional_log_prob(&kernels[s.group], &s.given, &s.added) {
                        Ok(v) => v,
                        Err(DppError::Factorization(e)) => {
                            log::debug!("conditional kernel failed: {e}");
                            f64::NEG_INFINITY
                        }
                        Err(e) => return Err(e),
                    };
                }
                Ok(Some((total, Evaluated::Conditional)))
            }
            _ => Err(DppError::InvalidArgument("observations do not match the model family".into())),
        }
    }

    /// Exact log-likelihood. Continuous DPPs use a truncation with a
    /// negligible tail; continuous k-DPPs have no exact form.
    pub fn log_likelihood(&self, params: &[f64]) -> Result<f64> {
        self.check_len(params)?;
        let Some((data, eval)) = self.data_term(params)? else {
            return Ok(f64::NEG_INFINITY);
        };
        Ok(assemble(0.0, data, &self.exact_normalizers(&eval)?))
    }

    fn exact_normalizers(&self, eval: &Evaluated) -> Result<Vec<(usize, f64)>> {
        let k = self.cardinality_k();
        match eval {
            Evaluated::Discrete(kernels) => kernels
                .iter()
                .zip(&self.group_counts)
                .filter(|(_, &c)| c > 0)
                .map(|(l, &c)| Ok((c, discrete_normalizer(l, k)?)))
                .collect(),
            Evaluated::Continuous(theta) => {
                if k.is_some() {
                    return Err(DppError::NoExactNormalizer);
                }
                Ok(vec![(self.group_counts[0], continuous_normalizer(theta)?)])
            }
            Evaluated::Conditional => Ok(Vec::new()),
        }
    }

    /// Exact log-posterior up to a constant.
    pub fn log_posterior(&self, params: &[f64]) -> Result<f64> {
        self.check_len(params)?;
        let prior = self.log_prior(params);
        if prior == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let Some((data, eval)) = self.data_term(params)? else {
            return Ok(f64::NEG_INFINITY);
        };
        if data == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(assemble(prior, data, &self.exact_normalizers(&eval)?))
    }

    /// Lower/upper log-posterior bounds starting from a trace-only
    /// truncation (k-DPPs start with at least `k` eigenvalues).
    pub fn log_posterior_bounds(&self, params: &[f64]) -> Result<LogPosteriorBounds> {
        self.check_len(params)?;
        let prior = self.log_prior(params);
        let infeasible = LogPosteriorBounds::constant(f64::NEG_INFINITY);
        if prior == f64::NEG_INFINITY {
            return Ok(infeasible);
        }
        let Some((data, eval)) = self.data_term(params)? else {
            return Ok(infeasible);
        };
        if data == f64::NEG_INFINITY {
            return Ok(infeasible);
        }
        let k = self.cardinality_k();
        let groups = match eval {
            Evaluated::Discrete(kernels) => kernels
                .into_iter()
                .zip(&self.group_counts)
                .filter(|(_, &c)| c > 0)
                .map(|(l, &c)| (c, TruncationState::for_matrix(l, self.max_eigenvalues)))
                .collect(),
            Evaluated::Continuous(theta) => {
                vec![(self.group_counts[0], TruncationState::for_gaussian(&theta, self.max_eigenvalues))]
            }
            Evaluated::Conditional => Vec::new(),
        };
        let mut b = LogPosteriorBounds {
            prior,
            data,
            k,
            groups,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        };
        if let Some(k) = k {
            for (_, state) in &mut b.groups {
                while state.truncation().len() < k && state.tighten()? {}
            }
        }
        b.refresh()?;
        Ok(b)
    }
}

#[derive(Debug)]
enum Evaluated {
    Discrete(Vec<DMatrix<f64>>),
    Continuous(GaussianTheta),
    Conditional,
}

/// Anytime bounds on the log-posterior at one parameter value.
#[derive(Debug)]
pub struct LogPosteriorBounds {
    prior: f64,
    data: f64,
    k: Option<usize>,
    groups: Vec<(usize, TruncationState)>,
    lower: f64,
    upper: f64,
}

impl LogPosteriorBounds {
    fn constant(value: f64) -> Self {
        Self {
            prior: value,
            data: 0.0,
            k: None,
            groups: Vec::new(),
            lower: value,
            upper: value,
        }
    }

    fn refresh(&mut self) -> Result<()> {
        if self.groups.is_empty() {
            self.lower = assemble(self.prior, self.data, &[]);
            self.upper = self.lower;
            return Ok(());
        }
        let mut lows = Vec::with_capacity(self.groups.len());
        let mut highs = Vec::with_capacity(self.groups.len());
        for (count, state) in &self.groups {
            let nb = normalizer_bounds(state, self.k)?;
            lows.push((*count, nb.log_lower));
            highs.push((*count, nb.log_upper));
        }
        // The normalizer divides, so its upper bound gives the lower bound.
        self.lower = assemble(self.prior, self.data, &highs);
        self.upper = assemble(self.prior, self.data, &lows);
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_exact(&self) -> bool {
        self.groups.iter().all(|(_, s)| s.is_exact()) || self.lower == self.upper
    }

    /// Largest truncation size among the kernels.
    pub fn eigenvalues_used(&self) -> usize {
        self.groups.iter().map(|(_, s)| s.truncation().len()).max().unwrap_or(0)
    }

    /// Advance every kernel's truncation one step; `Ok(false)` once none
    /// can grow.
    pub fn tighten(&mut self) -> Result<bool> {
        let mut progressed = false;
        for (_, state) in &mut self.groups {
            progressed |= state.tighten()?;
        }
        if progressed {
            self.refresh()?;
        }
        Ok(progressed)
    }
}

impl PosteriorBounds for LogPosteriorBounds {
    fn lower(&self) -> f64 {
        self.lower
    }
    fn upper(&self) -> f64 {
        self.upper
    }
    fn tighten(&mut self) -> Result<bool> {
        LogPosteriorBounds::tighten(self)
    }
    fn is_exact(&self) -> bool {
        LogPosteriorBounds::is_exact(self)
    }
    fn eigenvalues_used(&self) -> usize {
        LogPosteriorBounds::eigenvalues_used(self)
    }
}

impl LogTarget for Posterior {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_posterior(x)
    }
    fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }
}

impl BoundedLogTarget for Posterior {
    type Bounds = LogPosteriorBounds;
    fn dim(&self) -> usize {
        self.spec.n_params()
    }
    fn log_density_bounds(&self, x: &[f64]) -> Result<LogPosteriorBounds> {
        self.log_posterior_bounds(x)
    }
    fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }
}

/// `sum_t log det L_{A^t} - T log det(L + I)` for index subsets of a
/// discrete kernel.
pub fn dpp_log_likelihood(kernel: &DiscreteKernel, data: &[Vec<usize>]) -> Result<f64> {
    check_subsets(kernel, data)?;
    let l = kernel.matrix();
    let dt: f64 = data
        .iter()
        .map(|a| if has_duplicates(a) { f64::NEG_INFINITY } else { subset_log_det(l, a) })
        .sum();
    Ok(assemble(0.0, dt, &[(data.len(), discrete_normalizer(l, None)?)]))
}

/// `sum_t log det L_{A^t} - T log e_k(lambda)`; every sample must have `k`
/// items.
pub fn kdpp_log_likelihood(kernel: &DiscreteKernel, data: &[Vec<usize>], k: usize) -> Result<f64> {
    check_subsets(kernel, data)?;
    for (t, a) in data.iter().enumerate() {
        if a.len() != k {
            return Err(DppError::CardinalityMismatch {
                sample: t,
                expected: k,
                got: a.len(),
            });
        }
    }
    let l = kernel.matrix();
    let dt: f64 = data
        .iter()
        .map(|a| if has_duplicates(a) { f64::NEG_INFINITY } else { subset_log_det(l, a) })
        .sum();
    Ok(assemble(0.0, dt, &[(data.len(), discrete_normalizer(l, Some(k))?)]))
}

fn check_subsets(kernel: &DiscreteKernel, data: &[Vec<usize>]) -> Result<()> {
    for (t, a) in data.iter().enumerate() {
        if let Some(&bad) = a.iter().find(|&&i| i >= kernel.len()) {
            return Err(DppError::InvalidArgument(format!(
                "sample {t} has item {bad} outside a ground set of size {}",
                kernel.len()
            )));
        }
    }
    Ok(())
}

/// Continuous DPP log-likelihood with the Gaussian kernel (normalizer from
/// a truncation with negligible tail).
pub fn continuous_dpp_log_likelihood(theta: &GaussianTheta, data: &[PointConfig]) -> Result<f64> {
    let mut dt = 0.0;
    for cfg in data {
        if cfg.dim() != theta.dim() {
            return Err(DppError::DimensionMismatch {
                expected: theta.dim(),
                got: cfg.dim(),
            });
        }
        dt += if has_duplicates(cfg.points()) {
            f64::NEG_INFINITY
        } else {
            points_log_det(theta, cfg)
        };
    }
    Ok(assemble(0.0, dt, &[(data.len(), continuous_normalizer(theta)?)]))
}

/// Bounds on the log-likelihood of a continuous DPP or k-DPP from the top
/// `m` eigenvalues.
pub fn continuous_log_likelihood_bounds(
    theta: &GaussianTheta,
    data: &[PointConfig],
    k: Option<usize>,
    m: usize,
) -> Result<(f64, f64)> {
    let dt: f64 = data.iter().map(|c| points_log_det(theta, c)).sum();
    let mut spectrum = GaussianSpectrum::new(theta);
    let trunc = spectrum.truncation(m)?;
    let nb = match k {
        None => dpp_log_normalizer_bounds(&trunc)?,
        Some(k) => kdpp_log_normalizer_bounds(&trunc, k)?,
    };
    let t = data.len();
    Ok((assemble(0.0, dt, &[(t, nb.log_upper)]), assemble(0.0, dt, &[(t, nb.log_lower)])))
}
