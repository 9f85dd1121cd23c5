//! Posterior samplers and convergence diagnostics.
//!
//! Samplers operate on an unconstrained parameter vector through the
//! [`LogTarget`] (exact density) and [`BoundedLogTarget`] (lazily tightened
//! lower/upper bounds) traits. [`Reparameterized`] maps positive parameters to
//! the log scale and folds the Jacobian into the target.

mod bounded;
pub mod diagnostics;
mod metropolis;
mod slice;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::Transform;

pub use bounded::{bounded_mh, bounded_slice, BoundedOptions};
pub use diagnostics::{autocorrelation, gelman_rubin, gelman_rubin_series, Acf, Psrf};
pub use metropolis::{mh_step, rw_mh};
pub use slice::{slice_hyperrect, slice_univariate, SliceOptions, DEFAULT_MAX_STEPS};

/// Default random-walk step on the log scale.
pub const DEFAULT_PROPOSAL_SCALE: f64 = 0.1;
/// Default slice width on the log scale.
pub const DEFAULT_SLICE_WIDTH: f64 = 1.0;
/// Default cap on the eigenvalue count of a bounded step.
pub const DEFAULT_MAX_EIGENVALUES: usize = 1 << 20;

/// Pseudorandom stream of one chain.
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An unnormalized log density on `R^dim`.
pub trait LogTarget: Sync {
    fn dim(&self) -> usize;

    /// `log p(x)` up to a constant; `-inf` outside the support.
    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// The parameter vector reported in chains for state `x`.
    fn to_output(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x{i}")).collect()
    }
}

/// Lower/upper bounds on a log density at one point that can be tightened.
pub trait PosteriorBounds {
    fn lower(&self) -> f64;

    fn upper(&self) -> f64;

    /// One tightening step; `Ok(false)` when no further progress is possible.
    fn tighten(&mut self) -> Result<bool>;

    fn is_exact(&self) -> bool {
        self.lower() == self.upper()
    }

    /// Eigenvalues currently used, for diagnostics.
    fn eigenvalues_used(&self) -> usize {
        0
    }
}

/// A log density that can only be bracketed.
pub trait BoundedLogTarget: Sync {
    type Bounds: PosteriorBounds;

    fn dim(&self) -> usize;

    fn log_density_bounds(&self, x: &[f64]) -> Result<Self::Bounds>;

    fn to_output(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x{i}")).collect()
    }
}

/// Exact bounds (`lower == upper`) for any closure target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactBounds(pub f64);

impl PosteriorBounds for ExactBounds {
    fn lower(&self) -> f64 {
        self.0
    }
    fn upper(&self) -> f64 {
        self.0
    }
    fn tighten(&mut self) -> Result<bool> {
        Ok(false)
    }
}

/// A closure-backed target, mostly for tests and toy problems.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> BoundedLogTarget for FnTarget<F> {
    type Bounds = ExactBounds;
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density_bounds(&self, x: &[f64]) -> Result<ExactBounds> {
        Ok(ExactBounds((self.f)(x)))
    }
}

/// Bounds shifted by a constant (the log-Jacobian of a reparameterization).
#[derive(Debug)]
pub struct ShiftedBounds<B> {
    inner: B,
    shift: f64,
}

impl<B: PosteriorBounds> PosteriorBounds for ShiftedBounds<B> {
    fn lower(&self) -> f64 {
        self.inner.lower() + self.shift
    }
    fn upper(&self) -> f64 {
        self.inner.upper() + self.shift
    }
    fn tighten(&mut self) -> Result<bool> {
        self.inner.tighten()
    }
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }
    fn eigenvalues_used(&self) -> usize {
        self.inner.eigenvalues_used()
    }
}

/// Sampling coordinates `phi = transform(theta)`, with target
/// `log p(theta(phi)) + log |d theta / d phi|`.
pub struct Reparameterized<'a, T: ?Sized> {
    inner: &'a T,
    transforms: Vec<Transform>,
    names: Vec<String>,
}

impl<'a, T: ?Sized> Reparameterized<'a, T> {
    pub fn new(inner: &'a T, transforms: Vec<Transform>, names: Vec<String>) -> Self {
        Self {
            inner,
            transforms,
            names,
        }
    }

    pub fn to_natural(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter().zip(&self.transforms).map(|(p, t)| t.inverse(*p)).collect()
    }

    pub fn to_sampling(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.transforms).map(|(v, t)| t.forward(*v)).collect()
    }

    fn log_jacobian(&self, phi: &[f64]) -> f64 {
        phi.iter()
            .zip(&self.transforms)
            .map(|(p, t)| match t {
                Transform::Log => *p,
                Transform::Identity => 0.0,
            })
            .sum()
    }
}

impl<T: LogTarget + ?Sized> LogTarget for Reparameterized<'_, T> {
    fn dim(&self) -> usize {
        self.transforms.len()
    }
    fn log_density(&self, phi: &[f64]) -> Result<f64> {
        let theta = self.to_natural(phi);
        if theta.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.inner.log_density(&theta)? + self.log_jacobian(phi))
    }
    fn to_output(&self, phi: &[f64]) -> Vec<f64> {
        self.to_natural(phi)
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

impl<T: BoundedLogTarget + ?Sized> BoundedLogTarget for Reparameterized<'_, T> {
    type Bounds = ShiftedBounds<T::Bounds>;
    fn dim(&self) -> usize {
        self.transforms.len()
    }
    fn log_density_bounds(&self, phi: &[f64]) -> Result<Self::Bounds> {
        let theta = self.to_natural(phi);
        let shift = if theta.iter().any(|v| !v.is_finite()) {
            f64::NEG_INFINITY
        } else {
            self.log_jacobian(phi)
        };
        Ok(ShiftedBounds {
            inner: self.inner.log_density_bounds(&theta)?,
            shift,
        })
    }
    fn to_output(&self, phi: &[f64]) -> Vec<f64> {
        self.to_natural(phi)
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

/// Per-parameter random-walk scales for a symmetric normal proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub scales: Vec<f64>,
}

impl ProposalSpec {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(DppError::Empty("proposal needs at least one scale".into()));
        }
        for (i, &s) in scales.iter().enumerate() {
            crate::error::check_positive(&format!("proposal scale {i}"), s)?;
        }
        Ok(Self { scales })
    }

    pub fn uniform(dim: usize, scale: f64) -> Result<Self> {
        Self::new(vec![scale; dim])
    }
}

/// Sampler configuration recorded with a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "kebab-case")]
pub enum SamplerSettings {
    Mh { scales: Vec<f64> },
    Slice { widths: Vec<f64>, max_steps: usize },
    BoundedMh { scales: Vec<f64>, max_eigenvalues: usize },
    BoundedSlice { widths: Vec<f64>, max_steps: usize, max_eigenvalues: usize },
}

/// The output of one sampler run: the state after each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub param_names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    /// Log density of each sample in sampling coordinates. Bounded samplers
    /// record the lower bound reached when the step was resolved.
    pub log_post: Vec<f64>,
    /// Whether the step moved the state.
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub settings: SamplerSettings,
    /// Largest truncation size a bounded step needed (0 for exact samplers).
    pub max_eigenvalues_used: usize,
}

impl Chain {
    pub(crate) fn new(param_names: Vec<String>, seed: u64, settings: SamplerSettings, capacity: usize) -> Self {
        Self {
            param_names,
            samples: Vec::with_capacity(capacity),
            log_post: Vec::with_capacity(capacity),
            accepted: Vec::with_capacity(capacity),
            seed,
            settings,
            max_eigenvalues_used: 0,
        }
    }

    pub(crate) fn push(&mut self, sample: Vec<f64>, log_post: f64, accepted: bool) {
        self.samples.push(sample);
        self.log_post.push(log_post);
        self.accepted.push(accepted);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// Values of parameter `j` across the chain.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }

    /// Drop the first `burnin` samples and keep every `thin`-th one after.
    pub fn burned_thinned(&self, burnin: usize, thin: usize) -> Chain {
        let thin = thin.max(1);
        let keep: Vec<usize> = (burnin..self.len()).step_by(thin).collect();
        Chain {
            param_names: self.param_names.clone(),
            samples: keep.iter().map(|&i| self.samples[i].clone()).collect(),
            log_post: keep.iter().map(|&i| self.log_post[i]).collect(),
            accepted: keep.iter().map(|&i| self.accepted[i]).collect(),
            seed: self.seed,
            settings: self.settings.clone(),
            max_eigenvalues_used: self.max_eigenvalues_used,
        }
    }

    /// CSV with columns `iter, <params..>, log_post, accepted`; `iter`
    /// counts from 1 in the original numbering when `first_iter` is given.
    pub fn write_csv<W: Write>(&self, writer: W, first_iter: usize, thin: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string()];
        header.extend(self.param_names.iter().cloned());
        header.push("log_post".into());
        header.push("accepted".into());
        w.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![(first_iter + i * thin.max(1)).to_string()];
            row.extend(s.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.log_post[i]));
            row.push(u8::from(self.accepted[i]).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_start(x0: &[f64], dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(DppError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    Ok(())
}

fn check_lengths(values: &[f64], dim: usize, what: &str) -> Result<()> {
    if values.len() != dim {
        return Err(DppError::InvalidArgument(format!(
            "{what} has {} entries for a {dim}-dimensional target",
            values.len()
        )));
    }
    for (i, &v) in values.iter().enumerate() {
        crate::error::check_positive(&format!("{what} {i}"), v)?;
    }
    Ok(())
}
