//! Anytime samplers that resolve each decision from lower/upper bounds on
//! the log density, tightening only while a decision is ambiguous.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metropolis::propose;
use super::slice::{hyperrect_update, log_uniform, SliceOptions, SliceTest};
use super::{chain_rng, check_start, BoundedLogTarget, Chain, PosteriorBounds, ProposalSpec, SamplerSettings};
use crate::error::{DppError, Result};

/// Settings of the bounded samplers beyond the proposal itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedOptions {
    /// Cap on the eigenvalue count; reported in diagnostics only, the cap
    /// itself is enforced by the target's bounds.
    pub max_eigenvalues: usize,
}

impl Default for BoundedOptions {
    fn default() -> Self {
        Self {
            max_eigenvalues: super::DEFAULT_MAX_EIGENVALUES,
        }
    }
}

fn unresolved<B: PosteriorBounds>(bounds: &[&B], threshold: f64, lower: f64, upper: f64) -> DppError {
    DppError::BoundedStepUnresolved {
        eigenvalues: bounds.iter().map(|b| b.eigenvalues_used()).max().unwrap_or(0),
        threshold,
        lower,
        upper,
    }
}

fn initial_bounds<T: BoundedLogTarget + ?Sized>(target: &T, x0: &[f64]) -> Result<T::Bounds> {
    check_start(x0, target.dim())?;
    let b = target.log_density_bounds(x0)?;
    if !b.upper().is_finite() {
        return Err(DppError::InvalidInitialState(b.upper()));
    }
    Ok(b)
}

/// Random-walk Metropolis-Hastings on bounds.
///
/// Per step the proposal and then `u` are drawn exactly as in
/// [`rw_mh`](super::rw_mh); the step accepts once
/// `log u < min(0, lower(x') - upper(x))`, rejects once
/// `log u >= min(0, upper(x') - lower(x))`, and tightens both bounds in
/// between. With identical seeds and a target whose tightest bounds are
/// exact, the decisions coincide with exact Metropolis-Hastings.
pub fn bounded_mh<T: BoundedLogTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    proposal: &ProposalSpec,
    options: BoundedOptions,
    iterations: usize,
    seed: u64,
) -> Result<Chain> {
    super::check_lengths(&proposal.scales, target.dim(), "proposal scale")?;
    let mut current = initial_bounds(target, x0)?;
    let mut rng = chain_rng(seed);
    let settings = SamplerSettings::BoundedMh {
        scales: proposal.scales.clone(),
        max_eigenvalues: options.max_eigenvalues,
    };
    let mut chain = Chain::new(target.param_names(), seed, settings, iterations);
    let mut x = x0.to_vec();
    for _ in 0..iterations {
        let candidate = propose(&x, proposal, &mut rng);
        let log_u = rng.random::<f64>().ln();
        let mut cand = target.log_density_bounds(&candidate)?;
        let accept = loop {
            let lo = (cand.lower() - current.upper()).min(0.0);
            let hi = (cand.upper() - current.lower()).min(0.0);
            if log_u < lo {
                break true;
            }
            if log_u >= hi {
                break false;
            }
            let a = cand.tighten()?;
            let b = current.tighten()?;
            if !a && !b {
                return Err(unresolved(&[&cand, &current], log_u, lo, hi));
            }
        };
        chain.max_eigenvalues_used = chain
            .max_eigenvalues_used
            .max(cand.eigenvalues_used())
            .max(current.eigenvalues_used());
        if accept {
            x = candidate;
            current = cand;
        }
        chain.push(target.to_output(&x), current.lower(), accept);
    }
    Ok(chain)
}

struct BoundedSlice<'a, T: BoundedLogTarget + ?Sized> {
    target: &'a T,
    max_used: usize,
}

impl<T: BoundedLogTarget + ?Sized> SliceTest for BoundedSlice<'_, T> {
    type State = T::Bounds;

    fn contains(&mut self, x: &[f64], log_y: f64) -> Result<Option<T::Bounds>> {
        let mut b = self.target.log_density_bounds(x)?;
        loop {
            if log_y < b.lower() {
                self.max_used = self.max_used.max(b.eigenvalues_used());
                return Ok(Some(b));
            }
            if log_y >= b.upper() {
                self.max_used = self.max_used.max(b.eigenvalues_used());
                return Ok(None);
            }
            if !b.tighten()? {
                return Err(unresolved(&[&b], log_y, b.lower(), b.upper()));
            }
        }
    }
}

/// Draw a slice level under the current density by rejection from
/// `[0, exp(upper)]`, tightening `current` while undecided.
fn bounded_level<B: PosteriorBounds, R: Rng>(current: &mut B, rng: &mut R) -> Result<f64> {
    loop {
        let log_y = current.upper() + log_uniform(rng);
        loop {
            if log_y < current.lower() {
                return Ok(log_y);
            }
            if log_y >= current.upper() {
                break;
            }
            if !current.tighten()? {
                return Err(unresolved(&[&*current], log_y, current.lower(), current.upper()));
            }
        }
    }
}

/// Hyperrectangle slice sampling on bounds: the level is drawn by rejection
/// against the upper bound, and every membership test is resolved by
/// tightening.
pub fn bounded_slice<T: BoundedLogTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    slice: &SliceOptions,
    options: BoundedOptions,
    iterations: usize,
    seed: u64,
) -> Result<Chain> {
    super::check_lengths(&slice.widths, target.dim(), "slice width")?;
    let mut current = initial_bounds(target, x0)?;
    let mut rng = chain_rng(seed);
    let settings = SamplerSettings::BoundedSlice {
        widths: slice.widths.clone(),
        max_steps: slice.max_steps,
        max_eigenvalues: options.max_eigenvalues,
    };
    let mut chain = Chain::new(target.param_names(), seed, settings, iterations);
    let mut x = x0.to_vec();
    let mut test = BoundedSlice { target, max_used: 0 };
    for _ in 0..iterations {
        let log_y = bounded_level(&mut current, &mut rng)?;
        test.max_used = test.max_used.max(current.eigenvalues_used());
        let (nx, nb) = hyperrect_update(&mut test, &x, log_y, &slice.widths, slice.max_steps, &mut rng)?;
        let moved = nx != x;
        x = nx;
        current = nb;
        chain.push(target.to_output(&x), current.lower(), moved);
    }
    chain.max_eigenvalues_used = test.max_used;
    Ok(chain)
}
