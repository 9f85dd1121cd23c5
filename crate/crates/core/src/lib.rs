//! Learning the parameters of determinantal point process (DPP) kernels.
//!
//! The crate covers the full path from a parametric kernel to posterior
//! samples of its parameters:
//!
//! * [`kernels`] builds discrete kernel matrices (Gaussian quality/similarity,
//!   polynomial, multi-block feature kernels), the closed-form spectrum of the
//!   continuous Gaussian kernel operator, and elementary symmetric polynomials.
//! * [`spectral`] turns eigenvalue truncations into provable lower/upper
//!   bounds on the DPP and k-DPP normalizers that tighten monotonically.
//! * [`likelihood`] evaluates exact and bounded log-likelihoods and
//!   log-posteriors under inverse-gamma priors.
//! * [`mcmc`] provides random-walk Metropolis-Hastings, stepping-out slice
//!   samplers, their bounded ("anytime") variants, and convergence diagnostics.
//! * [`mle`] implements closed-form likelihood gradients and gradient ascent.
//! * [`moments`] computes theoretical moments for model checking.
//! * [`sampling`] draws exact DPP and k-DPP samples for synthetic data.
//! * [`conditional`] implements conditional k-DPP kernels and likelihoods.
//! * [`io`] reads and writes the CSV formats used by the command line tool.

pub mod conditional;
pub mod error;
pub mod io;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod mcmc;
pub mod mle;
pub mod moments;
pub mod sampling;
pub mod spectral;

pub use error::{DppError, Result};
