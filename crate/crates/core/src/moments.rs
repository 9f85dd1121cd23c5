//! Theoretical DPP moments for model checking.
//!
//! A DPP's first-order intensity is the diagonal of its marginal kernel
//! `K = L (I + L)^{-1}`, so `E[sum_{x in A} x^m] = sum_i x_i^m K_ii` on a
//! discrete ground set. For the continuous Gaussian kernel the same
//! integral has a closed form in the eigen-expansion.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::{DiscreteKernel, GaussianSpectrum, GaussianTheta};
use crate::likelihood::{ModelKind, ModelSpec, Observations};
use crate::linalg;

/// `K = L (I + L)^{-1} = I - (I + L)^{-1}`.
pub fn marginal_kernel(l: &DiscreteKernel) -> Result<DMatrix<f64>> {
    let n = l.len();
    let inv = linalg::spd_inverse(&(DMatrix::identity(n, n) + l.matrix()))?;
    Ok(linalg::symmetrize(&(DMatrix::identity(n, n) - inv)))
}

/// `sum_i x_id^m K_ii` for each coordinate `d` of the ground items.
pub fn discrete_moment(l: &DiscreteKernel, m: u32) -> Result<Vec<f64>> {
    let k = marginal_kernel(l)?;
    Ok(diagonal_moment(l.ground().items(), &k, m))
}

fn diagonal_moment(items: &[Vec<f64>], k: &DMatrix<f64>, m: u32) -> Vec<f64> {
    let dim = items.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (i, x) in items.iter().enumerate() {
        for d in 0..dim {
            out[d] += x[d].powi(m as i32) * k[(i, i)];
        }
    }
    out
}

/// Required tail weight of the truncated spectrum, relative to `alpha`.
pub const MOMENT_TAIL_TOL: f64 = 1e-6;

/// Orders with a closed form for the continuous Gaussian kernel.
pub fn supported_continuous_order(m: u32) -> bool {
    m % 2 == 1 || m <= 4
}

/// Per-dimension moments of orders `orders` for the continuous Gaussian
/// kernel. The spectrum is enumerated until its trace gap is below
/// `1e-6 * alpha` or `max_eigenvalues` is reached, in which case
/// `InsufficientTruncation` reports the achievable tail. Odd orders are
/// zero; even orders above 4 are unsupported.
pub fn continuous_gaussian_moments(theta: &GaussianTheta, orders: &[u32], max_eigenvalues: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(m) = orders.iter().find(|&&m| !supported_continuous_order(m)) {
        return Err(DppError::InvalidArgument(format!(
            "continuous moments are available for orders 0, 2, 4 (and odd orders), not {m}"
        )));
    }
    let required = MOMENT_TAIL_TOL * theta.alpha;
    let mut spectrum = GaussianSpectrum::new(theta);
    let mut count = 64usize;
    let (values, indices) = loop {
        let n = count.min(max_eigenvalues);
        let (vals, _) = spectrum.top_indexed(n);
        let tail = theta.alpha - vals.iter().sum::<f64>();
        if tail <= required || spectrum.underflowed() {
            let (v, i) = spectrum.top_indexed(n);
            break (v.to_vec(), i.to_vec());
        }
        if n >= max_eigenvalues {
            return Err(DppError::InsufficientTruncation { tail, required });
        }
        count *= 2;
    };
    let dim = theta.dim();
    // Squared scale rho_d / (2 beta_d^2) of the eigenfunctions.
    let scale: Vec<f64> = (0..dim).map(|d| theta.rho[d] / (2.0 * theta.beta(d).powi(2))).collect();
    Ok(orders
        .iter()
        .map(|&m| {
            let mut out = vec![0.0; dim];
            if m % 2 == 1 {
                return out;
            }
            for (l, idx) in values.iter().zip(&indices) {
                let w = l / (1.0 + l);
                for d in 0..dim {
                    let n = idx.as_slice()[d] as f64;
                    out[d] += w * match m {
                        0 => 1.0,
                        2 => scale[d] * (2.0 * n - 1.0),
                        _ => scale[d].powi(2) * 3.0 * (2.0 * n * n - 2.0 * n + 1.0),
                    };
                }
            }
            out
        })
        .collect())
}

/// Empirical moments `(1/T) sum_t sum_{x in A^t} x_d^m` with their Monte
/// Carlo standard errors.
pub fn empirical_moments(samples: &[Vec<Vec<f64>>], dim: usize, m: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(DppError::Empty("no samples for empirical moments".into()));
    }
    let t = samples.len() as f64;
    let per_sample: Vec<Vec<f64>> = samples
        .iter()
        .map(|pts| {
            (0..dim)
                .map(|d| pts.iter().map(|x| x[d].powi(m as i32)).sum())
                .collect()
        })
        .collect();
    let mut mean = vec![0.0; dim];
    let mut se = vec![0.0; dim];
    for d in 0..dim {
        mean[d] = per_sample.iter().map(|s| s[d]).sum::<f64>() / t;
        if samples.len() > 1 {
            let var = per_sample.iter().map(|s| (s[d] - mean[d]).powi(2)).sum::<f64>() / (t - 1.0);
            se[d] = (var / t).sqrt();
        }
    }
    Ok((mean, se))
}

/// Posterior band of one theoretical moment against the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: u32,
    /// Coordinate index, starting at 1.
    pub dimension: usize,
    pub empirical: f64,
    pub empirical_se: f64,
    pub theoretical_mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// `empirical - theoretical_mean`.
    pub discrepancy: f64,
    /// Empirical value lies inside `[lower, upper]`.
    pub inside: bool,
    pub draws: usize,
}

/// Probability mass of the central band in [`moment_check`].
pub const MOMENT_BAND: f64 = 0.95;

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn data_points(spec: &ModelSpec, data: &Observations) -> Result<(Vec<Vec<Vec<f64>>>, usize)> {
    match (&spec.kind, data) {
        (ModelKind::Discrete { families, .. }, Observations::Subsets(samples)) => {
            if families.len() != 1 {
                return Err(DppError::InvalidArgument("moment checks need a single ground set".into()));
            }
            let ground = families[0].ground();
            let pts = samples
                .iter()
                .map(|s| s.items.iter().map(|&i| ground.items()[i].clone()).collect())
                .collect();
            Ok((pts, ground.dim()))
        }
        (ModelKind::Continuous { layout, .. }, Observations::Points(samples)) => {
            Ok((samples.iter().map(|c| c.points().to_vec()).collect(), layout.dim))
        }
        _ => Err(DppError::InvalidArgument(
            "moment checks are defined for discrete and continuous models".into(),
        )),
    }
}

/// Theoretical moments at one parameter value, indexed `[order][dim]`.
pub fn model_moments(spec: &ModelSpec, params: &[f64], orders: &[u32], max_eigenvalues: usize) -> Result<Vec<Vec<f64>>> {
    match &spec.kind {
        ModelKind::Discrete { families, .. } => {
            let l = families[0].kernel(params)?;
            let k = marginal_kernel(&l)?;
            Ok(orders.iter().map(|&m| diagonal_moment(l.ground().items(), &k, m)).collect())
        }
        ModelKind::Continuous { layout, .. } => {
            continuous_gaussian_moments(&layout.theta(params)?, orders, max_eigenvalues)
        }
        ModelKind::Conditional { .. } => Err(DppError::InvalidArgument(
            "moment checks are defined for discrete and continuous models".into(),
        )),
    }
}

/// Theoretical moments at every posterior draw (natural parameters),
/// summarized as a central 95% band and compared with the empirical
/// moments of the data.
pub fn moment_check(
    draws: &[Vec<f64>],
    data: &Observations,
    spec: &ModelSpec,
    orders: &[u32],
    max_eigenvalues: usize,
) -> Result<Vec<MomentReport>> {
    if draws.is_empty() {
        return Err(DppError::Empty("posterior chain has no samples".into()));
    }
    let (points, dim) = data_points(spec, data)?;
    let draws: Vec<Vec<Vec<f64>>> = draws
        .iter()
        .map(|p| model_moments(spec, p, orders, max_eigenvalues))
        .collect::<Result<_>>()?;
    let tail = (1.0 - MOMENT_BAND) / 2.0;
    let mut reports = Vec::new();
    for (o, &m) in orders.iter().enumerate() {
        let (emp, se) = empirical_moments(&points, dim, m)?;
        for d in 0..dim {
            let mut vals: Vec<f64> = draws.iter().map(|v| v[o][d]).collect();
            vals.sort_by(f64::total_cmp);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lower = quantile(&vals, tail);
            let upper = quantile(&vals, 1.0 - tail);
            reports.push(MomentReport {
                order: m,
                dimension: d + 1,
                empirical: emp[d],
                empirical_se: se[d],
                theoretical_mean: mean,
                lower,
                upper,
                discrepancy: emp[d] - mean,
                inside: lower <= emp[d] && emp[d] <= upper,
                draws: vals.len(),
            });
        }
    }
    Ok(reports)
}

/// Method-of-moments estimate by grid search over one or two parameters:
/// minimizes `sum_i ((moment_i(theta) - target_i) / target_i)^2` over the
/// Cartesian product of `axes`. Returns the best point and its loss.
pub fn moment_grid_search<F>(axes: &[Vec<f64>], targets: &[f64], moments: F) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if axes.is_empty() || axes.len() > 2 {
        return Err(DppError::InvalidArgument("grid search takes one or two parameters".into()));
    }
    if axes.iter().any(Vec::is_empty) {
        return Err(DppError::Empty("grid axis has no values".into()));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let second: &[f64] = axes.get(1).map_or(&[f64::NAN], |a| a.as_slice());
    for &a in &axes[0] {
        for &b in second {
            let point = if axes.len() == 1 { vec![a] } else { vec![a, b] };
            let values = moments(&point)?;
            if values.len() != targets.len() {
                return Err(DppError::DimensionMismatch {
                    expected: targets.len(),
                    got: values.len(),
                });
            }
            let loss: f64 = values
                .iter()
                .zip(targets)
                .map(|(v, t)| ((v - t) / if *t != 0.0 { *t } else { 1.0 }).powi(2))
                .sum();
            if best.as_ref().is_none_or(|(_, l)| loss < *l) {
                best = Some((point, loss));
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}
