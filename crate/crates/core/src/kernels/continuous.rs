//! The continuous DPP kernel with Gaussian quality and Gaussian similarity,
//! whose operator spectrum is known in closed form.
//!
//! With `q(x) = sqrt(alpha) * prod_d (pi rho_d)^(-1/4) exp(-x_d^2 / (2 rho_d))`
//! and `k(x, y) = prod_d exp(-(x_d - y_d)^2 / (2 sigma_d))`, the kernel
//! `L = q k q` has trace `alpha` and tensor-product eigenvalues
//! `lambda_m = alpha * prod_d lead_d * ratio_d^(m_d - 1)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, DppError, Result};
use crate::spectral::{EigenTruncation, SpectrumKind};

/// Parameters `(alpha, rho_1..D, sigma_1..D)` of the continuous Gaussian
/// kernel. `rho` and `sigma` are squared length-scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTheta {
    pub alpha: f64,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianTheta {
    pub fn new(alpha: f64, rho: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_positive("alpha", alpha)?;
        if rho.is_empty() {
            return Err(DppError::InvalidArgument("dimension must be at least 1".into()));
        }
        if rho.len() != sigma.len() {
            return Err(DppError::DimensionMismatch {
                expected: rho.len(),
                got: sigma.len(),
            });
        }
        for (d, (&r, &s)) in rho.iter().zip(&sigma).enumerate() {
            check_positive(&format!("rho_{}", d + 1), r)?;
            check_positive(&format!("sigma_{}", d + 1), s)?;
        }
        Ok(Self { alpha, rho, sigma })
    }

    /// Same `rho` and `sigma` in every dimension.
    pub fn isotropic(alpha: f64, rho: f64, sigma: f64, dim: usize) -> Result<Self> {
        Self::new(alpha, vec![rho; dim], vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    /// Scale-free repulsion `gamma_d = sigma_d / rho_d`.
    pub fn gamma(&self, d: usize) -> f64 {
        self.sigma[d] / self.rho[d]
    }

    /// `beta_d = (1 + 2 / gamma_d)^(1/4)`.
    pub fn beta(&self, d: usize) -> f64 {
        (1.0 + 2.0 / self.gamma(d)).powf(0.25)
    }

    /// Leading factor and geometric ratio of the per-dimension spectrum:
    /// `lambda = alpha * prod_d lead_d * ratio_d^(m_d - 1)`.
    pub fn eigen_factors(&self, d: usize) -> (f64, f64) {
        let g = self.gamma(d);
        let b2 = self.beta(d).powi(2);
        let lead = (1.0 / ((b2 + 1.0) / 2.0 + 1.0 / (2.0 * g))).sqrt();
        let ratio = 1.0 / (g * (b2 + 1.0) + 1.0);
        (lead, ratio)
    }

    /// `log q(x)`.
    pub fn log_quality(&self, x: &[f64]) -> f64 {
        let mut v = 0.5 * self.alpha.ln();
        for (d, &xd) in x.iter().enumerate() {
            v -= 0.25 * (PI * self.rho[d]).ln() + xd * xd / (2.0 * self.rho[d]);
        }
        v
    }

    /// `L(x, y)`.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..self.dim() {
            let diff = x[d] - y[d];
            s -= diff * diff / (2.0 * self.sigma[d]);
        }
        (self.log_quality(x) + s + self.log_quality(y)).exp()
    }

    /// Kernel matrix restricted to a finite point set.
    pub fn kernel_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let lq: Vec<f64> = points.iter().map(|p| self.log_quality(p)).collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = (2.0 * lq[i]).exp();
            for j in 0..i {
                let mut s = 0.0;
                for d in 0..self.dim() {
                    let diff = points[i][d] - points[j][d];
                    s -= diff * diff / (2.0 * self.sigma[d]);
                }
                let v = (lq[i] + s + lq[j]).exp();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// One-dimensional factor of the kernel along axis `d`, without alpha:
    /// `(pi rho_d)^(-1/2) exp(-x^2/(2 rho_d) - (x-y)^2/(2 sigma_d) - y^2/(2 rho_d))`.
    pub fn axis_kernel(&self, d: usize, x: f64, y: f64) -> f64 {
        let r = self.rho[d];
        let s = self.sigma[d];
        (-(0.5) * (PI * r).ln() - x * x / (2.0 * r) - (x - y).powi(2) / (2.0 * s) - y * y / (2.0 * r))
            .exp()
    }
}

/// Multi-index `(m_1, .., m_D)` with every component at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(m: Vec<u32>) -> Result<Self> {
        if m.is_empty() || m.iter().any(|&v| v < 1) {
            return Err(DppError::InvalidArgument(format!(
                "multi-index components must be >= 1, got {m:?}"
            )));
        }
        Ok(Self(m))
    }

    pub fn ones(dim: usize) -> Self {
        Self(vec![1; dim])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

fn log_eigenvalue(m: &[u32], log_alpha: f64, factors: &[(f64, f64)]) -> f64 {
    let mut v = log_alpha;
    for (md, (log_lead, log_ratio)) in m.iter().zip(factors) {
        v += log_lead + (*md as f64 - 1.0) * log_ratio;
    }
    v
}

/// `lambda_m(theta)` for a single multi-index.
pub fn continuous_eigenvalue(m: &MultiIndex, theta: &GaussianTheta) -> Result<f64> {
    if m.0.len() != theta.dim() {
        return Err(DppError::DimensionMismatch {
            expected: theta.dim(),
            got: m.0.len(),
        });
    }
    let factors: Vec<(f64, f64)> = (0..theta.dim())
        .map(|d| {
            let (lead, ratio) = theta.eigen_factors(d);
            (lead.ln(), ratio.ln())
        })
        .collect();
    Ok(log_eigenvalue(&m.0, theta.alpha.ln(), &factors).exp())
}

/// `tr(L(theta)) = alpha`.
pub fn trace_gaussian(theta: &GaussianTheta) -> f64 {
    theta.alpha
}

#[derive(Debug, Clone)]
struct Node {
    log_value: f64,
    index: Vec<u32>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on value; ties broken towards the lexicographically
        // smallest index for a deterministic order.
        self.log_value
            .total_cmp(&other.log_value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Best-first enumeration of the Gaussian operator spectrum in
/// non-increasing order.
///
/// Every multi-index other than `(1, .., 1)` has a unique parent obtained by
/// decrementing its last component greater than one; since eigenvalues
/// decrease coordinate-wise, a parent is always popped before its children,
/// which makes the order exact without a bounding box.
#[derive(Debug, Clone)]
pub struct GaussianSpectrum {
    theta: GaussianTheta,
    log_alpha: f64,
    factors: Vec<(f64, f64)>,
    heap: BinaryHeap<Node>,
    values: Vec<f64>,
    indices: Vec<MultiIndex>,
    underflow: bool,
}

impl GaussianSpectrum {
    pub fn new(theta: &GaussianTheta) -> Self {
        let factors: Vec<(f64, f64)> = (0..theta.dim())
            .map(|d| {
                let (lead, ratio) = theta.eigen_factors(d);
                (lead.ln(), ratio.ln())
            })
            .collect();
        let log_alpha = theta.alpha.ln();
        let root = vec![1u32; theta.dim()];
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            log_value: log_eigenvalue(&root, log_alpha, &factors),
            index: root,
        });
        Self {
            theta: theta.clone(),
            log_alpha,
            factors,
            heap,
            values: Vec::new(),
            indices: Vec::new(),
            underflow: false,
        }
    }

    pub fn theta(&self) -> &GaussianTheta {
        &self.theta
    }

    /// True once the next eigenvalue would underflow double precision.
    pub fn underflowed(&self) -> bool {
        self.underflow
    }

    /// Make at least `count` eigenvalues available (fewer on underflow).
    pub fn ensure(&mut self, count: usize) {
        while self.values.len() < count && !self.underflow {
            let Some(node) = self.heap.pop() else {
                self.underflow = true;
                break;
            };
            let value = node.log_value.exp();
            if !(value >= f64::MIN_POSITIVE) {
                self.underflow = true;
                break;
            }
            let last = node.index.iter().rposition(|&v| v > 1).unwrap_or(0);
            for d in last..node.index.len() {
                let mut child = node.index.clone();
                child[d] += 1;
                self.heap.push(Node {
                    log_value: log_eigenvalue(&child, self.log_alpha, &self.factors),
                    index: child,
                });
            }
            self.values.push(value);
            self.indices.push(MultiIndex(node.index));
        }
    }

    /// The largest `count` eigenvalues (fewer on underflow).
    pub fn top(&mut self, count: usize) -> &[f64] {
        self.ensure(count);
        &self.values[..count.min(self.values.len())]
    }

    /// Eigenvalues together with their multi-indices.
    pub fn top_indexed(&mut self, count: usize) -> (&[f64], &[MultiIndex]) {
        self.ensure(count);
        let n = count.min(self.values.len());
        (&self.values[..n], &self.indices[..n])
    }
}

/// The `count` largest eigenvalues of the Gaussian operator with its trace.
/// When the spectrum underflows first, fewer values are returned; the actual
/// count is the length of the truncation.
pub fn enumerate_eigenvalues(theta: &GaussianTheta, count: usize) -> Result<EigenTruncation> {
    if count < 1 {
        return Err(DppError::InvalidArgument("eigenvalue count must be >= 1".into()));
    }
    let mut spectrum = GaussianSpectrum::new(theta);
    let values = spectrum.top(count).to_vec();
    if values.len() < count {
        log::warn!(
            "eigenvalue enumeration underflowed after {} of {count} values",
            values.len()
        );
    }
    Ok(EigenTruncation::new(values, theta.alpha, SpectrumKind::Continuous, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_between_neighbors_is_geometric() {
        let theta = GaussianTheta::new(3.0, vec![0.7, 2.0], vec![0.2, 1.5]).unwrap();
        let a = continuous_eigenvalue(&MultiIndex::new(vec![3, 2]).unwrap(), &theta).unwrap();
        let b = continuous_eigenvalue(&MultiIndex::new(vec![4, 2]).unwrap(), &theta).unwrap();
        let g = theta.gamma(0);
        let b2 = theta.beta(0).powi(2);
        let expected = 1.0 / (g * (b2 + 1.0) + 1.0);
        assert!((b / a - expected).abs() < 1e-13);
    }

    #[test]
    fn trace_is_alpha() {
        for (a, r, s) in [(1000.0, 1.0, 1.0), (100.0, 0.7, 0.05), (1.0, 1.0, 1.0)] {
            let theta = GaussianTheta::isotropic(a, r, s, 2).unwrap();
            assert_eq!(trace_gaussian(&theta), a);
        }
    }

    #[test]
    fn single_eigenvalue_is_the_corner() {
        let theta = GaussianTheta::isotropic(10.0, 1.0, 0.5, 3).unwrap();
        let t = enumerate_eigenvalues(&theta, 1).unwrap();
        let corner = continuous_eigenvalue(&MultiIndex::ones(3), &theta).unwrap();
        assert_eq!(t.lambdas(), &[corner]);
    }

    #[test]
    fn enumeration_matches_lattice_sweep() {
        let theta = GaussianTheta::isotropic(50.0, 1.0, 0.3, 2).unwrap();
        let mut brute = Vec::new();
        for i in 1..=40 {
            for j in 1..=40 {
                brute.push(continuous_eigenvalue(&MultiIndex::new(vec![i, j]).unwrap(), &theta).unwrap());
            }
        }
        brute.sort_by(|a, b| b.total_cmp(a));
        let t = enumerate_eigenvalues(&theta, 10).unwrap();
        for (a, b) in t.lambdas().iter().zip(&brute[..10]) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn enumerated_sum_stays_below_trace() {
        let theta = GaussianTheta::new(7.0, vec![0.5, 1.0, 2.0], vec![0.1, 3.0, 0.4]).unwrap();
        let t = enumerate_eigenvalues(&theta, 500).unwrap();
        let s: f64 = t.lambdas().iter().sum();
        assert!(s <= 7.0 * (1.0 + 1e-12));
        assert!(t.lambdas().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn underflow_truncates_count() {
        // Strong decay: ratio is tiny, so values underflow quickly in 1D.
        let theta = GaussianTheta::isotropic(1.0, 1e-6, 1e3, 1).unwrap();
        let t = enumerate_eigenvalues(&theta, 10_000).unwrap();
        assert!(t.len() < 10_000);
        assert!(t.lambdas().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianTheta::new(-1.0, vec![1.0], vec![1.0]).is_err());
        assert!(GaussianTheta::new(1.0, vec![1.0], vec![0.0]).is_err());
        assert!(GaussianTheta::new(1.0, vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(MultiIndex::new(vec![1, 0]).is_err());
    }

    #[test]
    fn kernel_diagonal_integrates_to_alpha() {
        // Midpoint quadrature of L(x, x) over a wide 1D box.
        let theta = GaussianTheta::isotropic(4.0, 0.8, 0.3, 1).unwrap();
        let h = 0.001;
        let total: f64 = (0..20_000)
            .map(|i| -10.0 + (i as f64 + 0.5) * h)
            .map(|x| theta.kernel(&[x], &[x]) * h)
            .sum();
        assert!((total - 4.0).abs() < 1e-9);
    }
}
