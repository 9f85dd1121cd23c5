//! Parametric DPP kernels.
//!
//! Discrete kernels are dense `N x N` matrices over a [`GroundSet`]; each
//! parametric family implements [`KernelFamily`], which also supplies the
//! derivative matrices used by the gradient code. The continuous Gaussian
//! kernel and its closed-form spectrum live in [`continuous`], elementary
//! symmetric polynomials in [`symmetric`].

pub mod continuous;
pub mod symmetric;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_positive, DppError, Result};
use crate::linalg;

pub use continuous::{
    continuous_eigenvalue, enumerate_eigenvalues, trace_gaussian, GaussianSpectrum, GaussianTheta,
    MultiIndex,
};
pub use symmetric::{
    elementary_symmetric, log_elementary_symmetric, log_elementary_symmetric_all, Esp,
};

fn check_vectors(vectors: &[Vec<f64>], dim: usize) -> Result<()> {
    for v in vectors {
        if v.len() != dim {
            return Err(DppError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DppError::InvalidArgument(format!(
                "non-finite coordinate in {v:?}"
            )));
        }
    }
    Ok(())
}

/// One observed point set in `R^D`. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl PointConfig {
    pub fn new(points: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(DppError::InvalidArgument("dimension must be at least 1".into()));
        }
        check_vectors(&points, dim)?;
        Ok(Self { points, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            points: Vec::new(),
            dim,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum_{x in A} x_d^m` for every dimension `d`.
    pub fn power_sums(&self, m: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for p in &self.points {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x.powi(m as i32);
            }
        }
        out
    }

    /// The same configuration with every coordinate multiplied by `eta`.
    pub fn scaled(&self, eta: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|x| x * eta).collect())
                .collect(),
            dim: self.dim,
        }
    }
}

/// A discrete base set `{x_1, .., x_N}` of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSet {
    items: Vec<Vec<f64>>,
    dim: usize,
}

impl GroundSet {
    pub fn new(items: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(DppError::Empty("ground set needs at least one item".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(DppError::InvalidArgument("items must have dimension >= 1".into()));
        }
        check_vectors(&items, dim)?;
        Ok(Self { items, dim })
    }

    /// Regular lattice with `points[d]` evenly spaced values from `lower[d]`
    /// to `upper[d]` (both included) along each axis; the last axis varies
    /// fastest.
    pub fn grid(lower: &[f64], upper: &[f64], points: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != points.len() || lower.is_empty() {
            return Err(DppError::InvalidArgument(
                "grid bounds and counts must share one non-zero dimension".into(),
            ));
        }
        if points.iter().any(|&p| p == 0) {
            return Err(DppError::InvalidArgument("grid needs >= 1 point per axis".into()));
        }
        let axes: Vec<Vec<f64>> = (0..lower.len())
            .map(|d| {
                let n = points[d];
                (0..n)
                    .map(|i| {
                        if n == 1 {
                            lower[d]
                        } else {
                            lower[d] + (upper[d] - lower[d]) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut items = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(items.len() * axis.len());
            for prefix in &items {
                for &v in axis {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            items = next;
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Index of the item equal to `x` within `tol` in every coordinate.
    pub fn find(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.items
            .iter()
            .position(|it| it.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }

    pub fn scaled(&self, eta: f64) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|p| p.iter().map(|x| x * eta).collect())
                .collect(),
            dim: self.dim,
        }
    }

    /// Copy with each item rescaled to unit Euclidean norm (zero vectors are
    /// left unchanged).
    pub fn l2_normalized(&self) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|v| {
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 0.0 {
                        v.iter().map(|x| x / n).collect()
                    } else {
                        v.clone()
                    }
                })
                .collect(),
            dim: self.dim,
        }
    }

    /// Per-axis squared differences `(x_il - x_jl)^2`.
    fn axis_sq_diffs(&self) -> Vec<DMatrix<f64>> {
        let n = self.len();
        (0..self.dim)
            .map(|l| DMatrix::from_fn(n, n, |i, j| (self.items[i][l] - self.items[j][l]).powi(2)))
            .collect()
    }
}

/// Diagonal quality and similarity matrices `Gamma`, `Sigma` of the discrete
/// Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGaussianTheta {
    pub gamma_diag: Vec<f64>,
    pub sigma_diag: Vec<f64>,
}

impl DiscreteGaussianTheta {
    pub fn new(gamma_diag: Vec<f64>, sigma_diag: Vec<f64>) -> Result<Self> {
        if gamma_diag.len() != sigma_diag.len() {
            return Err(DppError::DimensionMismatch {
                expected: gamma_diag.len(),
                got: sigma_diag.len(),
            });
        }
        for (l, (&g, &s)) in gamma_diag.iter().zip(&sigma_diag).enumerate() {
            check_positive(&format!("Gamma_{}", l + 1), g)?;
            check_positive(&format!("Sigma_{}", l + 1), s)?;
        }
        Ok(Self {
            gamma_diag,
            sigma_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma_diag.len()
    }
}

/// Offset and exponent of the polynomial kernel `(x.y + p)^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialTheta {
    pub p: f64,
    pub q: f64,
}

/// A dense symmetric kernel matrix over a ground set.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    ground: Arc<GroundSet>,
    matrix: DMatrix<f64>,
}

/// Relative symmetry tolerance of kernel matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_TOL * max eigenvalue` count as round-off.
pub const PSD_TOL: f64 = 1e-8;

impl DiscreteKernel {
    pub fn new(ground: Arc<GroundSet>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = ground.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(DppError::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        let scale = matrix.abs().max().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(DppError::InvalidArgument(format!(
                        "kernel matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(DppError::InvalidArgument("kernel matrix has non-finite entries".into()));
        }
        Ok(Self { ground, matrix })
    }

    /// Kernel matrix without an associated spatial ground set; items are
    /// identified by index only.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        let ground = GroundSet::new((0..n.max(1)).map(|i| vec![i as f64]).collect())?;
        if n == 0 {
            return Err(DppError::Empty("kernel matrix is empty".into()));
        }
        Self::new(Arc::new(ground), matrix)
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn ground_arc(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `L_A` for an index set `A`.
    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        linalg::submatrix(&self.matrix, idx)
    }

    /// Check the numerical PSD invariant; returns the sorted eigenvalues.
    pub fn validate_psd(&self) -> Result<Vec<f64>> {
        let eig = linalg::eigenvalues_desc(&self.matrix);
        let max = eig.first().copied().unwrap_or(0.0).max(0.0);
        let min = eig.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
            return Err(DppError::NotPositiveSemiDefinite {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        Ok(eig)
    }
}

/// `L_ij = q(x_i) k(x_i, x_j) q(x_j)` with
/// `q(x) = exp(-x' Gamma^-1 x / 2)` and
/// `k(x, y) = exp(-(x-y)' Sigma^-1 (x-y) / 2)`, both diagonal.
pub fn build_discrete_kernel(ground: &GroundSet, theta: &DiscreteGaussianTheta) -> Result<DiscreteKernel> {
    GaussianQualitySimilarity::new(Arc::new(ground.clone()))
        .kernel(&[theta.gamma_diag.clone(), theta.sigma_diag.clone()].concat())
}

/// `L_ij = exp(-sum_f ||f_i - f_j||^2 / sigma_f)` over feature blocks.
pub fn build_feature_kernel(blocks: &[GroundSet], sigmas: &[f64]) -> Result<DiscreteKernel> {
    let names: Vec<String> = (1..=blocks.len()).map(|i| format!("block{i}")).collect();
    FeatureKernel::new(blocks.to_vec(), names)?.kernel(sigmas)
}

/// `L_ij = (x_i . x_j + p)^q`, validated to be numerically PSD.
pub fn build_polynomial_kernel(ground: &GroundSet, theta: PolynomialTheta) -> Result<DiscreteKernel> {
    PolynomialKernel::new(Arc::new(ground.clone())).kernel(&[theta.p, theta.q])
}

/// How a parameter is mapped to an unconstrained coordinate for gradient
/// ascent and MCMC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `theta = exp(phi)`, for strictly positive parameters.
    Log,
    /// `theta = phi`, for real-valued parameters.
    Identity,
}

impl Transform {
    pub fn forward(self, theta: f64) -> f64 {
        match self {
            Transform::Log => theta.ln(),
            Transform::Identity => theta,
        }
    }

    pub fn inverse(self, phi: f64) -> f64 {
        match self {
            Transform::Log => phi.exp(),
            Transform::Identity => phi,
        }
    }

    /// `d theta / d phi` at `theta`.
    pub fn jacobian(self, theta: f64) -> f64 {
        match self {
            Transform::Log => theta,
            Transform::Identity => 1.0,
        }
    }
}

/// A parametric family of discrete kernels over a fixed ground set.
pub trait KernelFamily: Send + Sync + std::fmt::Debug {
    fn param_names(&self) -> Vec<String>;

    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Log; self.param_names().len()]
    }

    fn ground(&self) -> &Arc<GroundSet>;

    fn size(&self) -> usize {
        self.ground().len()
    }

    fn kernel(&self, params: &[f64]) -> Result<DiscreteKernel>;

    /// `dL / d params[which]` evaluated at `params`, where `kernel` is the
    /// kernel at the same parameters.
    fn derivative(&self, params: &[f64], kernel: &DiscreteKernel, which: usize) -> Result<DMatrix<f64>>;

    fn check_params(&self, params: &[f64]) -> Result<()> {
        let names = self.param_names();
        if params.len() != names.len() {
            return Err(DppError::DimensionMismatch {
                expected: names.len(),
                got: params.len(),
            });
        }
        for ((name, &v), t) in names.iter().zip(params).zip(self.transforms()) {
            match t {
                Transform::Log => check_positive(name, v)?,
                Transform::Identity => {
                    if !v.is_finite() {
                        return Err(DppError::InvalidArgument(format!("{name} is not finite")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Gaussian quality and Gaussian similarity with diagonal `Gamma`, `Sigma`.
/// Parameters: `Gamma1..D, Sigma1..D`.
#[derive(Debug, Clone)]
pub struct GaussianQualitySimilarity {
    ground: Arc<GroundSet>,
    sq_diffs: Vec<DMatrix<f64>>,
}

impl GaussianQualitySimilarity {
    pub fn new(ground: Arc<GroundSet>) -> Self {
        let sq_diffs = ground.axis_sq_diffs();
        Self { ground, sq_diffs }
    }
}

impl KernelFamily for GaussianQualitySimilarity {
    fn param_names(&self) -> Vec<String> {
        let d = self.ground.dim();
        (1..=d)
            .map(|l| format!("Gamma{l}"))
            .chain((1..=d).map(|l| format!("Sigma{l}")))
            .collect()
    }

    fn ground(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    fn kernel(&self, params: &[f64]) -> Result<DiscreteKernel> {
        self.check_params(params)?;
        let d = self.ground.dim();
        let (gamma, sigma) = params.split_at(d);
        let items = self.ground.items();
        let log_q: Vec<f64> = items
            .iter()
            .map(|x| -0.5 * x.iter().zip(gamma).map(|(v, g)| v * v / g).sum::<f64>())
            .collect();
        let n = items.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let mut e = log_q[i] + log_q[j];
                for (l, s) in sigma.iter().enumerate() {
                    e -= 0.5 * self.sq_diffs[l][(i, j)] / s;
                }
                let v = e.exp();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DiscreteKernel::new(self.ground.clone(), m)
    }

    fn derivative(&self, params: &[f64], kernel: &DiscreteKernel, which: usize) -> Result<DMatrix<f64>> {
        self.check_params(params)?;
        let d = self.ground.dim();
        let l = kernel.matrix();
        let n = l.nrows();
        if which < d {
            // C_ij = L_ij (x_il^2 + x_jl^2) / (2 Gamma_l^2)
            let g = params[which];
            let items = self.ground.items();
            Ok(DMatrix::from_fn(n, n, |i, j| {
                l[(i, j)] * (items[i][which].powi(2) + items[j][which].powi(2)) / (2.0 * g * g)
            }))
        } else if which < 2 * d {
            // G_ij = L_ij (x_il - x_jl)^2 / (2 Sigma_l^2)
            let axis = which - d;
            let s = params[which];
            Ok(l.component_mul(&self.sq_diffs[axis]) / (2.0 * s * s))
        } else {
            Err(DppError::InvalidArgument(format!("no parameter {which}")))
        }
    }
}

/// Gaussian similarity with uniform quality, diagonal `Sigma`.
/// Parameters: `Sigma1..D`.
#[derive(Debug, Clone)]
pub struct GaussianSimilarity {
    ground: Arc<GroundSet>,
    sq_diffs: Vec<DMatrix<f64>>,
}

impl GaussianSimilarity {
    pub fn new(ground: Arc<GroundSet>) -> Self {
        let sq_diffs = ground.axis_sq_diffs();
        Self { ground, sq_diffs }
    }
}

impl KernelFamily for GaussianSimilarity {
    fn param_names(&self) -> Vec<String> {
        (1..=self.ground.dim()).map(|l| format!("Sigma{l}")).collect()
    }

    fn ground(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    fn kernel(&self, params: &[f64]) -> Result<DiscreteKernel> {
        self.check_params(params)?;
        let n = self.ground.len();
        let mut e = DMatrix::zeros(n, n);
        for (l, s) in params.iter().enumerate() {
            e -= &self.sq_diffs[l] * (0.5 / s);
        }
        DiscreteKernel::new(self.ground.clone(), e.map(f64::exp))
    }

    fn derivative(&self, params: &[f64], kernel: &DiscreteKernel, which: usize) -> Result<DMatrix<f64>> {
        self.check_params(params)?;
        let s = *params
            .get(which)
            .ok_or_else(|| DppError::InvalidArgument(format!("no parameter {which}")))?;
        Ok(kernel.matrix().component_mul(&self.sq_diffs[which]) / (2.0 * s * s))
    }
}

/// Polynomial similarity with uniform quality, `(x.y + p)^q`.
/// Parameters: `p` (real), `q` (positive).
#[derive(Debug, Clone)]
pub struct PolynomialKernel {
    ground: Arc<GroundSet>,
    gram: DMatrix<f64>,
}

impl PolynomialKernel {
    pub fn new(ground: Arc<GroundSet>) -> Self {
        let items = ground.items();
        let n = items.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            items[i].iter().zip(&items[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        Self { ground, gram }
    }

    fn base(&self, p: f64) -> DMatrix<f64> {
        self.gram.add_scalar(p)
    }
}

fn real_power(base: f64, q: f64) -> f64 {
    if base >= 0.0 {
        base.powf(q)
    } else if q.fract() == 0.0 {
        base.powi(q as i32)
    } else {
        f64::NAN
    }
}

impl KernelFamily for PolynomialKernel {
    fn param_names(&self) -> Vec<String> {
        vec!["p".into(), "q".into()]
    }

    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity, Transform::Log]
    }

    fn ground(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    fn kernel(&self, params: &[f64]) -> Result<DiscreteKernel> {
        self.check_params(params)?;
        let (p, q) = (params[0], params[1]);
        let m = self.base(p).map(|b| real_power(b, q));
        if m.iter().any(|v| v.is_nan()) {
            return Err(DppError::InvalidArgument(format!(
                "(x.y + {p})^{q} is undefined for negative bases with non-integer q"
            )));
        }
        let kernel = DiscreteKernel::new(self.ground.clone(), m)?;
        // Integer powers of a PSD Gram matrix plus a non-negative offset are
        // PSD entrywise products; anything else needs the eigenvalue check.
        if p < 0.0 || q.fract() != 0.0 {
            kernel.validate_psd()?;
        }
        Ok(kernel)
    }

    fn derivative(&self, params: &[f64], kernel: &DiscreteKernel, which: usize) -> Result<DMatrix<f64>> {
        self.check_params(params)?;
        let (p, q) = (params[0], params[1]);
        let base = self.base(p);
        match which {
            // R_ij = q (x.y + p)^(q-1) = q L_ij^((q-1)/q)
            0 => Ok(base.map(|b| q * real_power(b, q - 1.0))),
            // U_ij = L_ij log(x.y + p) = L_ij log(L_ij^(1/q))
            1 => {
                if base.iter().any(|&b| b <= 0.0) {
                    return Err(DppError::InvalidArgument(
                        "q-derivative needs x.y + p > 0 for all pairs".into(),
                    ));
                }
                Ok(kernel.matrix().zip_map(&base, |l, b| l * b.ln()))
            }
            _ => Err(DppError::InvalidArgument(format!("no parameter {which}"))),
        }
    }
}

/// Multi-block feature kernel `exp(-sum_f ||f_i - f_j||^2 / sigma_f)`.
/// Parameters: one `sigma_<block>` per feature block.
#[derive(Debug, Clone)]
pub struct FeatureKernel {
    ground: Arc<GroundSet>,
    names: Vec<String>,
    sq_dists: Vec<DMatrix<f64>>,
}

impl FeatureKernel {
    /// `blocks[f]` holds the block-`f` feature vector of every item, in the
    /// same item order.
    pub fn new(blocks: Vec<GroundSet>, names: Vec<String>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(DppError::Empty("at least one feature block required".into()));
        };
        if names.len() != blocks.len() {
            return Err(DppError::DimensionMismatch {
                expected: blocks.len(),
                got: names.len(),
            });
        }
        let n = first.len();
        for b in &blocks {
            if b.len() != n {
                return Err(DppError::InvalidArgument(format!(
                    "feature block has {} items, expected {n}",
                    b.len()
                )));
            }
        }
        let sq_dists = blocks
            .iter()
            .map(|b| {
                let it = b.items();
                DMatrix::from_fn(n, n, |i, j| {
                    it[i].iter().zip(&it[j]).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
                })
            })
            .collect();
        let items: Vec<Vec<f64>> = (0..n)
            .map(|i| blocks.iter().flat_map(|b| b.items()[i].iter().copied()).collect())
            .collect();
        Ok(Self {
            ground: Arc::new(GroundSet::new(items)?),
            names,
            sq_dists,
        })
    }

    pub fn block_names(&self) -> &[String] {
        &self.names
    }
}

impl KernelFamily for FeatureKernel {
    fn param_names(&self) -> Vec<String> {
        self.names.iter().map(|n| format!("sigma_{n}")).collect()
    }

    fn ground(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    fn kernel(&self, params: &[f64]) -> Result<DiscreteKernel> {
        self.check_params(params)?;
        let n = self.ground.len();
        let mut e = DMatrix::zeros(n, n);
        for (d, s) in self.sq_dists.iter().zip(params) {
            e -= d / *s;
        }
        DiscreteKernel::new(self.ground.clone(), e.map(f64::exp))
    }

    fn derivative(&self, params: &[f64], kernel: &DiscreteKernel, which: usize) -> Result<DMatrix<f64>> {
        self.check_params(params)?;
        let s = *params
            .get(which)
            .ok_or_else(|| DppError::InvalidArgument(format!("no parameter {which}")))?;
        Ok(kernel.matrix().component_mul(&self.sq_dists[which]) / (s * s))
    }
}
