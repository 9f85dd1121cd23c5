//! Exact spectral samplers for discrete DPPs and k-DPPs, and approximate
//! continuous sampling on a fine grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, DppError, Result};
use crate::kernels::symmetric::log_elementary_symmetric_table;
use crate::kernels::{DiscreteKernel, GaussianTheta, PointConfig};
use crate::linalg;
use crate::mcmc::chain_rng;

/// Pick items from an orthonormal basis `v` (columns) of the selected
/// eigenvectors: each round draws item `i` with probability
/// `sum_j v_ij^2 / |J|`, then projects `e_i` out of the basis.
fn select_items<R: Rng>(mut v: DMatrix<f64>, rng: &mut R) -> Vec<usize> {
    let mut items = Vec::with_capacity(v.ncols());
    while v.ncols() > 0 {
        let k = v.ncols() as f64;
        let weights: Vec<f64> = v.row_iter().map(|r| r.norm_squared() / k).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                chosen = i;
                break;
            }
            u -= w;
        }
        items.push(chosen);
        // Column with the largest weight on the chosen item carries the
        // elimination.
        let (pivot, _) = v
            .row(chosen)
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (j, &x)| if x.abs() > acc.1 { (j, x.abs()) } else { acc });
        let col = v.column(pivot).clone_owned();
        let scale = col[chosen];
        for j in 0..v.ncols() {
            if j != pivot {
                let f = v[(chosen, j)] / scale;
                let mut c = v.column_mut(j);
                c.axpy(-f, &col, 1.0);
            }
        }
        v = v.remove_column(pivot);
        orthonormalize(&mut v);
    }
    items.sort_unstable();
    items
}

/// Modified Gram-Schmidt on the columns.
fn orthonormalize(v: &mut DMatrix<f64>) {
    for j in 0..v.ncols() {
        for i in 0..j {
            let qi = v.column(i).clone_owned();
            let r = qi.dot(&v.column(j));
            v.column_mut(j).axpy(-r, &qi, 1.0);
        }
        let n = v.column(j).norm();
        if n > 0.0 {
            v.column_mut(j).unscale_mut(n);
        }
    }
}

/// Indices of eigenpairs kept by a k-DPP draw: walking down from the last
/// eigenvalue, item `n` joins with probability
/// `lambda_n e_(l-1)(lambda_1..n-1) / e_l(lambda_1..n)`.
fn kdpp_eigen_selection<R: Rng>(lambdas: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let table = log_elementary_symmetric_table(lambdas, k);
    let mut chosen = Vec::with_capacity(k);
    let mut remaining = k;
    for n in (1..=lambdas.len()).rev() {
        if remaining == 0 {
            break;
        }
        if n == remaining {
            chosen.extend(0..n);
            break;
        }
        let l = lambdas[n - 1].max(0.0);
        let log_p = if l > 0.0 {
            l.ln() + table[n - 1][remaining - 1] - table[n][remaining]
        } else {
            f64::NEG_INFINITY
        };
        if rng.random::<f64>().ln() < log_p {
            chosen.push(n - 1);
            remaining -= 1;
        }
    }
    chosen
}

/// Eigendecomposition of a discrete kernel, reusable across draws.
#[derive(Debug, Clone)]
pub struct DppSampler {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl DppSampler {
    pub fn new(kernel: &DiscreteKernel) -> Self {
        let (mut values, vectors) = linalg::eigen_desc(kernel.matrix());
        for v in &mut values {
            *v = v.max(0.0);
        }
        Self { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// `tr K = sum lambda / (1 + lambda)`.
    pub fn expected_cardinality(&self) -> f64 {
        self.values.iter().map(|l| l / (1.0 + l)).sum()
    }

    fn basis(&self, cols: &[usize]) -> DMatrix<f64> {
        self.vectors.select_columns(cols)
    }

    /// One exact DPP draw: eigenvector `n` is kept with probability
    /// `lambda_n / (1 + lambda_n)`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let cols: Vec<usize> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, &l)| rng.random::<f64>() < l / (1.0 + l))
            .map(|(i, _)| i)
            .collect();
        select_items(self.basis(&cols), rng)
    }

    /// One exact k-DPP draw.
    pub fn sample_k<R: Rng>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        if k > self.len() {
            return Err(DppError::InvalidArgument(format!(
                "k = {k} exceeds the ground set size {}",
                self.len()
            )));
        }
        let positive = self.values.iter().filter(|&&l| l > 0.0).count();
        if k > positive {
            return Err(DppError::InvalidArgument(format!(
                "kernel has rank {positive}, below k = {k}"
            )));
        }
        let cols = kdpp_eigen_selection(&self.values, k, rng);
        Ok(select_items(self.basis(&cols), rng))
    }
}

/// One exact DPP draw from `kernel` (indices into the ground set).
pub fn sample_dpp(kernel: &DiscreteKernel, seed: u64) -> Vec<usize> {
    DppSampler::new(kernel).sample(&mut chain_rng(seed))
}

/// One exact k-DPP draw from `kernel`.
pub fn sample_kdpp(kernel: &DiscreteKernel, k: usize, seed: u64) -> Result<Vec<usize>> {
    DppSampler::new(kernel).sample_k(k, &mut chain_rng(seed))
}

/// Axis-aligned box split into `points[d]` equal cells per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != points.len() {
            return Err(DppError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len().min(points.len()),
            });
        }
        if lower.is_empty() {
            return Err(DppError::InvalidArgument("grid needs at least one dimension".into()));
        }
        for d in 0..lower.len() {
            if !(upper[d] > lower[d]) || points[d] == 0 {
                return Err(DppError::InvalidArgument(format!("degenerate grid axis {d}")));
            }
        }
        Ok(Self { lower, upper, points })
    }

    /// Symmetric box `[-half_width, half_width]^D` with cells of side at
    /// most `spacing`.
    pub fn centered(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        check_positive("half width", half_width)?;
        check_positive("spacing", spacing)?;
        let n = (2.0 * half_width / spacing).ceil() as usize;
        Self::new(vec![-half_width; dim], vec![half_width; dim], vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        (self.upper[d] - self.lower[d]) / self.points[d] as f64
    }

    pub fn center(&self, d: usize, i: usize) -> f64 {
        self.lower[d] + (i as f64 + 0.5) * self.spacing(d)
    }

    pub fn cell_count(&self) -> usize {
        self.points.iter().product()
    }
}

/// Share of the squared-quality mass `q(x)^2 / alpha` that falls in the box.
pub fn quality_mass_in_box(theta: &GaussianTheta, grid: &GridSpec) -> f64 {
    use statrs::function::erf::erf;
    (0..theta.dim())
        .map(|d| {
            // q^2 along axis d is a normal density with variance rho / 2.
            let s = theta.rho[d].sqrt();
            0.5 * (erf(grid.upper[d] / s) - erf(grid.lower[d] / s))
        })
        .product()
}

/// Minimum covered quality mass of a grid.
pub const GRID_MIN_COVERAGE: f64 = 1.0 - 1e-4;

/// Continuous DPP sampler on a grid discretization: the kernel is
/// evaluated at cell centers and weighted by cell volume, which makes it a
/// Kronecker product of per-axis matrices.
#[derive(Debug, Clone)]
pub struct GridDppSampler {
    grid: GridSpec,
    axis_values: Vec<Vec<f64>>,
    axis_vectors: Vec<DMatrix<f64>>,
    alpha: f64,
}

impl GridDppSampler {
    /// Fails when the box misses more than `1e-4` of the quality mass or
    /// a cell is wider than `sqrt(sigma_d) / 3`.
    pub fn new(theta: &GaussianTheta, grid: GridSpec) -> Result<Self> {
        if grid.dim() != theta.dim() {
            return Err(DppError::DimensionMismatch {
                expected: theta.dim(),
                got: grid.dim(),
            });
        }
        let coverage = quality_mass_in_box(theta, &grid);
        if coverage < GRID_MIN_COVERAGE {
            return Err(DppError::InvalidArgument(format!(
                "grid box covers only {coverage:.6} of the quality mass"
            )));
        }
        let max_h = theta.sigma.iter().fold(f64::INFINITY, |a, s| a.min(s.sqrt())) / 3.0;
        for d in 0..grid.dim() {
            if grid.spacing(d) > max_h {
                return Err(DppError::InvalidArgument(format!(
                    "grid spacing {} on axis {d} exceeds {max_h}",
                    grid.spacing(d)
                )));
            }
        }
        let mut axis_values = Vec::with_capacity(grid.dim());
        let mut axis_vectors = Vec::with_capacity(grid.dim());
        for d in 0..grid.dim() {
            let n = grid.points[d];
            let h = grid.spacing(d);
            let m = DMatrix::from_fn(n, n, |i, j| h * theta.axis_kernel(d, grid.center(d, i), grid.center(d, j)));
            let (vals, vecs) = linalg::eigen_desc(&m);
            axis_values.push(vals.into_iter().map(|v| v.max(0.0)).collect());
            axis_vectors.push(vecs);
        }
        Ok(Self {
            grid,
            axis_values,
            axis_vectors,
            alpha: theta.alpha,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Multi-index of a flat index, last axis fastest.
    fn unflatten(&self, mut flat: usize, sizes: &[usize]) -> Vec<usize> {
        let mut idx = vec![0; sizes.len()];
        for d in (0..sizes.len()).rev() {
            idx[d] = flat % sizes[d];
            flat /= sizes[d];
        }
        idx
    }

    fn eigen_sizes(&self) -> Vec<usize> {
        self.axis_values.iter().map(Vec::len).collect()
    }

    fn eigenvalue(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .fold(self.alpha, |acc, (d, &a)| acc * self.axis_values[d][a])
    }

    /// All grid-kernel eigenvalues (unsorted).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sizes = self.eigen_sizes();
        let total: usize = sizes.iter().product();
        (0..total).map(|f| self.eigenvalue(&self.unflatten(f, &sizes))).collect()
    }

    pub fn expected_cardinality(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l / (1.0 + l)).sum()
    }

    /// Cell centers in flat order (last axis fastest).
    pub fn cell_centers(&self) -> Vec<Vec<f64>> {
        (0..self.grid.cell_count())
            .map(|cell| {
                let c = self.unflatten(cell, &self.grid.points);
                c.iter().enumerate().map(|(d, &i)| self.grid.center(d, i)).collect()
            })
            .collect()
    }

    /// Inclusion probability of every cell, the diagonal of the grid
    /// marginal kernel.
    pub fn cell_inclusion(&self) -> Vec<f64> {
        let sizes = self.eigen_sizes();
        let total: usize = sizes.iter().product();
        let mut out = vec![0.0; self.grid.cell_count()];
        for f in 0..total {
            let idx = self.unflatten(f, &sizes);
            let l = self.eigenvalue(&idx);
            let w = l / (1.0 + l);
            if w < 1e-300 {
                continue;
            }
            let v = self.eigenvector(&idx);
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += w * x * x;
            }
        }
        out
    }

    fn eigenvector(&self, idx: &[usize]) -> DVector<f64> {
        let n = self.grid.cell_count();
        DVector::from_fn(n, |cell, _| {
            let c = self.unflatten(cell, &self.grid.points);
            c.iter()
                .enumerate()
                .map(|(d, &i)| self.axis_vectors[d][(i, idx[d])])
                .product()
        })
    }

    /// One draw; cell centers are jittered uniformly within their cell.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> PointConfig {
        let sizes = self.eigen_sizes();
        let total: usize = sizes.iter().product();
        let mut kept = Vec::new();
        for f in 0..total {
            let idx = self.unflatten(f, &sizes);
            let l = self.eigenvalue(&idx);
            if rng.random::<f64>() < l / (1.0 + l) {
                kept.push(idx);
            }
        }
        let mut v = DMatrix::zeros(self.grid.cell_count(), kept.len());
        for (j, idx) in kept.iter().enumerate() {
            v.set_column(j, &self.eigenvector(idx));
        }
        let cells = select_items(v, rng);
        let points = cells
            .into_iter()
            .map(|cell| {
                let c = self.unflatten(cell, &self.grid.points);
                c.iter()
                    .enumerate()
                    .map(|(d, &i)| self.grid.center(d, i) + (rng.random::<f64>() - 0.5) * self.grid.spacing(d))
                    .collect()
            })
            .collect();
        PointConfig::new(points, self.grid.dim()).expect("grid points have the grid dimension")
    }
}

/// One approximate continuous DPP draw via grid discretization.
pub fn sample_continuous_via_grid(theta: &GaussianTheta, grid: GridSpec, seed: u64) -> Result<PointConfig> {
    Ok(GridDppSampler::new(theta, grid)?.sample(&mut chain_rng(seed)))
}
