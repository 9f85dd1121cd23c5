//! Dense linear algebra helpers shared by the kernel, likelihood and sampling
//! code: jittered Cholesky log-determinants, sorted symmetric
//! eigendecompositions and a Lanczos partial eigensolver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DppError, Result};

/// Relative size of the first jitter attempt (times the mean diagonal).
pub const JITTER_START: f64 = 1e-10;
/// Number of jittered retries after a failed plain factorization.
pub const JITTER_RETRIES: usize = 3;
/// Growth factor of the jitter between retries.
pub const JITTER_GROWTH: f64 = 10.0;

/// Cholesky factorization with the jitter fallback: on failure,
/// `1e-10 * mean(diag)` is added to the diagonal and the jitter grows by 10x
/// for up to three retries. Returns the factor and the jitter that was used.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let n = m.nrows();
    let mean_diag = if n == 0 { 0.0 } else { m.diagonal().sum() / n as f64 };
    let mut jitter = JITTER_START * mean_diag.abs().max(f64::MIN_POSITIVE);
    for _ in 0..JITTER_RETRIES {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            log::debug!("cholesky succeeded with jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= JITTER_GROWTH;
    }
    Err(DppError::Factorization(format!(
        "{n}x{n} matrix not positive definite after {JITTER_RETRIES} jittered retries \
         (mean diagonal {mean_diag:e})"
    )))
}

/// Log-determinant of a symmetric positive definite matrix. The empty matrix
/// has determinant one.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let (c, _) = cholesky_jittered(m)?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix (jitter policy applies).
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (c, _) = cholesky_jittered(m)?;
    let inv = c.inverse();
    Ok(symmetrize(&inv))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Rows and columns of `m` indexed by `idx`, in the given order.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Eigenvalues of a symmetric matrix in non-increasing order.
pub fn eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Eigenpairs of a symmetric matrix sorted by non-increasing eigenvalue.
/// Column `i` of the returned matrix is the eigenvector of value `i`.
pub fn eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Incremental Lanczos iteration with full reorthogonalization.
///
/// The Krylov basis is grown on demand from a fixed start vector, so Ritz
/// values for a larger basis interlace those of a smaller one: the i-th
/// largest Ritz value never decreases as the basis grows, and never exceeds
/// the i-th largest eigenvalue of the matrix.
#[derive(Debug, Clone)]
pub struct Lanczos {
    basis: Vec<DVector<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    residual: Option<DVector<f64>>,
    exhausted: bool,
}

impl Lanczos {
    pub fn new(n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_205);
        let mut start = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let norm = start.norm();
        if norm > 0.0 {
            start /= norm;
        }
        Self {
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            residual: Some(start),
            exhausted: n == 0,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// True once the Krylov space became invariant (no further growth).
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Grow the basis to `target` vectors (or until breakdown).
    pub fn extend(&mut self, m: &DMatrix<f64>, target: usize) {
        let target = target.min(m.nrows());
        while self.basis.len() < target && !self.exhausted {
            let q = match self.residual.take() {
                Some(r) => {
                    let norm = r.norm();
                    if !self.basis.is_empty() {
                        self.beta.push(norm);
                    }
                    if norm <= 1e-12 * self.scale().max(f64::MIN_POSITIVE) {
                        self.exhausted = true;
                        if !self.basis.is_empty() {
                            self.beta.pop();
                        }
                        break;
                    }
                    r / norm
                }
                None => {
                    self.exhausted = true;
                    break;
                }
            };
            let mut w = m * &q;
            let a = q.dot(&w);
            self.alpha.push(a);
            self.basis.push(q);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for b in &self.basis {
                    let c = b.dot(&w);
                    w.axpy(-c, b, 1.0);
                }
            }
            self.residual = Some(w);
        }
    }

    fn scale(&self) -> f64 {
        self.alpha.iter().fold(0.0f64, |acc, a| acc.max(a.abs()))
    }

    /// Ritz values of the current basis in non-increasing order.
    pub fn ritz_values(&self) -> Vec<f64> {
        let k = self.alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                self.alpha[i]
            } else if i + 1 == j {
                self.beta[i]
            } else if j + 1 == i {
                self.beta[j]
            } else {
                0.0
            }
        });
        eigenvalues_desc(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose()
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let m = random_psd(12, 3) + DMatrix::identity(12, 12);
        let from_eig: f64 = eigenvalues_desc(&m).iter().map(|v| v.ln()).sum();
        assert!((log_det_spd(&m).unwrap() - from_eig).abs() < 1e-10);
    }

    #[test]
    fn empty_determinant_is_one() {
        assert_eq!(log_det_spd(&DMatrix::zeros(0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn jitter_rescues_rank_deficient_matrix() {
        // Two identical rows: singular, but the jitter makes it factorizable.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, jitter) = cholesky_jittered(&m).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_jittered(&m).is_err());
    }

    #[test]
    fn eigen_desc_is_sorted_and_reconstructs() {
        let m = random_psd(7, 9);
        let (vals, vecs) = eigen_desc(&m);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!((rebuilt - m).abs().max() < 1e-10);
    }

    #[test]
    fn lanczos_ritz_values_interlace_from_below() {
        let m = random_psd(80, 1);
        let exact = eigenvalues_desc(&m);
        let mut lz = Lanczos::new(80);
        let mut previous: Vec<f64> = Vec::new();
        for target in [5, 10, 20, 40, 80] {
            lz.extend(&m, target);
            let ritz = lz.ritz_values();
            for (i, r) in ritz.iter().enumerate() {
                assert!(*r <= exact[i] + 1e-9 * exact[0]);
                if i < previous.len() {
                    assert!(*r >= previous[i] - 1e-9 * exact[0]);
                }
            }
            previous = ritz;
        }
        for (r, e) in previous.iter().zip(&exact) {
            assert!((r - e).abs() < 1e-8 * exact[0]);
        }
    }
}
