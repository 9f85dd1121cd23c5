//! Conditional k-DPPs: the distribution of the completion `B` of a set `A`
//! that is known to be part of the draw.
//!
//! Conditioning a DPP with kernel `L` on `A ⊆ Y` gives a DPP over the
//! complement of `A` with kernel
//! `L^A = ([(L + I_{A^c})^{-1}]_{A^c})^{-1} - I`, which equals the Schur
//! complement `L_{A^c} - L_{A^c,A} L_A^{-1} L_{A,A^c}`.

use nalgebra::DMatrix;

use crate::error::{DppError, Result};
use crate::kernels::symmetric::log_elementary_symmetric;
use crate::linalg;

fn complement(n: usize, given: &[usize]) -> Result<Vec<usize>> {
    let mut in_a = vec![false; n];
    for &a in given {
        if a >= n {
            return Err(DppError::InvalidArgument(format!("item {a} outside ground set of size {n}")));
        }
        if in_a[a] {
            return Err(DppError::InvalidArgument(format!("item {a} repeated in conditioning set")));
        }
        in_a[a] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
    if rest.is_empty() {
        return Err(DppError::Empty("conditioning set covers the whole ground set".into()));
    }
    Ok(rest)
}

/// `L^A` via the double-inverse form, together with the complement indices
/// that label its rows.
pub fn conditional_kernel(l: &DMatrix<f64>, given: &[usize]) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = l.nrows();
    let rest = complement(n, given)?;
    let mut shifted = l.clone();
    for &i in &rest {
        shifted[(i, i)] += 1.0;
    }
    let inv = linalg::spd_inverse(&shifted).map_err(|e| {
        DppError::Factorization(format!("L + I_(A^c) with |A| = {}: {e}", given.len()))
    })?;
    let sub = linalg::submatrix(&inv, &rest);
    let mut out = linalg::spd_inverse(&sub).map_err(|e| {
        DppError::Factorization(format!("complement block of (L + I_(A^c))^-1: {e}"))
    })?;
    for i in 0..rest.len() {
        out[(i, i)] -= 1.0;
    }
    Ok((linalg::symmetrize(&out), rest))
}

/// `L^A` as the Schur complement of `L_A`.
pub fn conditional_kernel_schur(l: &DMatrix<f64>, given: &[usize]) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let rest = complement(l.nrows(), given)?;
    let l_rest = linalg::submatrix(l, &rest);
    if given.is_empty() {
        return Ok((l_rest, rest));
    }
    let l_a = linalg::submatrix(l, given);
    let cross = DMatrix::from_fn(given.len(), rest.len(), |i, j| l[(given[i], rest[j])]);
    let (chol, _) = linalg::cholesky_jittered(&l_a)
        .map_err(|e| DppError::Factorization(format!("L_A with |A| = {}: {e}", given.len())))?;
    let solved = chol.l().solve_lower_triangular(&cross).ok_or_else(|| {
        DppError::Factorization("triangular solve against L_A failed".into())
    })?;
    let out = l_rest - solved.transpose() * solved;
    Ok((linalg::symmetrize(&out), rest))
}

/// Diagonal of `L^A` over the complement of `A` (complement order).
pub fn conditional_diagonal(l: &DMatrix<f64>, given: &[usize]) -> Result<(Vec<f64>, Vec<usize>)> {
    let rest = complement(l.nrows(), given)?;
    if given.is_empty() {
        return Ok((rest.iter().map(|&i| l[(i, i)]).collect(), rest));
    }
    let l_a = linalg::submatrix(l, given);
    let (chol, _) = linalg::cholesky_jittered(&l_a)
        .map_err(|e| DppError::Factorization(format!("L_A with |A| = {}: {e}", given.len())))?;
    let cross = DMatrix::from_fn(given.len(), rest.len(), |i, j| l[(given[i], rest[j])]);
    let solved = chol.l().solve_lower_triangular(&cross).ok_or_else(|| {
        DppError::Factorization("triangular solve against L_A failed".into())
    })?;
    let diag = rest
        .iter()
        .enumerate()
        .map(|(j, &i)| (l[(i, i)] - solved.column(j).norm_squared()).max(0.0))
        .collect();
    Ok((diag, rest))
}

/// `log P(Y = A ∪ B | A ⊆ Y, |Y| = |A| + |B|)`.
///
/// A single added item uses `L^A_bb / sum_{b' not in A} L^A_b'b'`; larger
/// completions normalize by `e_|B|` of the eigenvalues of `L^A`.
pub fn conditional_log_prob(l: &DMatrix<f64>, given: &[usize], added: &[usize]) -> Result<f64> {
    if added.is_empty() {
        return Err(DppError::Empty("no added items".into()));
    }
    for b in added {
        if given.contains(b) {
            return Err(DppError::InvalidArgument(format!("added item {b} is already in the conditioning set")));
        }
    }
    if let [b] = added {
        let (diag, rest) = conditional_diagonal(l, given)?;
        let pos = rest
            .iter()
            .position(|i| i == b)
            .ok_or_else(|| DppError::InvalidArgument(format!("added item {b} outside ground set")))?;
        let total: f64 = diag.iter().sum();
        return Ok(diag[pos].ln() - total.ln());
    }
    let (la, rest) = conditional_kernel_schur(l, given)?;
    let local: Vec<usize> = added
        .iter()
        .map(|b| {
            rest.iter()
                .position(|i| i == b)
                .ok_or_else(|| DppError::InvalidArgument(format!("added item {b} outside ground set")))
        })
        .collect::<Result<_>>()?;
    let mut sorted = local.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Ok(f64::NEG_INFINITY);
    }
    let log_det = match linalg::log_det_spd(&linalg::submatrix(&la, &local)) {
        Ok(v) => v,
        Err(_) => return Ok(f64::NEG_INFINITY),
    };
    let eig = linalg::eigenvalues_desc(&la);
    Ok(log_det - log_elementary_symmetric(&eig, added.len()))
}

/// One annotation: the items shown (`given`) and the items added to them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalSample {
    /// Index of the ground set (subcategory) the sample belongs to.
    pub group: usize,
    pub given: Vec<usize>,
    pub added: Vec<usize>,
}

/// Sum of conditional log-probabilities over samples, each evaluated with
/// the kernel of its group.
pub fn conditional_kdpp_log_likelihood(kernels: &[DMatrix<f64>], samples: &[ConditionalSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let l = kernels
            .get(s.group)
            .ok_or_else(|| DppError::InvalidArgument(format!("unknown group {}", s.group)))?;
        total += conditional_log_prob(l, &s.given, &s.added)?;
    }
    Ok(total)
}
