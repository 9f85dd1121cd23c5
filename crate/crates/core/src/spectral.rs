//! Eigenvalue truncations and the anytime normalizer bounds built on them.
//!
//! For a PSD kernel with eigenvalues `lambda_1 >= lambda_2 >= ..` and trace
//! `tr`, knowing only the top `M` values and the trace gives
//!
//! ```text
//! sum_{n<=M} log(1 + lambda_n)  <=  log det(L + I)  <=  same + (tr - sum_{n<=M} lambda_n)
//! e_k(lambda_1..M)  <=  e_k(lambda)  <=  sum_{j<=k} gap^j / j! * e_{k-j}(lambda_1..M)
//! ```
//!
//! Both bounds stay valid when the top values are replaced by lower
//! estimates of them (Ritz values), and both tighten as `M` grows.

use nalgebra::DMatrix;

use crate::error::{DppError, Result};
use crate::kernels::continuous::{GaussianSpectrum, GaussianTheta};
use crate::kernels::symmetric::log_elementary_symmetric_all;
use crate::linalg::{self, Lanczos};

/// Where a truncation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Partial eigensolve of a kernel matrix.
    Discrete,
    /// Closed-form enumeration of a continuous operator spectrum.
    Continuous,
}

/// The top `M` eigenvalues of a kernel (non-increasing) and its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTruncation {
    lambdas: Vec<f64>,
    trace: f64,
    kind: SpectrumKind,
    complete: bool,
}

/// Relative tolerance for a partial eigenvalue sum exceeding the trace.
pub const TRACE_TOL: f64 = 1e-8;

impl EigenTruncation {
    /// `lambdas` are sorted into non-increasing order and negative round-off
    /// is clamped to zero. `complete` marks a truncation holding the whole
    /// spectrum, whose bounds are then exact.
    pub fn new(mut lambdas: Vec<f64>, trace: f64, kind: SpectrumKind, complete: bool) -> Self {
        for v in &mut lambdas {
            *v = v.max(0.0);
        }
        lambdas.sort_by(|a, b| b.total_cmp(a));
        Self {
            lambdas,
            trace,
            kind,
            complete,
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// `tr - sum(lambdas)`, zero for a complete truncation.
    pub fn gap(&self) -> Result<f64> {
        if self.complete {
            return Ok(0.0);
        }
        let partial: f64 = self.lambdas.iter().sum();
        let gap = self.trace - partial;
        if gap < -TRACE_TOL * self.trace.abs() {
            return Err(DppError::InconsistentTruncation {
                partial,
                trace: self.trace,
            });
        }
        Ok(gap.max(0.0))
    }
}

/// Log-domain bounds on a normalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizerBounds {
    pub log_lower: f64,
    pub log_upper: f64,
    pub m_used: usize,
}

impl NormalizerBounds {
    pub fn width(&self) -> f64 {
        self.log_upper - self.log_lower
    }
}

/// Bounds on `log det(L + I)`.
pub fn dpp_log_normalizer_bounds(trunc: &EigenTruncation) -> Result<NormalizerBounds> {
    let gap = trunc.gap()?;
    let log_lower: f64 = trunc.lambdas.iter().map(|l| l.ln_1p()).sum();
    let log_upper = if trunc.complete { log_lower } else { log_lower + gap };
    Ok(NormalizerBounds {
        log_lower,
        log_upper,
        m_used: trunc.len(),
    })
}

fn log_factorial(j: usize) -> f64 {
    (1..=j).map(|i| (i as f64).ln()).sum()
}

/// Bounds on `log e_k(lambda)`. The lower bound is `-inf` while fewer than
/// `k` eigenvalues are known.
pub fn kdpp_log_normalizer_bounds(trunc: &EigenTruncation, k: usize) -> Result<NormalizerBounds> {
    let gap = trunc.gap()?;
    let log_e = log_elementary_symmetric_all(&trunc.lambdas, k);
    let log_lower = log_e[k];
    let log_upper = if trunc.complete || gap == 0.0 {
        log_lower
    } else {
        let log_gap = gap.ln();
        let terms: Vec<f64> = (0..=k)
            .map(|j| j as f64 * log_gap - log_factorial(j) + log_e[k - j])
            .collect();
        log_sum_exp(&terms)
    };
    Ok(NormalizerBounds {
        log_lower,
        log_upper,
        m_used: trunc.len(),
    })
}

/// `log sum exp(terms)`; a single finite term is returned unchanged.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + s.ln()
}

/// A source of the top eigenvalues of a kernel.
pub trait EigenOracle: Send + std::fmt::Debug {
    fn kind(&self) -> SpectrumKind;

    fn trace(&self) -> f64;

    /// Total number of eigenvalues, `None` for an operator.
    fn size(&self) -> Option<usize>;

    /// Truncation with (up to) the `m` largest eigenvalues or lower
    /// estimates of them.
    fn truncation(&mut self, m: usize) -> Result<EigenTruncation>;
}

/// Matrices up to this size always use a dense eigendecomposition.
pub const DENSE_LIMIT: usize = 512;

/// Top eigenvalues of a dense symmetric matrix: a full decomposition for
/// small matrices or large requests, Lanczos otherwise.
#[derive(Debug, Clone)]
pub struct MatrixSpectrum {
    matrix: DMatrix<f64>,
    trace: f64,
    full: Option<Vec<f64>>,
    lanczos: Option<Lanczos>,
}

impl MatrixSpectrum {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let trace = matrix.trace();
        Self {
            matrix,
            trace,
            full: None,
            lanczos: None,
        }
    }

    /// All eigenvalues, non-increasing.
    pub fn full(&mut self) -> &[f64] {
        if self.full.is_none() {
            self.full = Some(linalg::eigenvalues_desc(&self.matrix));
            self.lanczos = None;
        }
        self.full.as_deref().unwrap_or_default()
    }
}

impl EigenOracle for MatrixSpectrum {
    fn kind(&self) -> SpectrumKind {
        SpectrumKind::Discrete
    }

    fn trace(&self) -> f64 {
        self.trace
    }

    fn size(&self) -> Option<usize> {
        Some(self.matrix.nrows())
    }

    fn truncation(&mut self, m: usize) -> Result<EigenTruncation> {
        let n = self.matrix.nrows();
        let m = m.min(n);
        let dense = self.full.is_some() || n <= DENSE_LIMIT || m >= n || m > n / 8;
        let values = if dense {
            self.full()[..m].to_vec()
        } else {
            let lz = self.lanczos.get_or_insert_with(|| Lanczos::new(n));
            lz.extend(&self.matrix, (2 * m + 32).min(n));
            if lz.is_exhausted() {
                log::debug!("Krylov space exhausted at {} vectors; using dense solve", lz.len());
                self.full()[..m].to_vec()
            } else {
                let mut r = lz.ritz_values();
                r.truncate(m);
                r
            }
        };
        let complete = m == n;
        Ok(EigenTruncation::new(values, self.trace, SpectrumKind::Discrete, complete))
    }
}

impl EigenOracle for GaussianSpectrum {
    fn kind(&self) -> SpectrumKind {
        SpectrumKind::Continuous
    }

    fn trace(&self) -> f64 {
        self.theta().alpha
    }

    fn size(&self) -> Option<usize> {
        None
    }

    fn truncation(&mut self, m: usize) -> Result<EigenTruncation> {
        let values = self.top(m).to_vec();
        Ok(EigenTruncation::new(values, self.theta().alpha, SpectrumKind::Continuous, false))
    }
}

/// First truncation size of the tightening schedule.
pub const INITIAL_M: usize = 8;

/// Next size in the schedule `0 -> 8 -> 16 -> 32 ..`.
pub fn next_m(m: usize) -> usize {
    if m < INITIAL_M {
        INITIAL_M
    } else {
        m.saturating_mul(2)
    }
}

/// Outcome of a tightening step.
#[derive(Debug, Clone, PartialEq)]
pub enum Tightened {
    /// A larger truncation.
    Extended(EigenTruncation),
    /// The truncation already holds the full spectrum.
    Exact,
    /// No further eigenvalues within `cap` (or the spectrum underflowed).
    Exhausted,
}

/// Move `trunc` one step along the doubling schedule, capped at `cap`
/// eigenvalues.
pub fn tighten(trunc: &EigenTruncation, oracle: &mut dyn EigenOracle, cap: usize) -> Result<Tightened> {
    if trunc.is_complete() {
        return Ok(Tightened::Exact);
    }
    let mut target = next_m(trunc.len()).min(cap);
    if let Some(n) = oracle.size() {
        target = target.min(n);
    }
    if target <= trunc.len() {
        return Ok(Tightened::Exhausted);
    }
    let next = oracle.truncation(target)?;
    if next.len() <= trunc.len() && !next.is_complete() {
        return Ok(Tightened::Exhausted);
    }
    Ok(Tightened::Extended(next))
}

/// A lazily tightened truncation of one kernel: the per-evaluation state
/// behind posterior bounds.
#[derive(Debug)]
pub struct TruncationState {
    oracle: Box<dyn EigenOracle>,
    trunc: EigenTruncation,
    cap: usize,
    exhausted: bool,
}

impl TruncationState {
    /// Start at `M = 0` (trace only).
    pub fn new(oracle: Box<dyn EigenOracle>, cap: usize) -> Self {
        let trunc = EigenTruncation::new(Vec::new(), oracle.trace(), oracle.kind(), oracle.size() == Some(0));
        Self {
            oracle,
            trunc,
            cap,
            exhausted: false,
        }
    }

    pub fn for_matrix(matrix: DMatrix<f64>, cap: usize) -> Self {
        Self::new(Box::new(MatrixSpectrum::new(matrix)), cap)
    }

    pub fn for_gaussian(theta: &GaussianTheta, cap: usize) -> Self {
        Self::new(Box::new(GaussianSpectrum::new(theta)), cap)
    }

    pub fn truncation(&self) -> &EigenTruncation {
        &self.trunc
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_complete()
    }

    /// True when no further tightening is possible.
    pub fn is_final(&self) -> bool {
        self.exhausted || self.trunc.is_complete()
    }

    /// One schedule step; returns whether the truncation grew.
    pub fn tighten(&mut self) -> Result<bool> {
        if self.is_final() {
            return Ok(false);
        }
        match tighten(&self.trunc, self.oracle.as_mut(), self.cap)? {
            Tightened::Extended(next) => {
                self.trunc = next;
                Ok(true)
            }
            Tightened::Exact => Ok(false),
            Tightened::Exhausted => {
                self.exhausted = true;
                Ok(false)
            }
        }
    }

    /// Jump straight to the full spectrum when one exists.
    pub fn complete(&mut self) -> Result<bool> {
        match self.oracle.size() {
            Some(n) if n <= self.cap => {
                self.trunc = self.oracle.truncation(n)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn dpp_bounds(&self) -> Result<NormalizerBounds> {
        dpp_log_normalizer_bounds(&self.trunc)
    }

    pub fn kdpp_bounds(&self, k: usize) -> Result<NormalizerBounds> {
        kdpp_log_normalizer_bounds(&self.trunc, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_discrete_kernel, DiscreteGaussianTheta, GroundSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose()
    }

    fn brute_force_e_k(values: &[f64], k: usize) -> f64 {
        let n = values.len();
        (0u32..(1 << n))
            .filter(|mask| mask.count_ones() as usize == k)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn empty_truncation_bounds() {
        let t = EigenTruncation::new(vec![], 7.5, SpectrumKind::Discrete, false);
        let b = dpp_log_normalizer_bounds(&t).unwrap();
        assert_eq!(b.log_lower, 0.0);
        assert_eq!(b.log_upper, 7.5);
        let b0 = kdpp_log_normalizer_bounds(&t, 0).unwrap();
        assert_eq!((b0.log_lower, b0.log_upper), (0.0, 0.0));
        let b3 = kdpp_log_normalizer_bounds(&t, 3).unwrap();
        let closed = 3.0 * 7.5f64.ln() - 6.0f64.ln();
        assert!((b3.log_upper - closed).abs() < 1e-12);
        assert_eq!(b3.log_lower, f64::NEG_INFINITY);
    }

    #[test]
    fn k_equal_one_upper_is_log_trace() {
        let m = random_psd(10, 2);
        let mut spec = MatrixSpectrum::new(m.clone());
        for mm in [0, 1, 3, 9] {
            let b = kdpp_log_normalizer_bounds(&spec.truncation(mm).unwrap(), 1).unwrap();
            assert!((b.log_upper - m.trace().ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_spectrum_is_exact() {
        let m = random_psd(15, 5);
        let mut spec = MatrixSpectrum::new(m.clone());
        let t = spec.truncation(15).unwrap();
        assert!(t.is_complete());
        let b = dpp_log_normalizer_bounds(&t).unwrap();
        let direct = linalg::log_det_spd(&(&m + DMatrix::identity(15, 15))).unwrap();
        assert_eq!(b.log_lower, b.log_upper);
        assert!((b.log_lower - direct).abs() < 1e-10);
        let e = eigen_all(&m);
        let bk = kdpp_log_normalizer_bounds(&t, 4).unwrap();
        assert_eq!(bk.log_lower, bk.log_upper);
        assert!((bk.log_lower.exp() - brute_force_e_k(&e, 4)).abs() < 1e-8 * brute_force_e_k(&e, 4));
    }

    fn eigen_all(m: &DMatrix<f64>) -> Vec<f64> {
        linalg::eigenvalues_desc(m).into_iter().map(|v| v.max(0.0)).collect()
    }

    #[test]
    fn kdpp_bounds_bracket_brute_force() {
        let m = random_psd(12, 11);
        let e = eigen_all(&m);
        let exact = brute_force_e_k(&e, 4).ln();
        let mut spec = MatrixSpectrum::new(m);
        let b = kdpp_log_normalizer_bounds(&spec.truncation(6).unwrap(), 4).unwrap();
        assert!(b.log_lower <= exact + 1e-12 && exact <= b.log_upper + 1e-12);
    }

    #[test]
    fn inconsistent_truncation_is_reported() {
        let t = EigenTruncation::new(vec![3.0, 2.0], 4.0, SpectrumKind::Discrete, false);
        assert!(matches!(
            dpp_log_normalizer_bounds(&t),
            Err(DppError::InconsistentTruncation { .. })
        ));
    }

    #[test]
    fn tighten_on_complete_is_noop() {
        let m = random_psd(5, 1);
        let mut spec = MatrixSpectrum::new(m);
        let t = spec.truncation(5).unwrap();
        assert_eq!(tighten(&t, &mut spec, 1 << 20).unwrap(), Tightened::Exact);
    }

    #[test]
    fn tighten_follows_doubling_schedule() {
        let ground = GroundSet::grid(&[0.0, 0.0], &[1.0, 1.0], &[20, 20]).unwrap();
        let theta = DiscreteGaussianTheta::new(vec![0.5, 0.5], vec![0.01, 0.02]).unwrap();
        let k = build_discrete_kernel(&ground, &theta).unwrap();
        let mut state = TruncationState::for_matrix(k.into_matrix(), 1 << 20);
        let mut sizes = vec![state.truncation().len()];
        let mut widths = vec![state.dpp_bounds().unwrap().width()];
        while state.tighten().unwrap() {
            sizes.push(state.truncation().len());
            widths.push(state.dpp_bounds().unwrap().width());
        }
        assert_eq!(sizes, vec![0, 8, 16, 32, 64, 128, 256, 400]);
        assert!(widths.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0));
        assert!(state.is_exact());
        assert_eq!(*widths.last().unwrap(), 0.0);
    }

    #[test]
    fn lanczos_truncations_bound_and_tighten() {
        // Large enough for the iterative path.
        let ground = GroundSet::grid(&[0.0, 0.0], &[1.0, 1.0], &[25, 25]).unwrap();
        let theta = DiscreteGaussianTheta::new(vec![0.5, 0.5], vec![0.01, 0.02]).unwrap();
        let m = build_discrete_kernel(&ground, &theta).unwrap().into_matrix();
        let exact = linalg::log_det_spd(&(&m + DMatrix::identity(625, 625))).unwrap();
        let exact_k = log_elementary_symmetric_all(&eigen_all(&m), 5)[5];
        let mut spec = MatrixSpectrum::new(m);
        let mut last = (f64::NEG_INFINITY, f64::INFINITY);
        let mut last_k = (f64::NEG_INFINITY, f64::INFINITY);
        for mm in [8, 16, 32, 64] {
            let t = spec.truncation(mm).unwrap();
            assert!(spec.full.is_none(), "expected Lanczos at M = {mm}");
            let b = dpp_log_normalizer_bounds(&t).unwrap();
            assert!(b.log_lower <= exact + 1e-9 && exact <= b.log_upper + 1e-9);
            assert!(b.log_lower >= last.0 - 1e-9 && b.log_upper <= last.1 + 1e-9);
            last = (b.log_lower, b.log_upper);
            let bk = kdpp_log_normalizer_bounds(&t, 5).unwrap();
            assert!(bk.log_lower <= exact_k + 1e-9 && exact_k <= bk.log_upper + 1e-9);
            assert!(bk.log_lower >= last_k.0 - 1e-9 && bk.log_upper <= last_k.1 + 1e-9);
            last_k = (bk.log_lower, bk.log_upper);
        }
    }

    #[test]
    fn continuous_gap_shrinks_over_doublings() {
        let theta = GaussianTheta::isotropic(1000.0, 1.0, 1.0, 2).unwrap();
        let mut state = TruncationState::for_gaussian(&theta, 1 << 20);
        let mut width = state.dpp_bounds().unwrap().width();
        for _ in 0..10 {
            assert!(state.tighten().unwrap());
            let w = state.dpp_bounds().unwrap().width();
            assert!(w <= width);
            width = w;
        }
        assert!(!state.is_exact());
    }

    #[test]
    fn log_sum_exp_single_term_is_identity() {
        assert_eq!(log_sum_exp(&[1.2345]), 1.2345);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.5]), 0.5);
    }
}
