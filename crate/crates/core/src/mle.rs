//! Maximum-likelihood estimation of discrete kernel parameters by gradient
//! ascent.
//!
//! For a DPP,
//! `d l / d theta = sum_t tr(L_{A^t}^{-1} dL_{A^t}) - T tr((L + I)^{-1} dL)`.
//! For a k-DPP the normalizer term becomes
//! `T sum_n e_(k-1)(lambda without n) / e_k(lambda) * v_n' dL v_n`
//! from first-order eigenvalue perturbation.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::{log_elementary_symmetric_all, KernelFamily, Transform};
use crate::likelihood::{Cardinality, ModelKind, ModelSpec, Observations, Posterior, Subset};
use crate::linalg;

/// Largest ground set for which k-DPP gradients are computed.
pub const KDPP_GRADIENT_MAX_N: usize = 200;

/// Gradient of the log-likelihood at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub params: Vec<f64>,
    /// `d l / d params[j]` in natural parameters.
    pub gradient: Vec<f64>,
    pub objective: f64,
}

fn discrete_parts(spec: &ModelSpec) -> Result<(&[Arc<dyn KernelFamily>], Cardinality)> {
    match &spec.kind {
        ModelKind::Discrete { families, cardinality } => Ok((families, *cardinality)),
        _ => Err(DppError::InvalidArgument(
            "gradients are available for discrete DPP and k-DPP models".into(),
        )),
    }
}

/// `tr(A B)` for symmetric `A`, `B`.
fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Normalizer `log det(L + I)` or `log e_k` and its gradient weights: the
/// gradient of the normalizer along `dL` is `tr(W dL)`.
fn normalizer_and_weight(l: &DMatrix<f64>, k: Option<usize>) -> Result<(f64, DMatrix<f64>)> {
    let n = l.nrows();
    match k {
        None => {
            let a = DMatrix::identity(n, n) + l;
            let log_det = linalg::log_det_spd(&a)?;
            Ok((log_det, linalg::spd_inverse(&a)?))
        }
        Some(k) => {
            if n > KDPP_GRADIENT_MAX_N {
                return Err(DppError::InvalidArgument(format!(
                    "k-DPP gradients are limited to ground sets of at most {KDPP_GRADIENT_MAX_N} items"
                )));
            }
            let (values, vectors) = linalg::eigen_desc(l);
            let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
            let log_ek = log_elementary_symmetric_all(&values, k)[k];
            let mut w = DMatrix::zeros(n, n);
            for i in 0..n {
                let rest: Vec<f64> = values
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .collect();
                let c = (log_elementary_symmetric_all(&rest, k - 1)[k - 1] - log_ek).exp();
                let v = vectors.column(i);
                w += v * v.transpose() * c;
            }
            Ok((log_ek, w))
        }
    }
}

/// Log-likelihood and its gradient for a discrete model. A singular
/// `L_{A^t}` is an error naming sample `t`.
pub fn grad_log_likelihood(spec: &ModelSpec, data: &[Subset], params: &[f64]) -> Result<GradReport> {
    let (families, cardinality) = discrete_parts(spec)?;
    let k = match cardinality {
        Cardinality::Free => None,
        Cardinality::Fixed(k) => Some(k),
    };
    let dim = spec.n_params();
    let mut gradient = vec![0.0; dim];
    let mut objective = 0.0;
    for (g, family) in families.iter().enumerate() {
        let samples: Vec<(usize, &Subset)> = data.iter().enumerate().filter(|(_, s)| s.group == g).collect();
        if samples.is_empty() {
            continue;
        }
        let kernel = family.kernel(params)?;
        let l = kernel.matrix();
        let derivs: Vec<DMatrix<f64>> = (0..dim)
            .map(|j| family.derivative(params, &kernel, j))
            .collect::<Result<_>>()?;
        for &(t, s) in &samples {
            if let Some(k) = k {
                if s.items.len() != k {
                    return Err(DppError::CardinalityMismatch {
                        sample: t,
                        expected: k,
                        got: s.items.len(),
                    });
                }
            }
            if s.items.is_empty() {
                continue;
            }
            let sub = linalg::submatrix(l, &s.items);
            let chol = Cholesky::new(sub).ok_or(DppError::SingularSample { sample: t })?;
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            if !log_det.is_finite() {
                return Err(DppError::SingularSample { sample: t });
            }
            objective += log_det;
            let inv = chol.inverse();
            for (j, d) in derivs.iter().enumerate() {
                gradient[j] += trace_product(&inv, &linalg::submatrix(d, &s.items));
            }
        }
        let count = samples.len() as f64;
        let (norm, w) = normalizer_and_weight(l, k)?;
        objective -= count * norm;
        for (j, d) in derivs.iter().enumerate() {
            gradient[j] -= count * trace_product(&w, d);
        }
    }
    Ok(GradReport {
        params: params.to_vec(),
        gradient,
        objective,
    })
}

/// Settings of [`gradient_ascent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    /// Initial step `eta` of every iteration, on the transformed scale.
    pub step: f64,
    pub max_iterations: usize,
    /// Stop once the transformed-scale gradient norm falls below this.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_iterations: 500,
            tolerance: 1e-6,
            max_halvings: 30,
        }
    }
}

/// Why the ascent ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    IterationLimit,
    /// No halving of the step increased the objective.
    LineSearchFailed,
}

/// One retained iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentStep {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

/// Result of a gradient ascent run: a local optimum at best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub stop: StopReason,
    pub trace: Vec<AscentStep>,
}

/// Gradient ascent `phi <- phi + eta * d l / d phi` on log-scale positive
/// parameters (real ones unchanged), halving `eta` until the objective does
/// not decrease.
pub fn gradient_ascent(spec: &ModelSpec, data: &[Subset], params0: &[f64], options: AscentOptions) -> Result<AscentResult> {
    if !(options.step > 0.0) {
        return Err(DppError::NonPositiveParameter {
            name: "step".into(),
            value: options.step,
        });
    }
    let posterior = Posterior::new(spec.clone(), Observations::Subsets(data.to_vec()))?;
    let transforms: Vec<Transform> = spec.transforms();
    let to_phi = |theta: &[f64]| -> Vec<f64> { theta.iter().zip(&transforms).map(|(v, t)| t.forward(*v)).collect() };
    let to_theta = |phi: &[f64]| -> Vec<f64> { phi.iter().zip(&transforms).map(|(v, t)| t.inverse(*v)).collect() };
    let phi_gradient = |r: &GradReport| -> Vec<f64> {
        r.gradient
            .iter()
            .zip(&r.params)
            .zip(&transforms)
            .map(|((g, v), t)| g * t.jacobian(*v))
            .collect()
    };
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut report = grad_log_likelihood(spec, data, params0)?;
    // The line search and the trace use one evaluation path so that the
    // retained objective is exactly monotone.
    let mut current = posterior.log_likelihood(params0)?;
    let mut phi = to_phi(params0);
    let mut grad = phi_gradient(&report);
    let mut trace = vec![AscentStep {
        iteration: 0,
        params: params0.to_vec(),
        objective: current,
        gradient_norm: norm(&grad),
        step: 0.0,
    }];
    let mut stop = StopReason::IterationLimit;
    for iteration in 1..=options.max_iterations {
        if norm(&grad) < options.tolerance {
            stop = StopReason::Converged;
            break;
        }
        let mut eta = options.step;
        let mut next = None;
        for _ in 0..=options.max_halvings {
            let cand_phi: Vec<f64> = phi.iter().zip(&grad).map(|(p, g)| p + eta * g).collect();
            let cand = to_theta(&cand_phi);
            let value = posterior.log_likelihood(&cand)?;
            if value >= current {
                next = Some((cand_phi, cand, value));
                break;
            }
            eta /= 2.0;
        }
        let Some((cand_phi, cand, value)) = next else {
            log::warn!(
                "line search failed after {} halvings at iteration {iteration}",
                options.max_halvings
            );
            stop = StopReason::LineSearchFailed;
            break;
        };
        match grad_log_likelihood(spec, data, &cand) {
            Ok(r) => report = r,
            Err(DppError::SingularSample { sample }) => {
                log::warn!("sample {sample} became singular at iteration {iteration}");
                stop = StopReason::LineSearchFailed;
                break;
            }
            Err(e) => return Err(e),
        }
        phi = cand_phi;
        current = value;
        grad = phi_gradient(&report);
        trace.push(AscentStep {
            iteration,
            params: cand,
            objective: current,
            gradient_norm: norm(&grad),
            step: eta,
        });
    }
    if stop == StopReason::IterationLimit && norm(&grad) < options.tolerance {
        stop = StopReason::Converged;
    }
    Ok(AscentResult {
        params: report.params.clone(),
        objective: current,
        gradient_norm: norm(&grad),
        stop,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FeatureKernel, GaussianQualitySimilarity, GaussianSimilarity, GroundSet, PolynomialKernel};
    use crate::mcmc::chain_rng;
    use crate::sampling::DppSampler;
    use rand::Rng;

    fn spec(family: Arc<dyn KernelFamily>, cardinality: Cardinality) -> ModelSpec {
        ModelSpec::new(ModelKind::Discrete {
            families: vec![family],
            cardinality,
        })
        .unwrap()
    }

    fn objective(spec: &ModelSpec, data: &[Subset], params: &[f64]) -> f64 {
        Posterior::new(spec.clone(), Observations::Subsets(data.to_vec()))
            .unwrap()
            .log_likelihood(params)
            .unwrap()
    }

    fn check_fd(spec: &ModelSpec, data: &[Subset], params: &[f64]) {
        let r = grad_log_likelihood(spec, data, params).unwrap();
        assert!((r.objective - objective(spec, data, params)).abs() < 1e-9 * r.objective.abs().max(1.0));
        let h = 1e-5;
        for j in 0..params.len() {
            let mut up = params.to_vec();
            let mut dn = params.to_vec();
            up[j] += h;
            dn[j] -= h;
            let fd = (objective(spec, data, &up) - objective(spec, data, &dn)) / (2.0 * h);
            let g = r.gradient[j];
            let scale = g.abs().max(fd.abs()).max(1e-6);
            assert!((g - fd).abs() <= 1e-5 * scale, "param {j}: {g} vs {fd}");
        }
    }

    fn random_ground(n: usize, dim: usize, seed: u64) -> Arc<GroundSet> {
        let mut rng = chain_rng(seed);
        Arc::new(GroundSet::new((0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()).unwrap())
    }

    #[test]
    fn single_item_has_zero_similarity_gradient() {
        let g = Arc::new(GroundSet::new(vec![vec![0.3, 0.4]]).unwrap());
        let s = spec(Arc::new(GaussianSimilarity::new(g)), Cardinality::Free);
        let r = grad_log_likelihood(&s, &[Subset::new(vec![0])], &[0.2, 0.3]).unwrap();
        assert_eq!(r.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn gaussian_similarity_matches_finite_differences() {
        let s = spec(Arc::new(GaussianSimilarity::new(random_ground(6, 2, 1))), Cardinality::Free);
        let data = vec![Subset::new(vec![0, 3]), Subset::new(vec![1, 2, 5]), Subset::new(vec![4])];
        check_fd(&s, &data, &[0.05, 0.08]);
    }

    #[test]
    fn quality_similarity_matches_finite_differences() {
        let s = spec(Arc::new(GaussianQualitySimilarity::new(random_ground(8, 2, 2))), Cardinality::Free);
        let data = vec![Subset::new(vec![0, 3, 7]), Subset::new(vec![1, 5]), Subset::new(vec![])];
        check_fd(&s, &data, &[0.5, 0.3, 0.1, 0.2]);
    }

    #[test]
    fn polynomial_matches_finite_differences() {
        let s = spec(Arc::new(PolynomialKernel::new(random_ground(6, 3, 3))), Cardinality::Free);
        let data = vec![Subset::new(vec![0, 3]), Subset::new(vec![2])];
        check_fd(&s, &data, &[0.4, 1.7]);
    }

    #[test]
    fn feature_kernel_matches_finite_differences() {
        let mut rng = chain_rng(4);
        let blocks: Vec<GroundSet> = (0..3)
            .map(|_| GroundSet::new((0..7).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect()).unwrap())
            .collect();
        let fam = FeatureKernel::new(blocks, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let s = spec(Arc::new(fam), Cardinality::Fixed(2));
        let data = vec![Subset::new(vec![0, 3]), Subset::new(vec![2, 6]), Subset::new(vec![1, 5])];
        check_fd(&s, &data, &[0.8, 1.5, 0.6]);
    }

    #[test]
    fn kdpp_gradient_matches_finite_differences() {
        let s = spec(Arc::new(GaussianQualitySimilarity::new(random_ground(10, 2, 5))), Cardinality::Fixed(3));
        let data = vec![Subset::new(vec![0, 4, 8]), Subset::new(vec![1, 2, 9])];
        check_fd(&s, &data, &[0.6, 0.4, 0.05, 0.1]);
    }

    #[test]
    fn polynomial_p_gradient_at_unit_power() {
        let g = random_ground(5, 2, 6);
        let fam = PolynomialKernel::new(g);
        let s = spec(Arc::new(fam.clone()), Cardinality::Free);
        let data = vec![Subset::new(vec![0, 1]), Subset::new(vec![3])];
        let params = [0.5, 1.0];
        let r = grad_log_likelihood(&s, &data, &params).unwrap();
        let l = fam.kernel(&params).unwrap();
        let j = DMatrix::from_element(5, 5, 1.0);
        assert!((fam.derivative(&params, &l, 0).unwrap() - &j).abs().max() < 1e-15);
        let mut direct = 0.0;
        for s in &data {
            let inv = linalg::submatrix(l.matrix(), &s.items).try_inverse().unwrap();
            direct += (inv * linalg::submatrix(&j, &s.items)).trace();
        }
        direct -= 2.0 * ((DMatrix::identity(5, 5) + l.matrix()).try_inverse().unwrap() * &j).trace();
        assert!((r.gradient[0] - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn singular_sample_is_named() {
        let g = Arc::new(GroundSet::new(vec![vec![0.0], vec![0.0], vec![1.0]]).unwrap());
        let s = spec(Arc::new(GaussianSimilarity::new(g)), Cardinality::Free);
        let err = grad_log_likelihood(&s, &[Subset::new(vec![2]), Subset::new(vec![0, 1])], &[0.5]).unwrap_err();
        assert!(matches!(err, DppError::SingularSample { sample: 1 }));
    }

    #[test]
    fn ascent_never_decreases_objective() {
        let g = Arc::new(GroundSet::grid(&[0.0, 0.0], &[1.0, 1.0], &[6, 6]).unwrap());
        let fam: Arc<dyn KernelFamily> = Arc::new(GaussianQualitySimilarity::new(g));
        let truth = [0.5, 0.5, 0.05, 0.1];
        let sampler = DppSampler::new(&fam.kernel(&truth).unwrap());
        let mut rng = chain_rng(7);
        let data: Vec<Subset> = (0..200).map(|_| Subset::new(sampler.sample(&mut rng))).collect();
        let s = spec(fam, Cardinality::Free);
        let res = gradient_ascent(&s, &data, &[1.0, 1.0, 0.2, 0.2], AscentOptions {
            step: 0.01,
            max_iterations: 300,
            ..Default::default()
        })
        .unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
        assert!(res.objective > res.trace[0].objective);
    }

    #[test]
    fn one_parameter_ascent_improves() {
        let s = spec(Arc::new(GaussianSimilarity::new(random_ground(8, 1, 8))), Cardinality::Free);
        let data = vec![Subset::new(vec![0, 5]), Subset::new(vec![1, 2, 7]), Subset::new(vec![3])];
        let res = gradient_ascent(&s, &data, &[0.5], AscentOptions::default()).unwrap();
        assert!(res.objective >= res.trace[0].objective);
        // Grid-search check of the one-dimensional optimum.
        let best = (1..2000)
            .map(|i| i as f64 * 1e-3)
            .map(|v| (v, objective(&s, &data, &[v])))
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if res.stop == StopReason::Converged {
            assert!((res.params[0] - best.0).abs() < 2e-3, "{} vs {}", res.params[0], best.0);
        }
    }
}
