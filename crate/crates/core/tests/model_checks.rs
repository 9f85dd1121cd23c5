use std::sync::Arc;

use dpplearn::kernels::{GaussianQualitySimilarity, GaussianSimilarity, GroundSet, KernelFamily, PointConfig};
use dpplearn::likelihood::{Cardinality, GaussianLayout, ModelKind, ModelSpec, Observations, Posterior, Subset};
use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use dpplearn::kernels::GaussianTheta;
use dpplearn::mcmc::chain_rng;
use dpplearn::mle::{gradient_ascent, AscentOptions};
use dpplearn::moments::{model_moments, moment_check, moment_grid_search};
use dpplearn::sampling::{DppSampler, GridDppSampler, GridSpec};

fn grid_family() -> Arc<dyn KernelFamily> {
    let g = GroundSet::grid(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
    Arc::new(GaussianQualitySimilarity::new(Arc::new(g)))
}

fn simulate(family: &Arc<dyn KernelFamily>, truth: &[f64], n: usize, seed: u64) -> Vec<Subset> {
    let sampler = DppSampler::new(&family.kernel(truth).unwrap());
    let mut rng = chain_rng(seed);
    (0..n).map(|_| Subset::new(sampler.sample(&mut rng))).collect()
}

#[test]
fn moment_check_is_consistent_at_the_truth() {
    let family = grid_family();
    let truth = [0.5, 0.5, 0.1, 0.2];
    let data = Observations::Subsets(simulate(&family, &truth, 400, 3));
    let spec = ModelSpec::new(ModelKind::Discrete {
        families: vec![family],
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let mut rng = chain_rng(4);
    let draws: Vec<Vec<f64>> = (0..40)
        .map(|_| truth.iter().map(|v| v * (1.0 + 0.02 * rand::Rng::random_range(&mut rng, -1.0..1.0))).collect())
        .collect();
    let reports = moment_check(&draws, &data, &spec, &[0, 2], 0).unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert!(r.discrepancy.abs() < 4.0 * r.empirical_se, "{r:?}");
        assert!(r.lower <= r.theoretical_mean && r.theoretical_mean <= r.upper);
    }
}

#[test]
fn moment_check_rejects_empty_draws() {
    let spec = ModelSpec::new(ModelKind::Discrete {
        families: vec![grid_family()],
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let data = Observations::Subsets(vec![Subset::new(vec![0, 5])]);
    assert!(moment_check(&[], &data, &spec, &[0], 0).is_err());
}

#[test]
fn grid_search_recovers_the_generating_point() {
    let spec = ModelSpec::new(ModelKind::Continuous {
        layout: GaussianLayout {
            dim: 1,
            isotropic: true,
        },
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let truth = [200.0, 1.0, 0.3];
    let m = model_moments(&spec, &truth, &[0, 2], 1 << 16).unwrap();
    let targets = [m[0][0], m[1][0]];
    let alphas: Vec<f64> = (1..=8).map(|i| 50.0 * i as f64).collect();
    let rhos: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let (best, loss) = moment_grid_search(&[alphas, rhos], &targets, |p| {
        let v = model_moments(&spec, &[p[0], p[1], 0.3], &[0, 2], 1 << 16)?;
        Ok(vec![v[0][0], v[1][0]])
    })
    .unwrap();
    assert_eq!(best, vec![200.0, 1.0]);
    assert!(loss < 1e-20);
}

#[test]
fn gradient_ascent_finds_the_grid_maximum() {
    let ground = Arc::new(GroundSet::grid(&[0.0], &[1.0], &[15]).unwrap());
    let family: Arc<dyn KernelFamily> = Arc::new(GaussianSimilarity::new(ground));
    let data = simulate(&family, &[0.02], 60, 8);
    let spec = ModelSpec::new(ModelKind::Discrete {
        families: vec![family],
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let posterior = Posterior::new(spec.clone(), Observations::Subsets(data.clone())).unwrap();
    let grid: Vec<f64> = (0..2000).map(|i| (-7.0 + 6.0 * i as f64 / 1999.0).exp()).collect();
    let best = grid
        .iter()
        .copied()
        .max_by(|a, b| {
            let la = posterior.log_likelihood(&[*a]).unwrap();
            let lb = posterior.log_likelihood(&[*b]).unwrap();
            la.total_cmp(&lb)
        })
        .unwrap();
    let options = AscentOptions {
        step: 1e-3,
        max_iterations: 2000,
        tolerance: 1e-8,
        max_halvings: 40,
    };
    let fit = gradient_ascent(&spec, &data, &[0.1], options).unwrap();
    let ratio = fit.params[0] / best;
    assert!((ratio - 1.0).abs() < 4e-3, "ascent {} vs grid {best}", fit.params[0]);
}

#[test]
fn continuous_posterior_is_continuous_in_parameters() {
    let spec = ModelSpec::new(ModelKind::Continuous {
        layout: GaussianLayout {
            dim: 2,
            isotropic: true,
        },
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let pts = vec![vec![0.1, -0.3], vec![0.8, 0.5], vec![-0.9, 0.2]];
    let data = Observations::Points(vec![PointConfig::new(pts, 2).unwrap()]);
    let posterior = Posterior::new(spec, data).unwrap();
    let theta = [300.0, 1.2, 0.4];
    let base = posterior.log_posterior(&theta).unwrap();
    let mut prev = f64::INFINITY;
    for e in [1e-2, 1e-3, 1e-4, 1e-5] {
        let moved: Vec<f64> = theta.iter().map(|v| v * (1.0 + e)).collect();
        let diff = (posterior.log_posterior(&moved).unwrap() - base).abs();
        assert!(diff < prev, "difference does not shrink at {e}");
        assert!(diff < 1e3 * e);
        prev = diff;
    }
}

struct NegLogLik(Posterior);

impl CostFunction for NegLogLik {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, log_params: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let params: Vec<f64> = log_params.iter().map(|v| v.exp()).collect();
        Ok(self.0.log_likelihood(&params).map(|v| -v).unwrap_or(f64::INFINITY))
    }
}

/// Maximum-likelihood `sigma / rho` by Nelder-Mead on log parameters.
fn fitted_gamma(data: Vec<PointConfig>) -> f64 {
    let spec = ModelSpec::new(ModelKind::Continuous {
        layout: GaussianLayout {
            dim: 1,
            isotropic: true,
        },
        cardinality: Cardinality::Free,
    })
    .unwrap();
    let problem = NegLogLik(Posterior::new(spec, Observations::Points(data)).unwrap());
    let start = [60.0f64, 1.0, 0.5].map(f64::ln).to_vec();
    let simplex = (0..=3)
        .map(|i| {
            let mut v = start.clone();
            if i > 0 {
                v[i - 1] += 0.7;
            }
            v
        })
        .collect();
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-10).unwrap();
    let res = Executor::new(problem, solver).configure(|s| s.max_iters(4000)).run().unwrap();
    let best = res.state.best_param.unwrap();
    (best[2] - best[1]).exp()
}

#[test]
fn fitted_repulsion_is_scale_invariant() {
    let theta = GaussianTheta::isotropic(60.0, 1.0, 0.3, 1).unwrap();
    let sampler = GridDppSampler::new(&theta, GridSpec::centered(1, 4.0, 0.02).unwrap()).unwrap();
    let mut rng = chain_rng(17);
    let data: Vec<PointConfig> = (0..40).map(|_| sampler.sample(&mut rng)).collect();
    let base = fitted_gamma(data.clone());
    assert!(base > 0.1 && base < 0.9, "gamma fit {base}");
    for eta in [0.5, 2.0] {
        let scaled = fitted_gamma(data.iter().map(|p| p.scaled(eta)).collect());
        assert!((scaled / base - 1.0).abs() < 0.05, "eta {eta}: {scaled} vs {base}");
    }
}
