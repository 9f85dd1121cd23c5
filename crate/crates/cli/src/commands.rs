//! The subcommands, as library functions returning in-memory results plus
//! thin `cmd_*` wrappers that read inputs and write output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use dpplearn::conditional::ConditionalSample;
use dpplearn::io::{self, PointPatterns};
use dpplearn::kernels::{KernelFamily, PointConfig};
use dpplearn::likelihood::{Cardinality, ModelKind, ModelSpec, Observations, Posterior, Subset};
use dpplearn::mcmc::{
    bounded_mh, bounded_slice, chain_rng, gelman_rubin, rw_mh, slice_hyperrect, BoundedOptions, Chain,
    ProposalSpec, SliceOptions, DEFAULT_PROPOSAL_SCALE, DEFAULT_SLICE_WIDTH,
};
use dpplearn::mle::{gradient_ascent, AscentResult};
use dpplearn::moments::{continuous_gaussian_moments, moment_check, MomentReport};
use dpplearn::sampling::{DppSampler, GridDppSampler};
use dpplearn::spectral::log_sum_exp;
use dpplearn::DppError;
use rand::Rng;
use serde::Serialize;

use crate::config::{Config, FitConfig};
use crate::error::{CliError, CliResult};

/// Version string embedded in every summary.
pub const VERSION: &str = env!("DPPLEARN_VERSION");

/// Width below which a bounded likelihood evaluation counts as exact.
pub const LIKELIHOOD_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Mh,
    Slice,
    BoundedMh,
    BoundedSlice,
    Mle,
}

/// Flags shared by the chain-running commands.
#[derive(Debug, Clone, Serialize)]
pub struct RunOptions {
    pub seed: u64,
    pub chains: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    /// `None` picks `bounded-slice` for continuous models and `slice`
    /// otherwise.
    pub sampler: Option<SamplerKind>,
}

impl RunOptions {
    fn sampler_for(&self, spec: &ModelSpec) -> SamplerKind {
        self.sampler.unwrap_or(match spec.kind {
            ModelKind::Continuous { .. } => SamplerKind::BoundedSlice,
            _ => SamplerKind::Slice,
        })
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::file(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::file(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

pub fn read_points(path: &Path) -> CliResult<PointPatterns> {
    Ok(io::read_point_patterns(open(path)?)?)
}

/// Simulated samples with the analytic and empirical mean cardinality.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub samples: Vec<PointConfig>,
    pub dim: usize,
    pub expected_cardinality: f64,
    pub mean_cardinality: f64,
}

#[derive(Serialize)]
struct SimulationSidecar<'a> {
    version: &'a str,
    seed: u64,
    config: &'a Config,
    samples: usize,
    expected_cardinality: f64,
    mean_cardinality: Option<f64>,
}

/// Draw `simulate.samples` exact samples at `simulate.truth`. Continuous
/// models are sampled on `simulate.grid`.
pub fn simulate(cfg: &Config, seed: u64) -> CliResult<Simulation> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("`simulate` section missing".into()))?;
    let spec = cfg.model_spec(None)?;
    let mut rng = chain_rng(seed);
    let (samples, dim, expected) = match &spec.kind {
        ModelKind::Discrete { families, cardinality } => {
            let kernel = families[0].kernel(&sim.truth)?;
            let sampler = DppSampler::new(&kernel);
            let ground = kernel.ground();
            let mut out = Vec::with_capacity(sim.samples);
            for _ in 0..sim.samples {
                let items = match cardinality {
                    Cardinality::Free => sampler.sample(&mut rng),
                    Cardinality::Fixed(k) => sampler.sample_k(*k, &mut rng)?,
                };
                let pts = items.iter().map(|&i| ground.items()[i].clone()).collect();
                out.push(PointConfig::new(pts, ground.dim())?);
            }
            let expected = match cardinality {
                Cardinality::Free => sampler.expected_cardinality(),
                Cardinality::Fixed(k) => *k as f64,
            };
            (out, ground.dim(), expected)
        }
        ModelKind::Continuous { layout, cardinality } => {
            if *cardinality != Cardinality::Free {
                return Err(CliError::Config("continuous simulation supports DPPs only".into()));
            }
            let grid = sim
                .grid
                .clone()
                .ok_or_else(|| CliError::Config("continuous simulation needs `simulate.grid`".into()))?;
            let theta = layout.theta(&sim.truth)?;
            let sampler = GridDppSampler::new(&theta, grid)?;
            let out = (0..sim.samples).map(|_| sampler.sample(&mut rng)).collect();
            let expected = continuous_gaussian_moments(&theta, &[0], cfg.moments.max_eigenvalues)?[0][0];
            log::info!(
                "analytic expected cardinality {expected:.4}, grid kernel {:.4}",
                sampler.expected_cardinality()
            );
            (out, layout.dim, expected)
        }
        ModelKind::Conditional { .. } => {
            return Err(CliError::Config("conditional models cannot be simulated".into()))
        }
    };
    let mean = if samples.is_empty() {
        f64::NAN
    } else {
        samples.iter().map(PointConfig::len).sum::<usize>() as f64 / samples.len() as f64
    };
    Ok(Simulation {
        samples,
        dim,
        expected_cardinality: expected,
        mean_cardinality: mean,
    })
}

/// Writes `samples.csv` and the provenance sidecar `samples.json`.
pub fn cmd_simulate(cfg: &Config, seed: u64, out: &Path) -> CliResult<Simulation> {
    let sim = simulate(cfg, seed)?;
    ensure_dir(out)?;
    io::write_point_patterns(create(&out.join("samples.csv"))?, &sim.samples, sim.dim)?;
    write_json(
        &out.join("samples.json"),
        &SimulationSidecar {
            version: VERSION,
            seed,
            config: cfg,
            samples: sim.samples.len(),
            expected_cardinality: sim.expected_cardinality,
            mean_cardinality: sim.mean_cardinality.is_finite().then_some(sim.mean_cardinality),
        },
    )?;
    log::info!(
        "{} samples, mean cardinality {:.3} (analytic {:.3})",
        sim.samples.len(),
        sim.mean_cardinality,
        sim.expected_cardinality
    );
    Ok(sim)
}

/// Observations of a discrete or continuous model from point patterns.
pub fn observations(cfg: &Config, spec: &ModelSpec, samples: &[PointConfig]) -> CliResult<Observations> {
    match &spec.kind {
        ModelKind::Discrete { families, .. } => {
            let idx = io::points_to_indices(samples, families[0].ground(), cfg.model.match_tolerance)?;
            Ok(Observations::Subsets(idx.into_iter().map(Subset::new).collect()))
        }
        ModelKind::Continuous { layout, .. } => {
            if let Some(c) = samples.iter().find(|c| c.dim() != layout.dim) {
                return Err(DppError::DimensionMismatch {
                    expected: layout.dim,
                    got: c.dim(),
                }
                .into());
            }
            if let Some(d) = &cfg.model.domain {
                dpplearn::likelihood::check_domain(samples, &d.lower, &d.upper)?;
            }
            Ok(Observations::Points(samples.to_vec()))
        }
        ModelKind::Conditional { .. } => Err(CliError::Config(
            "conditional models are fitted with image-diversity".into(),
        )),
    }
}

/// Natural-scale starting points, one per chain. A single configured start
/// is perturbed uniformly by `init_spread` on the sampling scale when more
/// than one chain runs.
pub fn start_points(spec: &ModelSpec, fit: &FitConfig, chains: usize, seed: u64) -> CliResult<Vec<Vec<f64>>> {
    let n = spec.n_params();
    let transforms = spec.transforms();
    let base = match fit.init.len() {
        0 => vec![vec![1.0; n]],
        _ => fit.init.clone(),
    };
    if let Some(bad) = base.iter().find(|v| v.len() != n) {
        return Err(CliError::Config(format!("init has {} values, model has {n} parameters", bad.len())));
    }
    if base.len() == chains {
        return Ok(base);
    }
    if base.len() != 1 {
        return Err(CliError::Config(format!(
            "init lists {} starts for {chains} chains",
            base.len()
        )));
    }
    if chains == 1 {
        return Ok(base);
    }
    let mut rng = chain_rng(seed ^ 0x5eed_0f_c4a1);
    Ok((0..chains)
        .map(|_| {
            base[0]
                .iter()
                .zip(&transforms)
                .map(|(v, t)| t.inverse(t.forward(*v) + fit.init_spread * rng.random_range(-1.0..=1.0)))
                .collect()
        })
        .collect())
}

fn scales(given: &Option<Vec<f64>>, n: usize, default: f64) -> CliResult<Vec<f64>> {
    match given {
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(CliError::Config(format!("{} scales for {n} parameters", v.len()))),
        None => Ok(vec![default; n]),
    }
}

fn run_chain(
    posterior: &Posterior,
    fit: &FitConfig,
    sampler: SamplerKind,
    start: &[f64],
    iters: usize,
    seed: u64,
) -> CliResult<Chain> {
    let target = posterior.sampling_target();
    let x0 = target.to_sampling(start);
    let n = x0.len();
    let bounded = BoundedOptions {
        max_eigenvalues: fit.max_eigenvalues,
    };
    let slice = || -> CliResult<SliceOptions> {
        Ok(SliceOptions {
            widths: scales(&fit.slice_width, n, DEFAULT_SLICE_WIDTH)?,
            max_steps: fit.max_steps,
        })
    };
    let proposal = || -> CliResult<ProposalSpec> {
        Ok(ProposalSpec::new(scales(&fit.proposal_scale, n, DEFAULT_PROPOSAL_SCALE)?)?)
    };
    Ok(match sampler {
        SamplerKind::Mh => rw_mh(&target, &x0, &proposal()?, iters, seed)?,
        SamplerKind::Slice => slice_hyperrect(&target, &x0, &slice()?, iters, seed)?,
        SamplerKind::BoundedMh => bounded_mh(&target, &x0, &proposal()?, bounded, iters, seed)?,
        SamplerKind::BoundedSlice => bounded_slice(&target, &x0, &slice()?, bounded, iters, seed)?,
        SamplerKind::Mle => return Err(CliError::Config("mle is not an MCMC sampler".into())),
    })
}

/// Runs the chains concurrently; chain `i` uses seed `seed + i`.
pub fn run_chains(posterior: &Posterior, fit: &FitConfig, opts: &RunOptions) -> CliResult<Vec<Chain>> {
    if opts.chains == 0 {
        return Err(CliError::Config("at least one chain required".into()));
    }
    let sampler = opts.sampler_for(posterior.spec());
    let starts = start_points(posterior.spec(), fit, opts.chains, opts.seed)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(i, x0)| {
                let seed = opts.seed.wrapping_add(i as u64);
                s.spawn(move || run_chain(posterior, fit, sampler, x0, opts.iters, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

/// Posterior summary of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ParamSummary {
    pub fn new(name: &str, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            name: name.to_string(),
            mean,
            sd,
            q05: quantile(&s, 0.05),
            q25: quantile(&s, 0.25),
            q50: quantile(&s, 0.5),
            q75: quantile(&s, 0.75),
            q95: quantile(&s, 0.95),
        }
    }
}

/// Pooled post-burn-in summary of a set of chains.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub params: Vec<ParamSummary>,
    /// Repulsion `gamma_d = sigma_d / rho_d` of continuous Gaussian models.
    pub gamma: Vec<ParamSummary>,
    pub acceptance: Vec<f64>,
    /// Per-parameter PSRF; empty with a single chain.
    pub psrf: Vec<f64>,
    pub mean_psrf: Option<f64>,
    pub max_eigenvalues_used: usize,
    pub draws: usize,
}

/// `gamma_d` draws of a continuous Gaussian model, one row per draw.
pub fn gamma_draws(spec: &ModelSpec, draws: &[Vec<f64>]) -> CliResult<Vec<Vec<f64>>> {
    let ModelKind::Continuous { layout, .. } = &spec.kind else {
        return Ok(Vec::new());
    };
    draws
        .iter()
        .map(|p| {
            let t = layout.theta(p)?;
            Ok((0..t.dim()).map(|d| t.sigma[d] / t.rho[d]).collect())
        })
        .collect()
}

fn gamma_names(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["gamma".into()]
    } else {
        (1..=n).map(|d| format!("gamma{d}")).collect()
    }
}

pub fn summarize(spec: &ModelSpec, chains: &[Chain], burnin: usize, thin: usize) -> CliResult<ChainSummary> {
    let kept: Vec<Chain> = chains.iter().map(|c| c.burned_thinned(burnin, thin)).collect();
    let pooled: Vec<Vec<f64>> = kept.iter().flat_map(|c| c.samples.iter().cloned()).collect();
    if pooled.is_empty() {
        return Err(CliError::Config(format!("burn-in {burnin} leaves no draws")));
    }
    let names = spec.param_names();
    let column = |rows: &[Vec<f64>], j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    let params = names.iter().enumerate().map(|(j, n)| ParamSummary::new(n, &column(&pooled, j))).collect();
    let g = gamma_draws(spec, &pooled)?;
    let gamma = match g.first() {
        Some(first) => gamma_names(first.len())
            .iter()
            .enumerate()
            .map(|(j, n)| ParamSummary::new(n, &column(&g, j)))
            .collect(),
        None => Vec::new(),
    };
    let psrf: Vec<f64> = if kept.len() > 1 && kept.iter().all(|c| c.len() > 1) {
        gelman_rubin(&kept)?.iter().map(|p| p.value).collect()
    } else {
        Vec::new()
    };
    let mean_psrf = (!psrf.is_empty()).then(|| psrf.iter().sum::<f64>() / psrf.len() as f64);
    Ok(ChainSummary {
        params,
        gamma,
        acceptance: chains.iter().map(Chain::acceptance_rate).collect(),
        psrf,
        mean_psrf,
        max_eigenvalues_used: chains.iter().map(|c| c.max_eigenvalues_used).max().unwrap_or(0),
        draws: pooled.len(),
    })
}

#[derive(Serialize)]
struct FitSummaryFile<'a, T: Serialize> {
    version: &'a str,
    config: &'a Config,
    options: &'a RunOptions,
    sampler: SamplerKind,
    runtime_seconds: f64,
    #[serde(flatten)]
    result: T,
}

fn write_chains(out: &Path, chains: &[Chain], opts: &RunOptions) -> CliResult<()> {
    for (i, c) in chains.iter().enumerate() {
        let kept = c.burned_thinned(opts.burnin, opts.thin);
        kept.write_csv(create(&out.join(format!("chain_{i}.csv")))?, opts.burnin + 1, opts.thin)?;
    }
    Ok(())
}

/// Gradient ascent from every chain start; discrete models only.
pub fn run_mle(spec: &ModelSpec, data: &Observations, fit: &FitConfig, opts: &RunOptions) -> CliResult<Vec<AscentResult>> {
    let Observations::Subsets(subsets) = data else {
        return Err(CliError::Config("mle supports discrete models only".into()));
    };
    let starts = start_points(spec, fit, opts.chains.max(1), opts.seed)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .map(|x0| s.spawn(move || gradient_ascent(spec, subsets, x0, fit.mle)))
            .collect();
        handles
            .into_iter()
            .map(|h| Ok(h.join().expect("ascent thread panicked")?))
            .collect()
    })
}

/// Fit a model to a point-pattern file; writes one `chain_<i>.csv` per
/// chain and `summary.json` (or `summary.json` with ascent results for
/// `mle`).
pub fn cmd_fit(cfg: &Config, data: &Path, opts: &RunOptions, out: &Path) -> CliResult<()> {
    let started = Instant::now();
    let spec = cfg.model_spec(None)?;
    let obs = observations(cfg, &spec, &read_points(data)?.samples)?;
    let sampler = opts.sampler_for(&spec);
    ensure_dir(out)?;
    if sampler == SamplerKind::Mle {
        let results = run_mle(&spec, &obs, &cfg.fit, opts)?;
        #[derive(Serialize)]
        struct Mle<'a> {
            param_names: Vec<String>,
            results: &'a [AscentResult],
        }
        write_json(
            &out.join("summary.json"),
            &FitSummaryFile {
                version: VERSION,
                config: cfg,
                options: opts,
                sampler,
                runtime_seconds: started.elapsed().as_secs_f64(),
                result: Mle {
                    param_names: spec.param_names(),
                    results: &results,
                },
            },
        )?;
        return Ok(());
    }
    let posterior = Posterior::new(spec.clone(), obs)?.with_max_eigenvalues(cfg.fit.max_eigenvalues);
    let chains = run_chains(&posterior, &cfg.fit, opts)?;
    write_chains(out, &chains, opts)?;
    let summary = summarize(&spec, &chains, opts.burnin, opts.thin)?;
    if let Some(r) = summary.mean_psrf {
        log::info!("mean PSRF {r:.4}");
    }
    write_json(
        &out.join("summary.json"),
        &FitSummaryFile {
            version: VERSION,
            config: cfg,
            options: opts,
            sampler,
            runtime_seconds: started.elapsed().as_secs_f64(),
            result: summary,
        },
    )
}

/// Moment check of trace files against a data file; writes `moments.csv`.
pub fn cmd_moments(cfg: &Config, traces: &[PathBuf], data: &Path, out: &Path) -> CliResult<Vec<MomentReport>> {
    let spec = cfg.model_spec(None)?;
    let mut draws = Vec::new();
    for path in traces {
        let t = io::read_trace(open(path)?)?;
        if t.param_names != spec.param_names() {
            return Err(CliError::Config(format!(
                "{}: trace parameters {:?} do not match the model {:?}",
                path.display(),
                t.param_names,
                spec.param_names()
            )));
        }
        draws.extend(t.samples);
    }
    let obs = observations(cfg, &spec, &read_points(data)?.samples)?;
    let reports = moment_check(&draws, &obs, &spec, &cfg.moments.orders, cfg.moments.max_eigenvalues)?;
    ensure_dir(out)?;
    io::write_moment_reports(create(&out.join("moments.csv"))?, &reports)?;
    Ok(reports)
}

/// Log-likelihood of one sample; continuous k-DPPs use the midpoint of
/// bounds tightened to [`LIKELIHOOD_BOUND_TOL`] or the truncation cap.
pub fn sample_log_likelihood(spec: &ModelSpec, sample: &Observations, params: &[f64], cap: usize) -> CliResult<f64> {
    let post = Posterior::new(spec.clone(), sample.clone())?.with_max_eigenvalues(cap);
    match post.log_likelihood(params) {
        Err(DppError::NoExactNormalizer) => {
            let mut b = post.log_posterior_bounds(params)?;
            while b.upper() - b.lower() > LIKELIHOOD_BOUND_TOL && b.tighten()? {}
            if b.upper() - b.lower() > LIKELIHOOD_BOUND_TOL {
                log::warn!("likelihood bounds still {:.3e} wide at the cap", b.upper() - b.lower());
            }
            Ok(0.5 * (b.lower() + b.upper()) - post.log_prior(params))
        }
        r => Ok(r?),
    }
}

fn single(obs: &Observations, j: usize) -> Observations {
    match obs {
        Observations::Subsets(s) => Observations::Subsets(vec![s[j].clone()]),
        Observations::Points(p) => Observations::Points(vec![p[j].clone()]),
        Observations::Conditional(c) => Observations::Conditional(vec![c[j].clone()]),
    }
}

fn without(obs: &Observations, j: usize) -> Observations {
    fn drop<T: Clone>(v: &[T], j: usize) -> Vec<T> {
        v.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| x.clone()).collect()
    }
    match obs {
        Observations::Subsets(s) => Observations::Subsets(drop(s, j)),
        Observations::Points(p) => Observations::Points(drop(p, j)),
        Observations::Conditional(c) => Observations::Conditional(drop(c, j)),
    }
}

/// Pooled posterior draws from one fit, thinned to at most `keep`.
fn fit_draws(spec: &ModelSpec, data: Observations, cfg: &Config, opts: &RunOptions, keep: usize) -> CliResult<Vec<Vec<f64>>> {
    let posterior = Posterior::new(spec.clone(), data)?.with_max_eigenvalues(cfg.fit.max_eigenvalues);
    let chains = run_chains(&posterior, &cfg.fit, opts)?;
    let pooled: Vec<Vec<f64>> = chains
        .iter()
        .flat_map(|c| c.burned_thinned(opts.burnin, opts.thin).samples)
        .collect();
    if pooled.is_empty() {
        return Err(CliError::Config(format!("burn-in {} leaves no draws", opts.burnin)));
    }
    let step = pooled.len().div_ceil(keep.max(1));
    Ok(pooled.into_iter().step_by(step).collect())
}

/// Scores of one held-out sample under one candidate class.
#[derive(Debug, Clone, Serialize)]
pub struct LooScore {
    pub held_out_class: String,
    pub sample_id: String,
    pub candidate_class: String,
    /// Log-likelihood at the posterior mean.
    pub plug_in: f64,
    /// Log of the posterior-averaged likelihood.
    pub averaged: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooPrediction {
    pub class: String,
    pub sample_id: String,
    pub predicted_plug_in: String,
    pub predicted_averaged: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooReport {
    pub scores: Vec<LooScore>,
    pub predictions: Vec<LooPrediction>,
    pub accuracy_plug_in: f64,
    pub accuracy_averaged: f64,
    /// `gamma` posterior summaries of each class fitted to all its samples.
    pub gamma: BTreeMap<String, Vec<ParamSummary>>,
    pub skipped: Vec<String>,
}

/// A labelled set of point patterns.
#[derive(Debug, Clone)]
pub struct LabelledData {
    pub name: String,
    pub ids: Vec<String>,
    pub samples: Vec<PointConfig>,
}

/// Leave-one-out classification: each sample is held out in turn, its own
/// class is refitted without it, and the sample is assigned to the class
/// with the highest likelihood.
pub fn classify_loo(cfg: &Config, classes: &[LabelledData], opts: &RunOptions) -> CliResult<LooReport> {
    if classes.len() < 2 {
        return Err(CliError::Config("classification needs at least two classes".into()));
    }
    let spec = cfg.model_spec(None)?;
    let data: Vec<Observations> = classes
        .iter()
        .map(|c| observations(cfg, &spec, &c.samples))
        .collect::<CliResult<_>>()?;
    let keep = cfg.classify.posterior_draws;
    let mut fit_no = 0u64;
    let mut next_opts = || {
        fit_no += 1;
        RunOptions {
            seed: opts.seed.wrapping_add(fit_no << 32),
            ..opts.clone()
        }
    };
    let mut full = Vec::with_capacity(classes.len());
    let mut gamma = BTreeMap::new();
    for (c, d) in classes.iter().zip(&data) {
        let draws = fit_draws(&spec, d.clone(), cfg, &next_opts(), keep)?;
        let g = gamma_draws(&spec, &draws)?;
        if let Some(first) = g.first() {
            let sums = gamma_names(first.len())
                .iter()
                .enumerate()
                .map(|(j, n)| ParamSummary::new(n, &g.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .collect();
            gamma.insert(c.name.clone(), sums);
        }
        full.push(draws);
    }
    let mut scores = Vec::new();
    let mut predictions = Vec::new();
    let mut skipped = Vec::new();
    let (mut hits_plug, mut hits_avg) = (0usize, 0usize);
    for (ci, class) in classes.iter().enumerate() {
        if data[ci].len() < 2 {
            log::warn!("class {} has fewer than two samples; its folds are skipped", class.name);
            skipped.push(class.name.clone());
            continue;
        }
        for j in 0..data[ci].len() {
            let held = single(&data[ci], j);
            let own = fit_draws(&spec, without(&data[ci], j), cfg, &next_opts(), keep)?;
            let mut best_plug = (f64::NEG_INFINITY, 0);
            let mut best_avg = (f64::NEG_INFINITY, 0);
            for (k, candidate) in classes.iter().enumerate() {
                let draws = if k == ci { &own } else { &full[k] };
                let n = spec.n_params();
                let mean: Vec<f64> = (0..n)
                    .map(|p| draws.iter().map(|d| d[p]).sum::<f64>() / draws.len() as f64)
                    .collect();
                let plug_in = sample_log_likelihood(&spec, &held, &mean, cfg.fit.max_eigenvalues)?;
                let lls = draws
                    .iter()
                    .map(|d| sample_log_likelihood(&spec, &held, d, cfg.fit.max_eigenvalues))
                    .collect::<CliResult<Vec<f64>>>()?;
                let averaged = log_sum_exp(&lls) - (lls.len() as f64).ln();
                if plug_in > best_plug.0 {
                    best_plug = (plug_in, k);
                }
                if averaged > best_avg.0 {
                    best_avg = (averaged, k);
                }
                scores.push(LooScore {
                    held_out_class: class.name.clone(),
                    sample_id: class.ids[j].clone(),
                    candidate_class: candidate.name.clone(),
                    plug_in,
                    averaged,
                });
            }
            hits_plug += usize::from(best_plug.1 == ci);
            hits_avg += usize::from(best_avg.1 == ci);
            predictions.push(LooPrediction {
                class: class.name.clone(),
                sample_id: class.ids[j].clone(),
                predicted_plug_in: classes[best_plug.1].name.clone(),
                predicted_averaged: classes[best_avg.1].name.clone(),
            });
        }
    }
    let n = predictions.len().max(1) as f64;
    Ok(LooReport {
        scores,
        accuracy_plug_in: hits_plug as f64 / n,
        accuracy_averaged: hits_avg as f64 / n,
        predictions,
        gamma,
        skipped,
    })
}

/// Reads `name=path` class files, runs [`classify_loo`] and writes
/// `loo.csv` and `loo.json`.
pub fn cmd_classify_loo(cfg: &Config, classes: &[(String, PathBuf)], opts: &RunOptions, out: &Path) -> CliResult<LooReport> {
    let started = Instant::now();
    let data = classes
        .iter()
        .map(|(name, path)| {
            let p = read_points(path)?;
            Ok(LabelledData {
                name: name.clone(),
                ids: p.ids,
                samples: p.samples,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = classify_loo(cfg, &data, opts)?;
    ensure_dir(out)?;
    let mut w = csv::Writer::from_writer(create(&out.join("loo.csv"))?);
    for s in &report.scores {
        w.serialize(s).map_err(DppError::from)?;
    }
    w.flush().map_err(|e| CliError::file(&out.join("loo.csv"), e))?;
    write_json(
        &out.join("loo.json"),
        &FitSummaryFile {
            version: VERSION,
            config: cfg,
            options: opts,
            sampler: opts.sampler_for(&cfg.model_spec(None)?),
            runtime_seconds: started.elapsed().as_secs_f64(),
            result: &report,
        },
    )?;
    log::info!(
        "leave-one-out accuracy {:.3} (plug-in {:.3})",
        report.accuracy_averaged,
        report.accuracy_plug_in
    );
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DiversityMode {
    /// Conditional k-DPP on `(given, added)` annotations.
    Conditional,
    /// k-DPP on whole rows (annotation rows with the added item, or top-k
    /// lists).
    PlainKdpp,
}

/// Rows of item ids per subcategory.
#[derive(Debug, Clone)]
pub enum DiversityData {
    Annotations(Vec<io::Annotation>),
    TopK(Vec<io::TopK>),
}

fn lookup(sub: &io::Subcategory, name: &str, item: &str) -> CliResult<usize> {
    sub.index_of(item).ok_or_else(|| {
        CliError::Model(DppError::InvalidArgument(format!(
            "item `{item}` is not in subcategory `{name}`"
        )))
    })
}

/// Model and observations of the feature-weight problem. All subcategories
/// share one `sigma` per feature block.
pub fn diversity_posterior(
    cfg: &Config,
    features: &io::FeatureTable,
    data: &DiversityData,
    mode: DiversityMode,
) -> CliResult<Posterior> {
    let rows: Vec<(String, Vec<String>, Option<String>)> = match data {
        DiversityData::Annotations(a) => a
            .iter()
            .map(|r| (r.subcategory.clone(), r.given.clone(), Some(r.added.clone())))
            .collect(),
        DiversityData::TopK(t) => {
            if mode == DiversityMode::Conditional {
                return Err(CliError::Config("conditional mode needs an annotation file".into()));
            }
            t.iter().map(|r| (r.subcategory.clone(), r.items.clone(), None)).collect()
        }
    };
    let mut groups: BTreeMap<String, usize> = BTreeMap::new();
    let mut families: Vec<Arc<dyn KernelFamily>> = Vec::new();
    let mut group_of = |name: &str| -> CliResult<usize> {
        if let Some(&g) = groups.get(name) {
            return Ok(g);
        }
        let sub = features.subcategories.get(name).ok_or_else(|| {
            CliError::Model(DppError::InvalidArgument(format!("unknown subcategory `{name}`")))
        })?;
        families.push(Arc::new(sub.feature_kernel(&features.block_names, cfg.model.normalize_features)?));
        groups.insert(name.to_string(), families.len() - 1);
        Ok(families.len() - 1)
    };
    let mut conditional = Vec::new();
    let mut subsets = Vec::new();
    for (name, items, added) in &rows {
        let group = group_of(name)?;
        let sub = &features.subcategories[name];
        let given = items.iter().map(|i| lookup(sub, name, i)).collect::<CliResult<Vec<_>>>()?;
        let added = added.as_ref().map(|b| lookup(sub, name, b)).transpose()?;
        match mode {
            DiversityMode::Conditional => conditional.push(ConditionalSample {
                group,
                given,
                added: added.into_iter().collect(),
            }),
            DiversityMode::PlainKdpp => {
                let mut all = given;
                all.extend(added);
                subsets.push(Subset { group, items: all });
            }
        }
    }
    let (kind, obs) = match mode {
        DiversityMode::Conditional => (ModelKind::Conditional { families }, Observations::Conditional(conditional)),
        DiversityMode::PlainKdpp => {
            let k = subsets
                .first()
                .map(|s| s.items.len())
                .ok_or_else(|| CliError::Model(DppError::Empty("no rows".into())))?;
            (
                ModelKind::Discrete {
                    families,
                    cardinality: Cardinality::Fixed(k),
                },
                Observations::Subsets(subsets),
            )
        }
    };
    let mut spec = ModelSpec::new(kind)?;
    if let Some(p) = &cfg.model.priors {
        spec = spec.with_priors(p.clone())?;
    }
    Ok(Posterior::new(spec, obs)?.with_max_eigenvalues(cfg.fit.max_eigenvalues))
}

/// Fits feature weights `sigma_<block>`; writes `chain_<i>.csv` and
/// `summary.json`.
pub fn cmd_image_diversity(
    cfg: &Config,
    features: &Path,
    annotations: Option<&Path>,
    top_k: Option<&Path>,
    mode: DiversityMode,
    opts: &RunOptions,
    out: &Path,
) -> CliResult<ChainSummary> {
    let started = Instant::now();
    let table = io::read_features(open(features)?)?;
    let data = match (annotations, top_k) {
        (Some(a), None) => DiversityData::Annotations(io::read_annotations(open(a)?)?),
        (None, Some(t)) => DiversityData::TopK(io::read_top_k(open(t)?)?),
        _ => return Err(CliError::Config("pass exactly one of --annotations and --top-k".into())),
    };
    let posterior = diversity_posterior(cfg, &table, &data, mode)?;
    let chains = run_chains(&posterior, &cfg.fit, opts)?;
    ensure_dir(out)?;
    write_chains(out, &chains, opts)?;
    let summary = summarize(posterior.spec(), &chains, opts.burnin, opts.thin)?;
    write_json(
        &out.join("summary.json"),
        &FitSummaryFile {
            version: VERSION,
            config: cfg,
            options: opts,
            sampler: opts.sampler_for(posterior.spec()),
            runtime_seconds: started.elapsed().as_secs_f64(),
            result: &summary,
        },
    )?;
    Ok(summary)
}
