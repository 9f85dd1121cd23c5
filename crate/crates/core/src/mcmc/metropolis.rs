use rand::Rng;
use rand_distr::StandardNormal;

use super::{chain_rng, check_start, Chain, LogTarget, ProposalSpec, SamplerSettings};
use crate::error::{DppError, Result};

/// Normal random-walk proposal `x + scale * z`.
pub(crate) fn propose<R: Rng>(x: &[f64], proposal: &ProposalSpec, rng: &mut R) -> Vec<f64> {
    x.iter()
        .zip(&proposal.scales)
        .map(|(v, s)| v + s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One random-walk Metropolis-Hastings step from `x` with log density `lp`.
/// The proposal is drawn before `u`; the step accepts when
/// `log u < min(0, lp' - lp)`.
pub fn mh_step<T: LogTarget + ?Sized, R: Rng>(
    target: &T,
    x: &[f64],
    lp: f64,
    proposal: &ProposalSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, bool)> {
    let candidate = propose(x, proposal, rng);
    let log_u = rng.random::<f64>().ln();
    let lp_new = target.log_density(&candidate)?;
    if log_u < (lp_new - lp).min(0.0) {
        Ok((candidate, lp_new, true))
    } else {
        Ok((x.to_vec(), lp, false))
    }
}

/// Random-walk Metropolis-Hastings with a symmetric normal proposal.
pub fn rw_mh<T: LogTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    proposal: &ProposalSpec,
    iterations: usize,
    seed: u64,
) -> Result<Chain> {
    check_start(x0, target.dim())?;
    super::check_lengths(&proposal.scales, target.dim(), "proposal scale")?;
    let mut lp = target.log_density(x0)?;
    if !lp.is_finite() {
        return Err(DppError::InvalidInitialState(lp));
    }
    let mut rng = chain_rng(seed);
    let settings = SamplerSettings::Mh {
        scales: proposal.scales.clone(),
    };
    let mut chain = Chain::new(target.param_names(), seed, settings, iterations);
    let mut x = x0.to_vec();
    for _ in 0..iterations {
        let (nx, nlp, acc) = mh_step(target, &x, lp, proposal, &mut rng)?;
        x = nx;
        lp = nlp;
        chain.push(target.to_output(&x), lp, acc);
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::FnTarget;

    #[test]
    fn doubling_density_is_always_accepted() {
        // Every proposal has log density ln 2 against a current value of 0.
        let t = FnTarget::new(1, |_: &[f64]| 2f64.ln());
        let spec = ProposalSpec::uniform(1, 1.0).unwrap();
        let mut rng = chain_rng(3);
        for _ in 0..1000 {
            let (_, _, acc) = mh_step(&t, &[0.0], 0.0, &spec, &mut rng).unwrap();
            assert!(acc);
        }
    }

    #[test]
    fn standard_normal_mean() {
        let t = FnTarget::new(1, |x: &[f64]| -0.5 * x[0] * x[0]);
        let spec = ProposalSpec::uniform(1, 2.4).unwrap();
        let chain = rw_mh(&t, &[0.0], &spec, 50_000, 17).unwrap();
        let xs = chain.column(0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        // Effective sample size from the integrated autocorrelation time.
        let acf = crate::mcmc::autocorrelation(&xs, 200).unwrap();
        let tau = 1.0 + 2.0 * acf.values[1..].iter().take_while(|&&r| r > 0.0).sum::<f64>();
        let se = (tau / xs.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let t = FnTarget::new(2, |x: &[f64]| -0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]));
        let spec = ProposalSpec::uniform(2, 0.5).unwrap();
        let a = rw_mh(&t, &[1.0, 1.0], &spec, 2000, 5).unwrap();
        let b = rw_mh(&t, &[1.0, 1.0], &spec, 2000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infinite_start_is_rejected() {
        let t = FnTarget::new(1, |_: &[f64]| f64::NEG_INFINITY);
        let spec = ProposalSpec::uniform(1, 0.5).unwrap();
        assert!(matches!(rw_mh(&t, &[0.0], &spec, 10, 1), Err(DppError::InvalidInitialState(_))));
    }

    #[test]
    fn three_state_detailed_balance() {
        // Piecewise-constant density on three unit cells; reversibility makes
        // the empirical flows between cells symmetric.
        let weights = [0.2f64, 0.5, 0.3];
        let t = FnTarget::new(1, move |x: &[f64]| {
            if (0.0..3.0).contains(&x[0]) {
                weights[x[0] as usize].ln()
            } else {
                f64::NEG_INFINITY
            }
        });
        let spec = ProposalSpec::uniform(1, 1.0).unwrap();
        let chain = rw_mh(&t, &[1.5], &spec, 400_000, 9).unwrap();
        let xs = chain.column(0);
        let mut counts = [[0f64; 3]; 3];
        for w in xs.windows(2) {
            counts[w[0] as usize][w[1] as usize] += 1.0;
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let (a, b) = (counts[i][j], counts[j][i]);
                // Difference of two roughly Poisson counts.
                let se = (a + b).sqrt();
                assert!((a - b).abs() < 3.0 * se.max(1.0), "{i}->{j}: {a} vs {b}");
            }
        }
        let n = xs.len() as f64;
        for (i, w) in weights.iter().enumerate() {
            let freq = xs.iter().filter(|&&x| x as usize == i).count() as f64 / n;
            assert!((freq - w).abs() < 0.02, "state {i}: {freq}");
        }
    }
}
