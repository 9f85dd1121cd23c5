//! Sample autocorrelation and the Gelman-Rubin potential scale reduction
//! factor.

use serde::{Deserialize, Serialize};

use super::Chain;
use crate::error::{DppError, Result};

/// Autocorrelation estimates for lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct Acf {
    pub values: Vec<f64>,
    /// The series had zero variance; the ACF is then `1, 0, 0, ..`.
    pub constant: bool,
}

/// Biased sample autocorrelation
/// `r(l) = sum_{t} (x_t - m)(x_{t+l} - m) / sum_t (x_t - m)^2`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Acf> {
    let n = series.len();
    if n <= max_lag {
        return Err(DppError::InvalidArgument(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 == 0.0 {
        let mut values = vec![0.0; max_lag + 1];
        values[0] = 1.0;
        return Ok(Acf { values, constant: true });
    }
    let values = (0..=max_lag)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect();
    Ok(Acf {
        values,
        constant: false,
    })
}

/// Potential scale reduction factor of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psrf {
    pub value: f64,
    /// Every chain had zero variance; `value` is then `+inf`.
    pub zero_within_variance: bool,
}

/// PSRF from `m >= 2` equal-length series:
/// `B = n/(m-1) sum_j (mean_j - mean)^2`, `W = mean_j s_j^2`,
/// `V = (n-1)/n W + B/n`, `R = sqrt(V / W)`.
pub fn gelman_rubin_series(series: &[&[f64]]) -> Result<Psrf> {
    let m = series.len();
    if m < 2 {
        return Err(DppError::InvalidArgument("need at least two chains".into()));
    }
    let n = series[0].len();
    if n < 2 {
        return Err(DppError::InvalidArgument("chains need at least two samples".into()));
    }
    if series.iter().any(|s| s.len() != n) {
        return Err(DppError::InvalidArgument("chains have different lengths".into()));
    }
    let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 / (m - 1) as f64 * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = series
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return Ok(Psrf {
            value: f64::INFINITY,
            zero_within_variance: true,
        });
    }
    let v = (n - 1) as f64 / n as f64 * w + b / n as f64;
    Ok(Psrf {
        value: (v / w).sqrt(),
        zero_within_variance: false,
    })
}

/// PSRF for every parameter of a set of chains.
pub fn gelman_rubin(chains: &[Chain]) -> Result<Vec<Psrf>> {
    let Some(first) = chains.first() else {
        return Err(DppError::InvalidArgument("need at least two chains".into()));
    };
    if chains.iter().any(|c| c.dim() != first.dim()) {
        return Err(DppError::InvalidArgument("chains have different parameters".into()));
    }
    (0..first.dim())
        .map(|j| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            gelman_rubin_series(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn lag_zero_is_one() {
        let acf = autocorrelation(&noise(100, 1), 5).unwrap();
        assert_eq!(acf.values[0], 1.0);
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let acf = autocorrelation(&noise(10_000, 2), 50).unwrap();
        assert!(acf.values[1..].iter().all(|r| r.abs() < 0.05));
    }

    #[test]
    fn ar1_lag_one() {
        let z = noise(20_000, 3);
        let mut x = vec![0.0; z.len()];
        for t in 1..z.len() {
            x[t] = 0.9 * x[t - 1] + z[t];
        }
        let acf = autocorrelation(&x, 1).unwrap();
        assert!((acf.values[1] - 0.9).abs() < 0.03, "{}", acf.values[1]);
    }

    #[test]
    fn constant_series_is_flagged() {
        let acf = autocorrelation(&[2.0; 10], 3).unwrap();
        assert!(acf.constant);
        assert_eq!(acf.values, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn identical_chains_give_one() {
        let a = noise(1000, 4);
        let r = gelman_rubin_series(&[&a, &a, &a]).unwrap();
        // B = 0, so R = sqrt((n-1)/n).
        assert!((r.value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stationary_chains_are_converged() {
        let chains: Vec<Vec<f64>> = (0..5).map(|s| noise(10_000, 10 + s)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        assert!(gelman_rubin_series(&refs).unwrap().value < 1.05);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let a = noise(1000, 5);
        let b: Vec<f64> = noise(1000, 6).iter().map(|x| x + 10.0).collect();
        assert!(gelman_rubin_series(&[&a, &b]).unwrap().value > 1.2);
    }

    #[test]
    fn zero_variance_is_infinite() {
        let r = gelman_rubin_series(&[&[1.0, 1.0], &[2.0, 2.0]]).unwrap();
        assert!(r.zero_within_variance && r.value.is_infinite());
    }
}
