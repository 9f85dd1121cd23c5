//! Elementary symmetric polynomials `e_k(lambda_1, .., lambda_n)`.
//!
//! The recursion `e_k(l_1..n) = e_k(l_1..n-1) + l_n e_(k-1)(l_1..n-1)` runs on
//! values rescaled by their maximum, with the log of the scale tracked
//! separately; a pure log-domain recursion takes over if the rescaled sums
//! still overflow.

/// Result of an `e_k` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Esp {
    /// `log e_k`, `-inf` when `e_k = 0`.
    pub log_value: f64,
    /// Set when `k` exceeds the number of values; `e_k` is then zero.
    pub out_of_range: bool,
}

impl Esp {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log e_j` for `j = 0..=k`. Negative inputs (round-off in eigenvalues of a
/// PSD matrix) are treated as zero.
pub fn log_elementary_symmetric_all(lambdas: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; k + 1];
    out[0] = 0.0;
    let scale = lambdas.iter().fold(0.0f64, |acc, &v| acc.max(v));
    if scale <= 0.0 || !scale.is_finite() {
        return out;
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (n, &l) in lambdas.iter().enumerate() {
        let mu = l.max(0.0) / scale;
        for j in (1..=k.min(n + 1)).rev() {
            e[j] += mu * e[j - 1];
        }
    }
    if e.iter().all(|v| v.is_finite()) {
        let ls = scale.ln();
        for j in 1..=k {
            out[j] = if e[j] > 0.0 {
                e[j].ln() + j as f64 * ls
            } else {
                f64::NEG_INFINITY
            };
        }
        return out;
    }
    log_domain_all(lambdas, k)
}

fn log_domain_all(lambdas: &[f64], k: usize) -> Vec<f64> {
    let mut e = vec![f64::NEG_INFINITY; k + 1];
    e[0] = 0.0;
    for (n, &l) in lambdas.iter().enumerate() {
        let ll = if l > 0.0 { l.ln() } else { f64::NEG_INFINITY };
        for j in (1..=k.min(n + 1)).rev() {
            e[j] = log_add_exp(e[j], ll + e[j - 1]);
        }
    }
    e
}

/// `log e_k(lambdas)`; `-inf` when `k` exceeds the number of values.
pub fn log_elementary_symmetric(lambdas: &[f64], k: usize) -> f64 {
    if k > lambdas.len() {
        return f64::NEG_INFINITY;
    }
    log_elementary_symmetric_all(lambdas, k)[k]
}

/// `e_k(lambdas)` in O(nk) time, with the `k > n` convention flagged.
pub fn elementary_symmetric(lambdas: &[f64], k: usize) -> Esp {
    if k > lambdas.len() {
        return Esp {
            log_value: f64::NEG_INFINITY,
            out_of_range: true,
        };
    }
    Esp {
        log_value: log_elementary_symmetric(lambdas, k),
        out_of_range: false,
    }
}

/// Table `log e_l(lambda_1..n)` for `l = 0..=k` and `n = 0..=N`, indexed as
/// `table[n][l]`. Used by the k-DPP sampler.
pub fn log_elementary_symmetric_table(lambdas: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut table = Vec::with_capacity(lambdas.len() + 1);
    let mut row = vec![f64::NEG_INFINITY; k + 1];
    row[0] = 0.0;
    table.push(row.clone());
    for &l in lambdas {
        let ll = if l > 0.0 { l.ln() } else { f64::NEG_INFINITY };
        let prev = row.clone();
        for j in 1..=k {
            row[j] = log_add_exp(prev[j], ll + prev[j - 1]);
        }
        table.push(row.clone());
    }
    table
}
