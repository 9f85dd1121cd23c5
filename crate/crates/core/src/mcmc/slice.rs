use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{chain_rng, check_start, Chain, LogTarget, SamplerSettings};
use crate::error::{DppError, Result};

/// Stepping-out settings shared by the slice samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    /// Initial width per dimension.
    pub widths: Vec<f64>,
    /// Maximum number of width-`w` cells the stepped-out interval may span.
    pub max_steps: usize,
}

impl SliceOptions {
    pub fn uniform(dim: usize, width: f64) -> Self {
        Self {
            widths: vec![width; dim],
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Default stepping-out limit.
pub const DEFAULT_MAX_STEPS: usize = 64;
/// Guard against non-terminating shrinkage (only reachable with a target
/// that is discontinuous exactly at the current point).
const MAX_SHRINKS: usize = 100_000;

/// Membership test for the slice `{x : log p(x) > log_y}`.
pub(crate) trait SliceTest {
    /// Data kept for the point that is finally accepted.
    type State;

    fn contains(&mut self, x: &[f64], log_y: f64) -> Result<Option<Self::State>>;
}

pub(crate) struct ExactSlice<'a, T: ?Sized> {
    pub target: &'a T,
}

impl<T: LogTarget + ?Sized> SliceTest for ExactSlice<'_, T> {
    type State = f64;

    fn contains(&mut self, x: &[f64], log_y: f64) -> Result<Option<f64>> {
        let lp = self.target.log_density(x)?;
        Ok((log_y < lp).then_some(lp))
    }
}

/// Grid cells `[origin + lo*w, origin + hi*w]` reached by stepping out
/// along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Extent {
    lo: i64,
    hi: i64,
}

struct Layout {
    origin: Vec<f64>,
    widths: Vec<f64>,
    /// Allowed cell-index window `[-left, right]` per dimension.
    left: Vec<i64>,
    right: Vec<i64>,
}

impl Layout {
    fn edge(&self, d: usize, idx: i64) -> f64 {
        self.origin[d] + idx as f64 * self.widths[d]
    }

    fn cell(&self, d: usize, x: f64) -> i64 {
        ((x - self.origin[d]) / self.widths[d]).floor() as i64
    }

    /// Step out along the axis through `x` in dimension `d`.
    fn step_out<S: SliceTest>(&self, test: &mut S, x: &[f64], d: usize, log_y: f64) -> Result<Extent> {
        let c = self.cell(d, x[d]).clamp(-self.left[d], self.right[d]);
        let mut probe = x.to_vec();
        let mut lo = c;
        while lo > -self.left[d] {
            probe[d] = self.edge(d, lo);
            if test.contains(&probe, log_y)?.is_none() {
                break;
            }
            lo -= 1;
        }
        let mut hi = c + 1;
        while hi < self.right[d] + 1 {
            probe[d] = self.edge(d, hi);
            if test.contains(&probe, log_y)?.is_none() {
                break;
            }
            hi += 1;
        }
        Ok(Extent { lo, hi })
    }
}

/// One hyperrectangle slice update of `x0` at level `log_y`.
///
/// A randomly placed grid of cells with widths `w_d` is laid around `x0`;
/// each edge steps out along its axis until it leaves the slice (or a
/// randomly placed window of `max_steps` cells is exhausted), then the box
/// shrinks towards `x0` on every rejection. In more than one dimension a
/// candidate is only accepted if stepping out from it reproduces the same
/// box, which keeps the update reversible.
pub(crate) fn hyperrect_update<S: SliceTest, R: Rng>(
    test: &mut S,
    x0: &[f64],
    log_y: f64,
    widths: &[f64],
    max_steps: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, S::State)> {
    let dim = x0.len();
    let m = max_steps.max(1) as i64;
    let origin: Vec<f64> = (0..dim).map(|d| x0[d] - rng.random::<f64>() * widths[d]).collect();
    let left: Vec<i64> = (0..dim)
        .map(|_| ((rng.random::<f64>() * m as f64).floor() as i64).min(m - 1))
        .collect();
    let right: Vec<i64> = left.iter().map(|j| m - 1 - j).collect();
    let layout = Layout {
        origin,
        widths: widths.to_vec(),
        left,
        right,
    };
    let extents: Vec<Extent> = (0..dim)
        .map(|d| layout.step_out(test, x0, d, log_y))
        .collect::<Result<_>>()?;
    let mut lower: Vec<f64> = (0..dim).map(|d| layout.edge(d, extents[d].lo)).collect();
    let mut upper: Vec<f64> = (0..dim).map(|d| layout.edge(d, extents[d].hi)).collect();
    for _ in 0..MAX_SHRINKS {
        let x1: Vec<f64> = (0..dim)
            .map(|d| lower[d] + rng.random::<f64>() * (upper[d] - lower[d]))
            .collect();
        if let Some(state) = test.contains(&x1, log_y)? {
            let reversible = dim == 1
                || (0..dim).try_fold(true, |ok, d| -> Result<bool> {
                    Ok(ok && layout.step_out(test, &x1, d, log_y)? == extents[d])
                })?;
            if reversible {
                return Ok((x1, state));
            }
        }
        for d in 0..dim {
            if x1[d] < x0[d] {
                lower[d] = x1[d];
            } else {
                upper[d] = x1[d];
            }
        }
    }
    Err(DppError::InvalidArgument(format!(
        "slice shrinkage did not terminate after {MAX_SHRINKS} proposals"
    )))
}

/// `log u` with `u` uniform on `(0, 1]`.
pub(crate) fn log_uniform<R: Rng>(rng: &mut R) -> f64 {
    (1.0 - rng.random::<f64>()).ln()
}

fn start<T: LogTarget + ?Sized>(target: &T, x0: &[f64], options: &SliceOptions) -> Result<f64> {
    check_start(x0, target.dim())?;
    super::check_lengths(&options.widths, target.dim(), "slice width")?;
    let lp = target.log_density(x0)?;
    if !lp.is_finite() {
        return Err(DppError::InvalidInitialState(lp));
    }
    Ok(lp)
}

/// Univariate stepping-out slice sampling. Multi-dimensional targets are
/// updated one coordinate at a time; one iteration is a full sweep.
pub fn slice_univariate<T: LogTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    options: &SliceOptions,
    iterations: usize,
    seed: u64,
) -> Result<Chain> {
    let mut lp = start(target, x0, options)?;
    let mut rng = chain_rng(seed);
    let settings = SamplerSettings::Slice {
        widths: options.widths.clone(),
        max_steps: options.max_steps,
    };
    let mut chain = Chain::new(target.param_names(), seed, settings, iterations);
    let mut x = x0.to_vec();
    for _ in 0..iterations {
        let before = x.clone();
        for d in 0..x.len() {
            let log_y = lp + log_uniform(&mut rng);
            let mut coord = CoordinateSlice {
                target,
                base: &x,
                d,
            };
            let (xd, new_lp) = hyperrect_update(&mut coord, &[x[d]], log_y, &[options.widths[d]], options.max_steps, &mut rng)?;
            x[d] = xd[0];
            lp = new_lp;
        }
        let moved = x != before;
        chain.push(target.to_output(&x), lp, moved);
    }
    Ok(chain)
}

struct CoordinateSlice<'a, T: ?Sized> {
    target: &'a T,
    base: &'a [f64],
    d: usize,
}

impl<T: LogTarget + ?Sized> SliceTest for CoordinateSlice<'_, T> {
    type State = f64;

    fn contains(&mut self, x: &[f64], log_y: f64) -> Result<Option<f64>> {
        let mut full = self.base.to_vec();
        full[self.d] = x[0];
        let lp = self.target.log_density(&full)?;
        Ok((log_y < lp).then_some(lp))
    }
}

/// Hyperrectangle slice sampling with per-dimension stepping out and
/// shrinkage.
pub fn slice_hyperrect<T: LogTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    options: &SliceOptions,
    iterations: usize,
    seed: u64,
) -> Result<Chain> {
    let mut lp = start(target, x0, options)?;
    let mut rng = chain_rng(seed);
    let settings = SamplerSettings::Slice {
        widths: options.widths.clone(),
        max_steps: options.max_steps,
    };
    let mut chain = Chain::new(target.param_names(), seed, settings, iterations);
    let mut x = x0.to_vec();
    let mut test = ExactSlice { target };
    for _ in 0..iterations {
        let log_y = lp + log_uniform(&mut rng);
        let (nx, nlp) = hyperrect_update(&mut test, &x, log_y, &options.widths, options.max_steps, &mut rng)?;
        let moved = nx != x;
        x = nx;
        lp = nlp;
        chain.push(target.to_output(&x), lp, moved);
    }
    Ok(chain)
}
