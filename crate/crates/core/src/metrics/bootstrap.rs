//! Percentile bootstrap confidence intervals.
//!
//! Resampling uses ChaCha8 seeded through `SeedableRng::seed_from_u64`, drawing
//! one index per resampled element in order, so intervals are reproducible for
//! a given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 1000;

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 2.5th and 97.5th percentiles of the means of `iterations` resamples.
pub fn bootstrap_ci(scores: &[f64], iterations: usize, seed: u64) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs at least one score".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one iteration".into()));
    }
    let n = scores.len();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // clamped: rounding in the sum must not push a mean outside the data range
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| {
            let m = (0..n).map(|_| scores[rng.random_range(0..n)]).sum::<f64>() / n as f64;
            m.clamp(lo, hi)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((percentile_sorted(&means, 0.025), percentile_sorted(&means, 0.975)))
}
