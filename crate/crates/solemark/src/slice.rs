//! Univariate slice sampling and elliptical slice sampling.

use rand::Rng;

use crate::error::{Error, Result};

const MAX_STEPS: usize = 100_000;

/// One stepping-out-and-shrinkage slice update of a scalar.
///
/// `bounds` are hard limits treated as log-density negative infinity
/// outside; pass infinities for an unbounded axis. The returned point always
/// satisfies `logdensity(x) >= level`, so the target is left invariant for
/// any positive width.
pub fn slice_sample_1d<R: Rng + ?Sized>(
    logdensity: impl Fn(f64) -> f64,
    current: f64,
    width: f64,
    bounds: (f64, f64),
    rng: &mut R,
) -> Result<f64> {
    let (lo_bound, hi_bound) = bounds;
    let f0 = logdensity(current);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!(
            "slice sampler started at log-density {f0} (x = {current})"
        )));
    }
    let level = f0 + rng.random::<f64>().ln();

    // stepping out
    let mut left = current - rng.random::<f64>() * width;
    let mut right = left + width;
    let mut steps = 0;
    while left > lo_bound && logdensity(left) > level {
        left -= width;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonFinite("slice stepping-out ran away".into()));
        }
    }
    while right < hi_bound && logdensity(right) > level {
        right += width;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonFinite("slice stepping-out ran away".into()));
        }
    }
    left = left.max(lo_bound);
    right = right.min(hi_bound);

    // shrinkage
    loop {
        let x = left + rng.random::<f64>() * (right - left);
        if logdensity(x) > level {
            return Ok(x);
        }
        if x < current {
            left = x;
        } else {
            right = x;
        }
    }
}

/// One elliptical slice update against a zero-mean Gaussian prior.
///
/// `prior_draw` must be an independent draw from that prior; `loglik` is the
/// data term only. Always accepts after finitely many angle shrinks.
/// Returns the new state and its log-likelihood.
pub fn elliptical_slice<R: Rng + ?Sized>(
    current: &[f64],
    prior_draw: &[f64],
    loglik: impl Fn(&[f64]) -> f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    use std::f64::consts::TAU;
    let level = loglik(current) + rng.random::<f64>().ln();
    let mut angle = rng.random::<f64>() * TAU;
    let (mut lo, mut hi) = (angle - TAU, angle);
    loop {
        let proposal: Vec<f64> = current
            .iter()
            .zip(prior_draw)
            .map(|(x, v)| x * angle.cos() + v * angle.sin())
            .collect();
        let ll = loglik(&proposal);
        if ll > level {
            return (proposal, ll);
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
}
