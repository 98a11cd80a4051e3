//! Held-out density evaluation by importance sampling, and the per-shoe
//! comparison metrics.
//!
//! For each retained posterior draw, one importance sample of the auxiliary
//! pair `(u, Z)` yields an unbiased weight for the shoe's marginal density;
//! the estimate is the weight-chain mean. The per-accidental metric
//! `20000 * p^(1/N)` rescales so a uniform density over the unit square
//! scores 1.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{ContactSurface, GridIndex};
use crate::kernel::Kernel;
use crate::likelihood::{window_cells, ShoeCells};
use crate::params::GlobalParams;
use crate::records::PosteriorDraws;
use crate::util::{ln_gamma, log_sum_exp};

/// Evaluation output for one held-out shoe.
#[derive(Debug, Clone)]
pub struct HeldoutResult {
    pub shoe_id: String,
    pub n_accidentals: usize,
    /// Log importance weight per posterior draw.
    pub log_weights: Vec<f64>,
    /// Log of the density estimate (mean of the weights).
    pub estimate_log: f64,
    pub metric: f64,
    pub ess: f64,
}

/// Draw the auxiliary scalar from its importance distribution
/// `Gamma(N, q * sum_a w_a phi_a)`.
pub fn importance_draw_u<R: Rng + ?Sized>(
    theta: &GlobalParams,
    cells: &ShoeCells,
    n: usize,
    rng: &mut R,
) -> f64 {
    let rate = theta.q * cells.sum_wphi(theta);
    Gamma::new(n as f64, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng)
}

/// Draw one assignment from the `w * phi * k`-weighted window around an
/// accidental's cell.
pub fn importance_draw_z<R: Rng + ?Sized>(
    theta: &GlobalParams,
    cells: &ShoeCells,
    cm: &CoarseMap,
    kernel: &Kernel,
    x_cell: u32,
    rng: &mut R,
) -> Result<u32> {
    let xa = GridIndex::from_flat(x_cell as usize);
    let mut cand: Vec<(u32, f64)> = Vec::with_capacity(49);
    let mut total = 0.0;
    for z in window_cells(xa) {
        let wphi = cells.wphi_at(z, theta, cm);
        if wphi <= 0.0 {
            continue;
        }
        let za = GridIndex::from_flat(z as usize);
        let k = kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2);
        if k <= 0.0 {
            continue;
        }
        cand.push((z, wphi * k));
        total += wphi * k;
    }
    if total <= 0.0 {
        return Err(Error::ImpossibleAssignment {
            shoe: cells.shoe_id.clone(),
            accidental: 0,
        });
    }
    let draw = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(z, wt) in &cand {
        acc += wt;
        if draw < acc {
            return Ok(z);
        }
    }
    Ok(cand[cand.len() - 1].0)
}

/// `sum_b w phi k` over the window of one accidental: the assignment
/// normalizer appearing in the weight.
fn window_mass(
    theta: &GlobalParams,
    cells: &ShoeCells,
    cm: &CoarseMap,
    kernel: &Kernel,
    x_cell: u32,
) -> f64 {
    let xa = GridIndex::from_flat(x_cell as usize);
    window_cells(xa)
        .map(|z| {
            let wphi = cells.wphi_at(z, theta, cm);
            if wphi <= 0.0 {
                return 0.0;
            }
            let za = GridIndex::from_flat(z as usize);
            wphi * kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2)
        })
        .sum()
}

/// Log importance weight of an `(u, Z)` draw: the augmented integrand
/// divided by the importance density, with the zero-count cells cancelled
/// against the gamma prefactor exactly as in the likelihood.
pub fn importance_log_weight(
    theta: &GlobalParams,
    cells: &ShoeCells,
    cm: &CoarseMap,
    kernel: &Kernel,
    u: f64,
    z: &[u32],
) -> Result<f64> {
    let n = cells.acc_cells.len();
    debug_assert_eq!(z.len(), n);
    let q = theta.q;
    let sum_wphi = cells.sum_wphi(theta);
    let beta = q * sum_wphi;
    let mut lw = u * beta - (n as f64) * beta.ln();
    for &x in &cells.acc_cells {
        let s = window_mass(theta, cells, cm, kernel, x);
        if s <= 0.0 {
            return Err(Error::ImpossibleAssignment {
                shoe: cells.shoe_id.clone(),
                accidental: 0,
            });
        }
        lw += s.ln();
    }
    // occupied-cell corrections
    let mut counts: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
    for &cell in z {
        *counts.entry(cell).or_insert(0) += 1;
    }
    for (&cell, &c) in &counts {
        let wphi = cells.wphi_at(cell, theta, cm);
        if wphi <= 0.0 {
            return Err(Error::ImpossibleAssignment {
                shoe: cells.shoe_id.clone(),
                accidental: 0,
            });
        }
        let c = c as f64;
        lw += ln_gamma(q + c) - ln_gamma(q) - c * (u * wphi).ln_1p();
    }
    // q * log(u w phi + 1) over the whole active set
    lw -= q * cells.log1p_sum(theta, u);
    Ok(lw)
}

/// Exact per-draw log density for score-free variants.
fn log_density_no_scores(
    theta: &GlobalParams,
    cells: &ShoeCells,
    cm: &CoarseMap,
    kernel: &Kernel,
) -> Result<f64> {
    let total = cells.sum_wphi(theta);
    if total <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let mut lw = 0.0;
    for &x in &cells.acc_cells {
        let s = window_mass(theta, cells, cm, kernel, x);
        if s <= 0.0 {
            return Err(Error::ImpossibleAssignment {
                shoe: cells.shoe_id.clone(),
                accidental: 0,
            });
        }
        lw += s.ln() - total.ln();
    }
    Ok(lw)
}

/// Estimate the held-out density of one shoe from a posterior draw chain,
/// using one importance sample per draw.
pub fn heldout_density<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    cm: &CoarseMap,
    mask: &ContactSurface,
    accidentals: &[(f64, f64)],
    rng: &mut R,
) -> Result<HeldoutResult> {
    if draws.is_empty() {
        return Err(Error::Config("empty posterior draw chain".into()));
    }
    let cells = ShoeCells::build(mask, accidentals, cm)?;
    let n = cells.acc_cells.len();
    if n == 0 {
        return Ok(HeldoutResult {
            shoe_id: mask.shoe_id.clone(),
            n_accidentals: 0,
            log_weights: Vec::new(),
            estimate_log: 0.0,
            metric: f64::NAN,
            ess: 0.0,
        });
    }
    let mut log_weights = Vec::with_capacity(draws.len());
    for rec in &draws.records {
        let theta = rec.to_params()?;
        let kernel = draws.variant.kernel(&theta);
        let lw = if draws.variant.scores_on {
            let u = importance_draw_u(&theta, &cells, n, rng);
            let z: Vec<u32> = cells
                .acc_cells
                .iter()
                .map(|&x| importance_draw_z(&theta, &cells, cm, &kernel, x, rng))
                .collect::<Result<_>>()?;
            importance_log_weight(&theta, &cells, cm, &kernel, u, &z)?
        } else {
            log_density_no_scores(&theta, &cells, cm, &kernel)?
        };
        log_weights.push(lw);
    }
    let estimate_log = log_sum_exp(&log_weights) - (log_weights.len() as f64).ln();
    let metric = per_accidental_metric(estimate_log, n);
    // normalized linear weights for the mixing diagnostic
    let ess = if log_weights.len() >= 10 {
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let linear: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        chain_ess(&linear)
    } else {
        log_weights.len() as f64
    };
    Ok(HeldoutResult {
        shoe_id: mask.shoe_id.clone(),
        n_accidentals: n,
        log_weights,
        estimate_log,
        metric,
        ess,
    })
}

/// `20000 * estimate^(1/N)` from a log-domain estimate.
pub fn per_accidental_metric(estimate_log: f64, n: usize) -> f64 {
    assert!(n >= 1);
    20_000.0 * (estimate_log / n as f64).exp()
}

/// Geometric mean of per-shoe metrics; zero if any shoe scored zero.
pub fn geo_mean_metric(metrics: &[f64]) -> f64 {
    if metrics.is_empty() {
        return f64::NAN;
    }
    if metrics.iter().any(|&m| m <= 0.0) {
        return 0.0;
    }
    (metrics.iter().map(|m| m.ln()).sum::<f64>() / metrics.len() as f64).exp()
}

/// Effective sample size by Geyer's initial-positive-sequence truncation of
/// the autocorrelation function. A constant chain reports full size.
pub fn chain_ess(chain: &[f64]) -> f64 {
    let l = chain.len();
    assert!(l >= 10, "need at least 10 samples for an ESS estimate");
    let mean = crate::util::mean(chain);
    let centered: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let gamma = |k: usize| -> f64 {
        centered[..l - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / l as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return l as f64; // constant chain: no autocorrelation by convention
    }
    let mut sum_pairs = 0.0;
    let mut m = 0usize;
    loop {
        let k = 2 * m;
        if k + 1 >= l {
            break;
        }
        let pair = gamma(k) + gamma(k + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        m += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs / g0).max(1e-12);
    (l as f64 / tau).clamp(1.0, l as f64)
}
