//! Brute-force evaluation of the marginal accidental density on tiny
//! instances.
//!
//! Two independent routes to the same quantity:
//!
//! * [`marginal_bruteforce_z`] enumerates every admissible assignment
//!   configuration and integrates the remaining one-dimensional integral
//!   over the auxiliary scalar with adaptive quadrature on a log axis.
//! * [`marginal_bruteforce_nu`] is naive Monte Carlo over the per-cell gamma
//!   scores of the raw (un-augmented) likelihood.
//!
//! Both refuse instances large enough to make enumeration meaningless; they
//! exist to pin down the correctness of the much faster machinery used for
//! fitting and evaluation.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{ContactSurface, GridIndex};
use crate::likelihood::{window_cells, ModelVariant, ShoeCells};
use crate::params::GlobalParams;
use crate::util::{ln_gamma, log_sum_exp, mean};

/// Controls for the 1-D quadrature over the auxiliary scalar.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Brackets expand until the integrand falls below `tail_ratio` times
    /// its peak.
    pub tail_ratio: f64,
    /// Relative tolerance of the adaptive Simpson refinement.
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            tail_ratio: 1e-14,
            rel_tol: 1e-10,
        }
    }
}

const MAX_ACTIVE: usize = 50;
const MAX_ACCIDENTALS: usize = 4;

/// Exact (up to quadrature error) marginal density of one shoe's
/// accidentals via exhaustive assignment enumeration.
pub fn marginal_bruteforce_z(
    theta: &GlobalParams,
    mask: &ContactSurface,
    accidentals: &[(f64, f64)],
    cm: &CoarseMap,
    variant: ModelVariant,
    qcfg: &QuadratureConfig,
) -> Result<f64> {
    guard(cm, accidentals.len())?;
    if !variant.scores_on {
        return Err(Error::Config(
            "score-free variants have a closed-form density; use density_no_scores".into(),
        ));
    }
    let n = accidentals.len();
    if n == 0 {
        return Ok(1.0);
    }
    let cells = ShoeCells::build(mask, accidentals, cm)?;
    let kernel = variant.kernel(theta);
    let q = theta.q;

    // admissible assignment cells per accidental: active cells in the window
    let supports: Vec<Vec<(u32, f64)>> = cells
        .acc_cells
        .iter()
        .map(|&x| {
            let xa = GridIndex::from_flat(x as usize);
            window_cells(xa)
                .filter(|&z| {
                    cm.region_at_flat(z as usize) > 0 && cells.wphi_at(z, theta, cm) > 0.0
                })
                .map(|z| {
                    let za = GridIndex::from_flat(z as usize);
                    (z, kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2))
                })
                .filter(|&(_, k)| k > 0.0)
                .collect::<Vec<_>>()
        })
        .collect();
    if supports.iter().any(|s| s.is_empty()) {
        return Err(Error::ImpossibleAssignment {
            shoe: mask.shoe_id.clone(),
            accidental: supports.iter().position(|s| s.is_empty()).unwrap(),
        });
    }
    let combos: usize = supports.iter().map(|s| s.len()).product();
    if combos > 2_000_000 {
        return Err(Error::SizeGuard(format!(
            "{combos} assignment configurations"
        )));
    }

    // per-configuration static parts: kernel product, gamma ratios, and the
    // occupied cells with their counts
    struct Config {
        static_log: f64,
        occupied: Vec<(f64, f64)>, // (w*phi, count)
    }
    let mut configs = Vec::with_capacity(combos);
    let mut pick = vec![0usize; n];
    loop {
        let mut counts: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
        let mut static_log = 0.0;
        for (i, &p) in pick.iter().enumerate() {
            let (z, k) = supports[i][p];
            if variant.kernel_on {
                static_log += k.ln();
            }
            *counts.entry(z).or_insert(0) += 1;
        }
        let mut occupied = Vec::with_capacity(counts.len());
        for (&cell, &c) in &counts {
            let wphi = cells.wphi_at(cell, theta, cm);
            let c = c as f64;
            static_log += ln_gamma(q + c) - ln_gamma(q) + c * wphi.ln();
            occupied.push((wphi, c));
        }
        configs.push(Config {
            static_log,
            occupied,
        });
        // advance the mixed-radix counter
        let mut i = 0;
        loop {
            if i == n {
                break;
            }
            pick[i] += 1;
            if pick[i] < supports[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }

    // gridwide w*phi values for the q * log(u w phi + 1) sum
    let wphis: Vec<(f64, f64)> = cells
        .groups
        .iter()
        .map(|g| {
            (
                theta.w_e[g.region as usize - 1] * theta.phi[g.code as usize - 1],
                g.count as f64,
            )
        })
        .collect();

    let nf = n as f64;
    let log_f = |t: f64| -> f64 {
        let u = t.exp();
        let l1: f64 = wphis.iter().map(|&(wp, c)| c * (u * wp).ln_1p()).sum();
        let mut terms = Vec::with_capacity(configs.len());
        for cfg in &configs {
            let occ: f64 = cfg
                .occupied
                .iter()
                .map(|&(wp, c)| c * (u * wp).ln_1p())
                .sum();
            terms.push(cfg.static_log - occ);
        }
        // integrand in u, times u for the log-axis substitution
        (nf - 1.0) * t - ln_gamma(nf) - q * l1 + log_sum_exp(&terms) + t
    };

    Ok(log_integrate(&log_f, qcfg).exp())
}

/// Naive Monte Carlo over the gamma scores: `(estimate, standard error)`.
pub fn marginal_bruteforce_nu<R: Rng + ?Sized>(
    theta: &GlobalParams,
    mask: &ContactSurface,
    accidentals: &[(f64, f64)],
    cm: &CoarseMap,
    variant: ModelVariant,
    m: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    guard(cm, accidentals.len())?;
    if m < 100 {
        return Err(Error::Config(format!(
            "need at least 100 Monte Carlo draws, got {m}"
        )));
    }
    let cells = ShoeCells::build(mask, accidentals, cm)?;
    let kernel = variant.kernel(theta);
    let gamma = Gamma::new(theta.q, 1.0).expect("q > 0");

    // static per-active-cell w*phi, and per-accidental window views
    let active: Vec<(u32, f64)> = cm
        .active_cells()
        .iter()
        .map(|&c| (c, cells.wphi_at(c, theta, cm)))
        .collect();
    let index_of: std::collections::HashMap<u32, usize> = active
        .iter()
        .enumerate()
        .map(|(i, &(c, _))| (c, i))
        .collect();
    let windows: Vec<Vec<(usize, f64)>> = cells
        .acc_cells
        .iter()
        .map(|&x| {
            let xa = GridIndex::from_flat(x as usize);
            window_cells(xa)
                .filter_map(|z| {
                    index_of.get(&z).map(|&i| {
                        let za = GridIndex::from_flat(z as usize);
                        (i, kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2))
                    })
                })
                .collect()
        })
        .collect();

    let mut draws = Vec::with_capacity(m);
    let mut nu = vec![0.0; active.len()];
    for _ in 0..m {
        for slot in nu.iter_mut() {
            *slot = gamma.sample(rng);
        }
        let denom: f64 = active
            .iter()
            .zip(&nu)
            .map(|(&(_, wp), &v)| wp * v)
            .sum();
        let mut val = 1.0;
        for window in &windows {
            let lam: f64 = window
                .iter()
                .map(|&(i, k)| k * active[i].1 * nu[i])
                .sum::<f64>()
                / denom;
            val *= lam;
        }
        draws.push(val);
    }
    let est = mean(&draws);
    let se = (crate::util::variance(&draws) / m as f64).sqrt();
    Ok((est, se))
}

/// Closed-form density for score-free variants: the product over
/// accidentals of the kernel-smoothed normalized weights.
pub fn density_no_scores(
    theta: &GlobalParams,
    mask: &ContactSurface,
    accidentals: &[(f64, f64)],
    cm: &CoarseMap,
    kernel_on: bool,
) -> Result<f64> {
    let cells = ShoeCells::build(mask, accidentals, cm)?;
    let kernel = if kernel_on {
        crate::kernel::Kernel::from_params(&theta.kparams)
    } else {
        crate::kernel::Kernel::identity()
    };
    let total = cells.sum_wphi(theta);
    if total <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let mut val = 1.0;
    for &x in &cells.acc_cells {
        let xa = GridIndex::from_flat(x as usize);
        let lam: f64 = window_cells(xa)
            .filter(|&z| cm.region_at_flat(z as usize) > 0)
            .map(|z| {
                let za = GridIndex::from_flat(z as usize);
                kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2) * cells.wphi_at(z, theta, cm)
            })
            .sum::<f64>()
            / total;
        val *= lam;
    }
    Ok(val)
}

fn guard(cm: &CoarseMap, n: usize) -> Result<()> {
    if cm.active_count() > MAX_ACTIVE {
        return Err(Error::SizeGuard(format!(
            "{} active cells exceeds the brute-force limit of {MAX_ACTIVE}",
            cm.active_count()
        )));
    }
    if n > MAX_ACCIDENTALS {
        return Err(Error::SizeGuard(format!(
            "{n} accidentals exceeds the brute-force limit of {MAX_ACCIDENTALS}"
        )));
    }
    Ok(())
}

/// Integrate `exp(log_f(t))` over the real line, returning the log of the
/// integral. The integrand must be unimodal-ish: a coarse scan finds the
/// peak, brackets expand until the tails are negligible, then adaptive
/// Simpson refines.
pub fn log_integrate(log_f: &dyn Fn(f64) -> f64, cfg: &QuadratureConfig) -> f64 {
    // coarse peak scan
    let mut best_t = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut t = -60.0;
    while t <= 60.0 {
        let v = log_f(t);
        if v > best {
            best = v;
            best_t = t;
        }
        t += 0.5;
    }
    let cutoff = best + cfg.tail_ratio.ln();
    let mut lo = best_t;
    while log_f(lo) > cutoff {
        lo -= 1.0;
        if lo < -800.0 {
            break;
        }
    }
    let mut hi = best_t;
    while log_f(hi) > cutoff {
        hi += 1.0;
        if hi > 800.0 {
            break;
        }
    }
    let g = |x: f64| (log_f(x) - best).exp();
    let integral = adaptive_simpson(&g, lo, hi, cfg.rel_tol);
    best + integral.ln()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(m), f(hi));
    let whole = simpson(lo, hi, fa, fm, fb);
    // scale the absolute tolerance by a first-pass magnitude estimate
    let tol = rel_tol * whole.abs().max(1e-300);
    recurse(f, lo, hi, fa, fm, fb, whole, tol, 40)
}
