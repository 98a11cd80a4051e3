//! Competitor models: uniform over the active set, a pooled grid KDE, and
//! the contact model fit by maximum likelihood.

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{GridIndex, CELL_COUNT, GRID_HEIGHT, GRID_WIDTH, SHAPE_CODES};
use crate::kernel::{Kernel, KernelParams, KERNEL_REACH};
use crate::likelihood::ShoeCells;

/// Log density of a shoe's accidentals under the uniform-over-active-cells
/// model: `1/|A|` per accidental inside the active set, zero outside.
pub fn uniform_log_density(cm: &CoarseMap, accidentals: &[(f64, f64)]) -> Result<f64> {
    let per_cell = -( cm.active_count() as f64).ln();
    let mut total = 0.0;
    for &(x1, x2) in accidentals {
        let cell = GridIndex::cell_of(x1, x2)?;
        if cm.region(cell.a1, cell.a2) == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += per_cell;
    }
    Ok(total)
}

/// Pooled kernel density estimate on the grid.
///
/// Training accidentals from every shoe are histogrammed to cells (contact
/// surfaces are ignored, as in the pooled-estimator approach) and smoothed
/// with the model's own finite-support kernel at reference parameters. The
/// density is normalized over a 3-cell-padded grid so smoothing near the
/// boundary conserves mass.
#[derive(Debug, Clone)]
pub struct KdeFit {
    /// Density per padded cell, row-major on the padded grid.
    padded: Vec<f64>,
}

const PAD: i32 = KERNEL_REACH;
const PADDED_W: usize = GRID_WIDTH + 2 * PAD as usize;
const PADDED_H: usize = GRID_HEIGHT + 2 * PAD as usize;

fn padded_index(a1: i32, a2: i32) -> usize {
    debug_assert!(a1 >= 1 - PAD && a1 <= GRID_WIDTH as i32 + PAD);
    debug_assert!(a2 >= 1 - PAD && a2 <= GRID_HEIGHT as i32 + PAD);
    (a2 + PAD - 1) as usize * PADDED_W + (a1 + PAD - 1) as usize
}

/// Fit the KDE from pooled training accidentals.
///
/// `restrict_to` optionally renormalizes the density over a coarse map's
/// active set instead of the padded grid.
pub fn kde_fit(
    training: &[(f64, f64)],
    restrict_to: Option<&CoarseMap>,
) -> Result<KdeFit> {
    if training.is_empty() {
        return Err(Error::Config("KDE needs at least one training point".into()));
    }
    let kernel = Kernel::from_params(&KernelParams::zeros());
    let mut padded = vec![0.0; PADDED_W * PADDED_H];
    let weight = 1.0 / training.len() as f64;
    for &(x1, x2) in training {
        let cell = GridIndex::cell_of(x1, x2)?;
        for dj in -PAD..=PAD {
            for di in -PAD..=PAD {
                padded[padded_index(cell.a1 + di, cell.a2 + dj)] +=
                    weight * kernel.weight_at(di, dj);
            }
        }
    }
    if let Some(cm) = restrict_to {
        let mut total = 0.0;
        for idx in 0..CELL_COUNT {
            let a = GridIndex::from_flat(idx);
            if cm.region_at_flat(idx) > 0 {
                total += padded[padded_index(a.a1, a.a2)];
            }
        }
        if total <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let mut restricted = vec![0.0; PADDED_W * PADDED_H];
        for idx in 0..CELL_COUNT {
            if cm.region_at_flat(idx) > 0 {
                let a = GridIndex::from_flat(idx);
                let p = padded_index(a.a1, a.a2);
                restricted[p] = padded[p] / total;
            }
        }
        padded = restricted;
    }
    Ok(KdeFit { padded })
}

impl KdeFit {
    /// Density mass at a grid cell (zero off the padded support).
    pub fn cell_density(&self, a1: i32, a2: i32) -> f64 {
        if a1 < 1 - PAD
            || a1 > GRID_WIDTH as i32 + PAD
            || a2 < 1 - PAD
            || a2 > GRID_HEIGHT as i32 + PAD
        {
            0.0
        } else {
            self.padded[padded_index(a1, a2)]
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.padded.iter().sum()
    }
}

/// Log density of a shoe under the fitted KDE (product over accidentals).
pub fn kde_log_density(fit: &KdeFit, accidentals: &[(f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(x1, x2) in accidentals {
        let cell = GridIndex::cell_of(x1, x2)?;
        let d = fit.cell_density(cell.a1, cell.a2);
        if d <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += d.ln();
    }
    Ok(total)
}

/// Parameters of the contact model: one log-linear coefficient per shape
/// code, with the first fixed at 1 for identifiability.
#[derive(Debug, Clone)]
pub struct ContactModelParams {
    pub alpha: [f64; SHAPE_CODES],
}

/// Outcome of the maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct ContactFit {
    pub params: ContactModelParams,
    /// Shape codes absent from every training mask; their coefficients were
    /// pinned to the anchor value.
    pub pinned: Vec<u8>,
    /// Training accidentals outside the active set, skipped with a warning.
    pub skipped: usize,
    pub iterations: usize,
}

/// Per-shoe sufficient statistics for the contact model: how many active
/// cells and how many accidentals carry each shape code.
fn contact_stats(cells: &ShoeCells, cm: &CoarseMap) -> ([f64; SHAPE_CODES], [f64; SHAPE_CODES], usize) {
    let mut m = [0.0; SHAPE_CODES];
    for g in &cells.groups {
        m[g.code as usize - 1] += g.count as f64;
    }
    let mut t = [0.0; SHAPE_CODES];
    let mut skipped = 0usize;
    for &x in &cells.acc_cells {
        if cm.region_at_flat(x as usize) == 0 {
            skipped += 1;
            continue;
        }
        t[cells.code_at(x) as usize - 1] += 1.0;
    }
    (m, t, skipped)
}

const CONTACT_GRAD_TOL: f64 = 1e-6;
const CONTACT_MAX_ITERS: usize = 2_000_000;
/// Coefficient for shape codes that occur on masks but never in the data:
/// their likelihood is maximized only in the limit `alpha -> -inf`, so they
/// are held at a value whose contribution is numerically zero.
const CONTACT_ALPHA_FLOOR: f64 = -20.0;

/// Fit the contact model by gradient ascent with backtracking line search.
/// The multinomial log-likelihood is concave, so the returned point is the
/// global optimum up to the gradient tolerance (taken over the identifiable
/// coordinates with attainable maximizers).
pub fn contact_mle(shoes: &[&ShoeCells], cm: &CoarseMap) -> Result<ContactFit> {
    if shoes.is_empty() {
        return Err(Error::Config("contact model needs training shoes".into()));
    }
    let stats: Vec<([f64; SHAPE_CODES], [f64; SHAPE_CODES], usize)> =
        shoes.iter().map(|c| contact_stats(c, cm)).collect();
    let skipped: usize = stats.iter().map(|s| s.2).sum();
    let mut present = [false; SHAPE_CODES];
    let mut observed = [false; SHAPE_CODES];
    for (m, t, _) in &stats {
        for c in 0..SHAPE_CODES {
            present[c] |= m[c] > 0.0;
            observed[c] |= t[c] > 0.0;
        }
    }
    let pinned: Vec<u8> = (0..SHAPE_CODES)
        .filter(|&c| !present[c])
        .map(|c| c as u8 + 1)
        .collect();
    // free coordinates: identifiable, observed, and not the anchor
    let mut free = [false; SHAPE_CODES];
    for c in 1..SHAPE_CODES {
        free[c] = present[c] && observed[c];
    }

    let anchor = 1.0f64;
    let mut alpha = [anchor; SHAPE_CODES];
    for c in 0..SHAPE_CODES {
        if present[c] && !observed[c] {
            alpha[c] = CONTACT_ALPHA_FLOOR;
        }
    }

    let objective = |alpha: &[f64; SHAPE_CODES]| -> f64 {
        let mut ll = 0.0;
        for (m, t, _) in &stats {
            let n: f64 = t.iter().sum();
            if n == 0.0 {
                continue;
            }
            let z: f64 = m
                .iter()
                .zip(alpha)
                .map(|(&mc, &a)| mc * a.exp())
                .sum();
            ll += t
                .iter()
                .zip(alpha)
                .map(|(&tc, &a)| tc * a)
                .sum::<f64>()
                - n * z.ln();
        }
        ll
    };
    let gradient = |alpha: &[f64; SHAPE_CODES]| -> [f64; SHAPE_CODES] {
        let mut g = [0.0; SHAPE_CODES];
        for (m, t, _) in &stats {
            let n: f64 = t.iter().sum();
            if n == 0.0 {
                continue;
            }
            let z: f64 = m
                .iter()
                .zip(alpha)
                .map(|(&mc, &a)| mc * a.exp())
                .sum();
            for c in 0..SHAPE_CODES {
                g[c] += t[c] - n * m[c] * alpha[c].exp() / z;
            }
        }
        for c in 0..SHAPE_CODES {
            if !free[c] {
                g[c] = 0.0;
            }
        }
        g
    };

    let mut ll = objective(&alpha);
    let mut iterations = 0usize;
    let mut certified = 1.0f64; // last Armijo-certified step size
    loop {
        let g = gradient(&alpha);
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm < CONTACT_GRAD_TOL {
            break;
        }
        iterations += 1;
        if iterations > CONTACT_MAX_ITERS {
            return Err(Error::NonFinite(
                "contact model fit failed to converge".into(),
            ));
        }
        let gsq: f64 = g.iter().map(|v| v * v).sum();
        // improvements below the objective's float resolution cannot be
        // certified by the line search; past that point, advance at the last
        // certified step and let the gradient norm alone gate convergence
        let noise_floor = 1e-9 * (1.0 + ll.abs());
        let mut step = certified * 4.0;
        loop {
            let required = 0.5 * step * gsq;
            if required <= noise_floor {
                let safe = certified.min(step);
                for c in 0..SHAPE_CODES {
                    alpha[c] += safe * g[c];
                }
                ll = objective(&alpha);
                break;
            }
            let mut trial = alpha;
            for c in 0..SHAPE_CODES {
                trial[c] += step * g[c];
            }
            let trial_ll = objective(&trial);
            if trial_ll >= ll + required {
                alpha = trial;
                ll = trial_ll;
                certified = step;
                break;
            }
            step *= 0.5;
        }
    }
    for c in 0..SHAPE_CODES {
        if !present[c] {
            alpha[c] = anchor;
        }
    }
    Ok(ContactFit {
        params: ContactModelParams { alpha },
        pinned,
        skipped,
        iterations,
    })
}

/// Log density of one shoe's accidentals under the contact model:
/// `Lambda(a) ~ exp(alpha[code(a)])` normalized over that shoe's active set.
pub fn contact_log_density(
    params: &ContactModelParams,
    cells: &ShoeCells,
    cm: &CoarseMap,
) -> f64 {
    let (m, _, _) = contact_stats(cells, cm);
    let z: f64 = m
        .iter()
        .zip(&params.alpha)
        .map(|(&mc, &a)| mc * a.exp())
        .sum();
    let mut ll = 0.0;
    for &x in &cells.acc_cells {
        if cm.region_at_flat(x as usize) == 0 {
            return f64::NEG_INFINITY;
        }
        ll += params.alpha[cells.code_at(x) as usize - 1] - z.ln();
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::tiny_map;
    use crate::grid::ContactSurface;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_density_constant_and_zero_off_support() {
        let cm = tiny_map(2, 2, 5);
        let cell = cm.active_cells()[3];
        let a = GridIndex::from_flat(cell as usize);
        let inside = vec![((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)];
        let ll = uniform_log_density(&cm, &inside).unwrap();
        assert!((ll - (1.0f64 / 100.0).ln()).abs() < 1e-12);
        let outside = vec![(1.5, 1.5)];
        assert_eq!(uniform_log_density(&cm, &outside).unwrap(), f64::NEG_INFINITY);
        assert_eq!(uniform_log_density(&cm, &[]).unwrap(), 0.0);
    }

    #[test]
    fn kde_single_point_center_mass_is_kernel_center() {
        let fit = kde_fit(&[(50.5, 100.5)], None).unwrap();
        assert!((fit.cell_density(51, 101) - 0.175601).abs() < 1e-6);
        assert!((fit.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kde_zero_far_from_training_points() {
        let fit = kde_fit(&[(50.5, 100.5)], None).unwrap();
        // more than 3 cells away in either axis: exactly zero
        assert_eq!(fit.cell_density(51 + 4, 101), 0.0);
        let ll = kde_log_density(&fit, &[(70.5, 100.5)]).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn kde_mass_conserved_near_grid_edge() {
        // a point hugging the grid corner smooths into the pad, not away
        let fit = kde_fit(&[(0.5, 0.5)], None).unwrap();
        assert!((fit.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn contact_density_matches_softmax_by_hand() {
        // two active cells with distinct codes and alpha contrast log 3
        // gives probabilities 1/4 and 3/4
        let cm = tiny_map(1, 1, 2);
        let cells_v: Vec<u32> = cm.active_cells().to_vec();
        let a = GridIndex::from_flat(cells_v[0] as usize);
        let mask = ContactSurface::from_fn("two", |x, y| x == a.a1 && y == a.a2);
        let pts = vec![((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)];
        let sc = ShoeCells::build(&mask, &pts, &cm).unwrap();
        let code_at_a = sc.code_at(cells_v[0]) as usize;
        // the single-contact mask yields four distinct codes on the 2x2
        // patch; give the data cell's code a log-3 advantage over the rest
        let mut params = ContactModelParams { alpha: [0.0; SHAPE_CODES] };
        params.alpha[code_at_a - 1] = 3.0f64.ln();
        let other_codes: Vec<usize> = cells_v[1..]
            .iter()
            .map(|&c| sc.code_at(c) as usize)
            .collect();
        assert!(!other_codes.contains(&code_at_a));
        let ll = contact_log_density(&params, &sc, &cm);
        // P(cell a) = 3 / (3 + 3 * 1) = 0.5 for 4 cells with one boosted
        let expect = (3.0f64 / (3.0 + 3.0)).ln();
        assert!((ll - expect).abs() < 1e-12, "{ll} vs {expect}");
        // shifting every alpha by a constant changes nothing
        for v in params.alpha.iter_mut() {
            *v += 2.5;
        }
        assert!((contact_log_density(&params, &sc, &cm) - ll).abs() < 1e-9);
    }

    #[test]
    fn contact_mle_recovers_simulated_contrast() {
        let cm = tiny_map(2, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        // one mask with diverse codes
        let mask = ContactSurface::from_fn("train", |a1, a2| {
            cm.region(a1, a2) > 0 && (a1 + a2) % 3 != 0
        });
        let probe = ShoeCells::build(&mask, &[], &cm).unwrap();
        // ground truth: alpha rising in code index, contrast 2.0 across the
        // range actually present
        let mut truth = [0.0f64; SHAPE_CODES];
        for (c, v) in truth.iter_mut().enumerate() {
            *v = 2.0 * c as f64 / 31.0;
        }
        // simulate accidentals from the softmax over active cells
        let weights: Vec<f64> = cm
            .active_cells()
            .iter()
            .map(|&cell| truth[probe.code_at(cell) as usize - 1].exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut pts = Vec::new();
        for _ in 0..100_000 {
            let mut draw = rng.random::<f64>() * total;
            let mut cell = cm.active_cells()[0];
            for (k, &w) in weights.iter().enumerate() {
                if draw < w {
                    cell = cm.active_cells()[k];
                    break;
                }
                draw -= w;
            }
            let a = GridIndex::from_flat(cell as usize);
            pts.push(((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5));
        }
        let sc = ShoeCells::build(&mask, &pts, &cm).unwrap();
        let fit = contact_mle(&[&sc], &cm).unwrap();
        // compare contrasts between two codes that occur often
        let (m, _, _) = contact_stats(&sc, &cm);
        let mut common: Vec<usize> = (0..SHAPE_CODES).filter(|&c| m[c] > 20.0).collect();
        common.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap());
        let (c1, c2) = (common[0], common[1]);
        let got = fit.params.alpha[c1] - fit.params.alpha[c2];
        let want = truth[c1] - truth[c2];
        assert!((got - want).abs() < 0.1, "contrast {got} vs {want}");
        assert_eq!(fit.skipped, 0);
    }

    #[test]
    fn contact_mle_gradient_tolerance_and_pinning() {
        let cm = tiny_map(1, 1, 4);
        let mask = ContactSurface::from_fn("flat", |a1, a2| cm.region(a1, a2) > 0);
        let cell = cm.active_cells()[5];
        let a = GridIndex::from_flat(cell as usize);
        let pts = vec![((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)];
        let sc = ShoeCells::build(&mask, &pts, &cm).unwrap();
        let fit = contact_mle(&[&sc], &cm).unwrap();
        // absent codes are pinned to the anchor
        assert!(!fit.pinned.is_empty());
        for &code in &fit.pinned {
            assert_eq!(fit.params.alpha[code as usize - 1], 1.0);
        }
        assert_eq!(fit.params.alpha[0], 1.0);
    }

    #[test]
    fn contact_loglik_is_concave_along_random_directions() {
        let cm = tiny_map(2, 2, 6);
        let mask = ContactSurface::from_fn("m", |a1, a2| (a1 * 5 + a2) % 4 != 0);
        let pts: Vec<(f64, f64)> = cm.active_cells()[..8]
            .iter()
            .map(|&c| {
                let a = GridIndex::from_flat(c as usize);
                ((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)
            })
            .collect();
        let sc = ShoeCells::build(&mask, &pts, &cm).unwrap();
        let stats = contact_stats(&sc, &cm);
        let obj = |alpha: &[f64; SHAPE_CODES]| -> f64 {
            let (m, t, _) = &stats;
            let n: f64 = t.iter().sum();
            let z: f64 = m.iter().zip(alpha).map(|(&mc, &a)| mc * a.exp()).sum();
            t.iter().zip(alpha).map(|(&tc, &a)| tc * a).sum::<f64>() - n * z.ln()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        for _ in 0..20 {
            let mut base = [0.0f64; SHAPE_CODES];
            let mut dir = [0.0f64; SHAPE_CODES];
            for c in 0..SHAPE_CODES {
                base[c] = rng.random::<f64>() * 2.0 - 1.0;
                dir[c] = rng.random::<f64>() * 2.0 - 1.0;
            }
            let eps = 1e-3;
            let mut plus = base;
            let mut minus = base;
            for c in 0..SHAPE_CODES {
                plus[c] += eps * dir[c];
                minus[c] -= eps * dir[c];
            }
            let second = obj(&plus) - 2.0 * obj(&base) + obj(&minus);
            assert!(second <= 1e-9, "positive curvature {second}");
        }
    }
}
