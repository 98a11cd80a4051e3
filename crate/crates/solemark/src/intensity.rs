//! Per-shoe intensity construction: score draws, atom weights, kernel
//! convolution, and accidental sampling.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{GridIndex, ShapeCodeField, CELL_COUNT, GRID_WIDTH};
use crate::kernel::{Kernel, KERNEL_REACH};
use crate::params::GlobalParams;

/// Shoe-level multiplicative scores, one per active cell in the order of
/// [`CoarseMap::active_cells`].
#[derive(Debug, Clone)]
pub struct ShoeScores {
    pub values: Vec<f64>,
}

impl ShoeScores {
    /// All-ones scores (the "without scores" ablation).
    pub fn ones(cm: &CoarseMap) -> Self {
        ShoeScores {
            values: vec![1.0; cm.active_count()],
        }
    }

    /// Independent Gamma(q, 1) draws per active cell.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, q: f64, cm: &CoarseMap) -> Self {
        let gamma = Gamma::new(q, 1.0).expect("q > 0");
        ShoeScores {
            values: (0..cm.active_count()).map(|_| gamma.sample(rng)).collect(),
        }
    }
}

/// Spread the coarse weights onto the full grid: `w_a = w_E[region(a)]` on
/// active cells, zero elsewhere.
pub fn expand_w(w_e: &[f64], cm: &CoarseMap) -> Vec<f64> {
    let mut w = vec![0.0; CELL_COUNT];
    for &cell in cm.active_cells() {
        let r = cm.region_at_flat(cell as usize);
        w[cell as usize] = w_e[r as usize - 1];
    }
    w
}

/// Normalized atom weights over the active set:
/// `mu(a) = w_a * nu_a * phi[code(a)] / sum_b(...)`, zero off the active set.
pub fn mu_weights(
    theta: &GlobalParams,
    nu: &ShoeScores,
    codes: &ShapeCodeField,
    cm: &CoarseMap,
) -> Result<Vec<f64>> {
    assert_eq!(nu.values.len(), cm.active_count());
    let mut mu = vec![0.0; CELL_COUNT];
    let mut total = 0.0;
    for (k, &cell) in cm.active_cells().iter().enumerate() {
        let idx = cell as usize;
        let r = cm.region_at_flat(idx) as usize;
        let c = codes.at_flat(idx) as usize;
        let v = theta.w_e[r - 1] * nu.values[k] * theta.phi[c - 1];
        mu[idx] = v;
        total += v;
    }
    if total <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    for v in mu.iter_mut() {
        *v /= total;
    }
    Ok(mu)
}

/// Cell-resolution probability field for one shoe.
#[derive(Debug, Clone)]
pub struct IntensityField {
    pub lambda: Vec<f64>,
}

impl IntensityField {
    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// Convolve the atom weights with the kernel. The coarse map's edge margin
/// guarantees no mass leaves the grid, so the result still sums to one.
pub fn lambda_field(mu: &[f64], kernel: &Kernel) -> IntensityField {
    assert_eq!(mu.len(), CELL_COUNT);
    let mut lambda = vec![0.0; CELL_COUNT];
    let w = GRID_WIDTH as i32;
    for (idx, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let base = idx as i32;
        for dj in -KERNEL_REACH..=KERNEL_REACH {
            let row = base + dj * w;
            for di in -KERNEL_REACH..=KERNEL_REACH {
                let target = row + di;
                debug_assert!(target >= 0 && (target as usize) < CELL_COUNT);
                lambda[target as usize] += m * kernel.weight_at(di, dj);
            }
        }
    }
    IntensityField { lambda }
}

/// Draw `n` accidental locations: a categorical cell draw from the field,
/// jittered uniformly within the chosen cell.
pub fn sample_accidentals<R: Rng + ?Sized>(
    field: &IntensityField,
    n: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(field.lambda.len());
    let mut acc = 0.0;
    for &v in &field.lambda {
        acc += v;
        cdf.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let a = GridIndex::from_flat(idx);
        // jitter into (a-1, a]: 1 - U gives a draw in (0, 1]
        let x1 = (a.a1 - 1) as f64 + (1.0 - rng.random::<f64>());
        let x2 = (a.a2 - 1) as f64 + (1.0 - rng.random::<f64>());
        out.push((x1, x2));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::tiny_map;
    use crate::grid::{shape_code_field, ContactSurface};
    use crate::kernel::KernelParams;
    use crate::params::{sample_prior, PriorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_theta(cm: &CoarseMap) -> GlobalParams {
        GlobalParams {
            q: 1.0,
            w_e: vec![1.0; cm.n_regions()],
            phi: [1.0; 32],
            kparams: KernelParams::zeros(),
        }
    }

    #[test]
    fn expand_w_is_piecewise_constant_and_linear() {
        let cm = tiny_map(2, 2, 5);
        let w_e = vec![1.0, 2.0, 3.0, 4.0];
        let w = expand_w(&w_e, &cm);
        let scaled = expand_w(&[3.0, 6.0, 9.0, 12.0], &cm);
        let mut seen = [0usize; 5];
        for &cell in cm.active_cells() {
            let r = cm.region_at_flat(cell as usize) as usize;
            assert_eq!(w[cell as usize], w_e[r - 1]);
            assert_eq!(scaled[cell as usize], 3.0 * w[cell as usize]);
            seen[r] += 1;
        }
        assert!(seen[1..].iter().all(|&c| c == 25));
        // inactive cells stay zero
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), cm.active_count());
    }

    #[test]
    fn mu_uniform_when_everything_flat() {
        let cm = tiny_map(2, 2, 5);
        let theta = flat_theta(&cm);
        let mask = ContactSurface::from_fn("flat", |_, _| true);
        let codes = shape_code_field(&mask);
        let nu = ShoeScores::ones(&cm);
        let mu = mu_weights(&theta, &nu, &codes, &cm).unwrap();
        let expect = 1.0 / cm.active_count() as f64;
        for &cell in cm.active_cells() {
            assert!((mu[cell as usize] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_is_invariant_to_phi_rescaling() {
        let cm = tiny_map(2, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut theta = sample_prior(&mut rng, &PriorConfig::default(), &cm).unwrap();
        let mask = ContactSurface::from_fn("bars", |a1, _| a1 % 3 != 0);
        let codes = shape_code_field(&mask);
        let nu = ShoeScores::sample(&mut rng, theta.q, &cm);
        let mu1 = mu_weights(&theta, &nu, &codes, &cm).unwrap();
        for p in theta.phi.iter_mut() {
            *p *= 0.5;
        }
        let mu2 = mu_weights(&theta, &nu, &codes, &cm).unwrap();
        for (a, b) in mu1.iter().zip(&mu2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_weights_error() {
        let cm = tiny_map(1, 1, 4);
        let mut theta = flat_theta(&cm);
        theta.phi = [0.0; 32];
        let mask = ContactSurface::from_fn("z", |_, _| false);
        let codes = shape_code_field(&mask);
        let err = mu_weights(&theta, &ShoeScores::ones(&cm), &codes, &cm).unwrap_err();
        assert!(matches!(err, Error::DegenerateModel));
    }

    #[test]
    fn single_atom_convolution_matches_kernel_center() {
        let cm = tiny_map(1, 1, 1);
        assert_eq!(cm.active_count(), 1);
        let cell = cm.active_cells()[0] as usize;
        let mut mu = vec![0.0; CELL_COUNT];
        mu[cell] = 1.0;
        let kernel = Kernel::from_params(&KernelParams::zeros());
        let field = lambda_field(&mu, &kernel);
        assert!((field.lambda[cell] - 0.175601).abs() < 1e-6);
        assert!((field.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_kernel_is_identity_convolution() {
        let cm = tiny_map(2, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = sample_prior(&mut rng, &PriorConfig::default(), &cm).unwrap();
        let mask = ContactSurface::from_fn("m", |a1, a2| (a1 + a2) % 2 == 0);
        let codes = shape_code_field(&mask);
        let nu = ShoeScores::sample(&mut rng, theta.q, &cm);
        let mu = mu_weights(&theta, &nu, &codes, &cm).unwrap();
        let field = lambda_field(&mu, &Kernel::identity());
        for (a, b) in mu.iter().zip(&field.lambda) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mass_is_conserved_for_random_parameters() {
        let cm = tiny_map(3, 2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let theta = sample_prior(&mut rng, &PriorConfig::default(), &cm).unwrap();
            let mask = ContactSurface::from_fn("m", |a1, a2| (a1 * 3 + a2) % 4 != 0);
            let codes = shape_code_field(&mask);
            let nu = ShoeScores::sample(&mut rng, theta.q, &cm);
            let mu = mu_weights(&theta, &nu, &codes, &cm).unwrap();
            let field = lambda_field(&mu, &Kernel::from_params(&theta.kparams));
            assert!((field.total() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sampling_respects_point_mass_and_frequencies() {
        let mut lambda = vec![0.0; CELL_COUNT];
        let a = GridIndex { a1: 50, a2: 100 };
        let b = GridIndex { a1: 51, a2: 100 };
        lambda[a.flat()] = 0.3;
        lambda[b.flat()] = 0.7;
        let field = IntensityField { lambda };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 1_000_000;
        let pts = sample_accidentals(&field, n, &mut rng);
        let mut count_a = 0usize;
        for (x1, x2) in &pts {
            let cell = GridIndex::cell_of(*x1, *x2).unwrap();
            assert!(cell == a || cell == b);
            if cell == a {
                count_a += 1;
            }
            assert!(*x2 > 99.0 && *x2 <= 100.0);
        }
        let freq = count_a as f64 / n as f64;
        let se = (0.3 * 0.7 / n as f64).sqrt();
        assert!((freq - 0.3).abs() < 3.0 * se, "freq {freq}");
        assert!(sample_accidentals(&field, 0, &mut rng).is_empty());
    }

    #[test]
    fn score_variability_shrinks_with_q() {
        // Coefficient of variation of mu at a fixed cell across shoes decays
        // roughly like 1/sqrt(q).
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("flat", |_, _| true);
        let codes = shape_code_field(&mask);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probe = cm.active_cells()[7] as usize;
        let mut cvs = Vec::new();
        for q in [0.5, 2.0, 8.0] {
            let theta = GlobalParams {
                q,
                ..flat_theta(&cm)
            };
            let mut vals = Vec::new();
            for _ in 0..10_000 {
                let nu = ShoeScores::sample(&mut rng, q, &cm);
                let mu = mu_weights(&theta, &nu, &codes, &cm).unwrap();
                vals.push(mu[probe]);
            }
            let m = crate::util::mean(&vals);
            cvs.push(crate::util::variance(&vals).sqrt() / m);
        }
        assert!(cvs[0] > cvs[1] && cvs[1] > cvs[2], "cvs {cvs:?}");
        // ratio between successive q's (factor 4) should be near 2
        assert!((cvs[0] / cvs[1] - 2.0).abs() < 0.5);
        assert!((cvs[1] / cvs[2] - 2.0).abs() < 0.5);
    }
}
