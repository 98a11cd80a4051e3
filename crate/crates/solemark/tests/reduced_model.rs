//! Cross-check of the score-free, kernel-free chain against an
//! independently coded sampler for the same reduced model.
//!
//! With scores and kernel disabled, the model collapses to a multinomial
//! over active cells with probabilities proportional to `w * phi`. Posterior
//! predictive cell probabilities from the production sweep must match a
//! plain random-walk Metropolis sampler written directly against that
//! density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use solemark::coarse::{tiny_map, CoarseMap};
use solemark::dataset::{simulate_dataset, CountModel, MaskSource, SimulateConfig};
use solemark::grid::{shape_code_field, ContactSurface, GridIndex, SHAPE_CODES};
use solemark::likelihood::ModelVariant;
use solemark::mcmc::{run_chain, ChainConfig};
use solemark::params::{GlobalParams, PriorConfig};

/// Everything the reduced posterior needs, computed from raw grid
/// primitives (independent of the production likelihood code).
struct ReducedModel {
    /// per shoe: (region-1, code-1) for each active cell
    cells: Vec<Vec<(usize, usize)>>,
    /// per shoe: index into `cells` of each accidental's cell
    data: Vec<Vec<usize>>,
    adjacency: Vec<(usize, usize)>,
    n_regions: usize,
}

impl ReducedModel {
    fn build(cm: &CoarseMap, shoes: &[(&ContactSurface, &[(f64, f64)])]) -> ReducedModel {
        let mut cells = Vec::new();
        let mut data = Vec::new();
        for (mask, accidentals) in shoes {
            let codes = shape_code_field(mask);
            let mut per_cell = Vec::new();
            let mut index_of = std::collections::HashMap::new();
            for &cell in cm.active_cells() {
                let idx = cell as usize;
                index_of.insert(cell, per_cell.len());
                per_cell.push((
                    cm.region_at_flat(idx) as usize - 1,
                    codes.at_flat(idx) as usize - 1,
                ));
            }
            let mut obs = Vec::new();
            for &(x1, x2) in accidentals.iter() {
                let cell = GridIndex::cell_of(x1, x2).unwrap().flat() as u32;
                obs.push(*index_of.get(&cell).expect("kernel-free data on active set"));
            }
            cells.push(per_cell);
            data.push(obs);
        }
        ReducedModel {
            cells,
            data,
            adjacency: cm
                .adjacency()
                .iter()
                .map(|&(a, b)| (a as usize - 1, b as usize - 1))
                .collect(),
            n_regions: cm.n_regions(),
        }
    }

    fn log_posterior(&self, log_w: &[f64], phi: &[f64; SHAPE_CODES]) -> f64 {
        if phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return f64::NEG_INFINITY;
        }
        // prior: phi uniform; log w Gaussian with precision I + 0.2 Adj
        let mut lp = -0.5 * log_w.iter().map(|l| l * l).sum::<f64>();
        for &(i, j) in &self.adjacency {
            lp -= 0.2 * log_w[i] * log_w[j];
        }
        let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
        for (per_cell, obs) in self.cells.iter().zip(&self.data) {
            let total: f64 = per_cell.iter().map(|&(r, c)| w[r] * phi[c]).sum();
            if total <= 0.0 {
                return f64::NEG_INFINITY;
            }
            for &k in obs {
                let (r, c) = per_cell[k];
                let v = w[r] * phi[c];
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                lp += v.ln() - total.ln();
            }
        }
        lp
    }

    /// mu over the first shoe's active cells for given parameters
    fn mu_first_shoe(&self, w_e: &[f64], phi: &[f64; SHAPE_CODES]) -> Vec<f64> {
        let per_cell = &self.cells[0];
        let mut mu: Vec<f64> = per_cell.iter().map(|&(r, c)| w_e[r] * phi[c]).collect();
        let total: f64 = mu.iter().sum();
        for v in mu.iter_mut() {
            *v /= total;
        }
        mu
    }
}

#[test]
fn reduced_chain_matches_direct_metropolis_sampler() {
    let cm = tiny_map(2, 2, 5);
    let truth = GlobalParams {
        q: 1.0,
        w_e: vec![0.6, 1.8, 1.0, 1.4],
        phi: {
            let mut phi = [0.5; SHAPE_CODES];
            phi[31] = 0.95;
            phi[0] = 0.05;
            phi
        },
        kparams: solemark::kernel::KernelParams::zeros(),
    };
    let sim = simulate_dataset(
        &SimulateConfig {
            n_shoes: 2,
            counts: CountModel::Fixed(15),
            masks: MaskSource::Synthetic { coverage: 0.6 },
            truth: Some(truth),
            variant: ModelVariant::no_scores_kernel(),
            ..Default::default()
        },
        &cm,
        &mut ChaCha8Rng::seed_from_u64(11),
    )
    .unwrap();

    // production chain
    let cfg = ChainConfig {
        iters: 6_000,
        warmup: 1_000,
        variant: ModelVariant::no_scores_kernel(),
        ..Default::default()
    };
    let draws = run_chain(&sim.dataset, &cfg, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();

    let shoes: Vec<(&ContactSurface, &[(f64, f64)])> = sim
        .dataset
        .shoes
        .iter()
        .map(|s| (&s.mask, s.accidentals.as_slice()))
        .collect();
    let reduced = ReducedModel::build(&cm, &shoes);

    let mut mu_chain = vec![0.0; cm.active_count()];
    for rec in &draws.records {
        let theta = rec.to_params().unwrap();
        let mu = reduced.mu_first_shoe(&theta.w_e, &theta.phi);
        for (acc, v) in mu_chain.iter_mut().zip(&mu) {
            *acc += v;
        }
    }
    for v in mu_chain.iter_mut() {
        *v /= draws.records.len() as f64;
    }

    // independent random-walk Metropolis on (log w, phi)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut log_w = vec![0.0; reduced.n_regions];
    let mut phi = [0.5; SHAPE_CODES];
    let mut lp = reduced.log_posterior(&log_w, &phi);
    let total_steps = 400_000;
    let burn = 50_000;
    let mut mu_mh = vec![0.0; cm.active_count()];
    let mut kept = 0usize;
    for step in 0..total_steps {
        let mut prop_w = log_w.clone();
        let mut prop_phi = phi;
        for v in prop_w.iter_mut() {
            *v += 0.12 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in prop_phi.iter_mut() {
            let mut p = *v + 0.12 * rng.sample::<f64, _>(StandardNormal);
            // reflect into [0,1]; keeps the proposal symmetric
            while !(0.0..=1.0).contains(&p) {
                if p < 0.0 {
                    p = -p;
                } else {
                    p = 2.0 - p;
                }
            }
            *v = p;
        }
        let prop_lp = reduced.log_posterior(&prop_w, &prop_phi);
        if prop_lp - lp > rng.random::<f64>().ln() {
            log_w = prop_w;
            phi = prop_phi;
            lp = prop_lp;
        }
        if step >= burn && step % 20 == 0 {
            let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
            let mu = reduced.mu_first_shoe(&w, &phi);
            for (acc, v) in mu_mh.iter_mut().zip(&mu) {
                *acc += v;
            }
            kept += 1;
        }
    }
    for v in mu_mh.iter_mut() {
        *v /= kept as f64;
    }

    // posterior predictive cell probabilities must agree; both chains are
    // long relative to this 100-cell problem
    let mut max_diff = 0.0f64;
    for (a, b) in mu_chain.iter().zip(&mu_mh) {
        max_diff = max_diff.max((a - b).abs());
    }
    let mean_p = 1.0 / cm.active_count() as f64;
    assert!(
        max_diff < 0.35 * mean_p,
        "posterior predictive gap {max_diff} vs mean cell mass {mean_p}"
    );
}
