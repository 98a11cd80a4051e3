//! Joint-distribution sampler validation.
//!
//! Two ways to sample the statistics of the joint model must agree when the
//! sampler is correct: direct prior draws of the global parameters, and a
//! successive-conditional chain that alternates one posterior sweep with a
//! fresh forward draw of the data given the current parameters. Marginal
//! statistics from the two streams are compared with two-sample
//! Kolmogorov-Smirnov tests; deliberately broken updates (see
//! [`Mutation`]) must fail them.

use rand::Rng;

use crate::coarse::{tiny_map, CoarseMap};
use crate::dataset::{Dataset, ShoeRecord};
use crate::error::Result;
use crate::grid::{ContactSurface, GridIndex};
use crate::kernel::Kernel;
use crate::likelihood::{ModelVariant, Workspace};
use crate::mcmc::{Mutation, Sampler, SliceConfig};
use crate::params::{sample_prior_with, CoarsePrior, GlobalParams, PriorConfig};

#[derive(Debug, Clone)]
pub struct GewekeConfig {
    /// Samples collected on each side.
    pub n_samples: usize,
    /// Sweeps between successive-conditional records, to tame
    /// autocorrelation in the KS comparison.
    pub thin: usize,
    /// Accidentals per shoe (fixed; counts are exogenous).
    pub n_accidentals: usize,
    pub variant: ModelVariant,
    pub prior: PriorConfig,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            n_samples: 10_000,
            thin: 10,
            n_accidentals: 5,
            variant: ModelVariant::full(),
            prior: PriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GewekeStat {
    pub name: &'static str,
    pub ks: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn min_p(&self) -> f64 {
        self.stats.iter().map(|s| s.p_value).fold(f64::INFINITY, f64::min)
    }

    pub fn stat(&self, name: &str) -> Option<&GewekeStat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

const STAT_NAMES: [&str; 4] = ["q", "w_E[1]", "phi[32]", "kappa_h[1]"];

fn stat_vector(theta: &GlobalParams) -> [f64; 4] {
    let kernel = Kernel::from_params(&theta.kparams);
    [theta.q, theta.w_e[0], theta.phi[31], kernel.kappa_h[0]]
}

/// The small test model: four coarse regions, two shoes with contrasting
/// tread masks, and a fixed number of accidentals per shoe.
pub fn tiny_model(n_accidentals: usize) -> Dataset {
    let cm = tiny_map(2, 2, 5);
    let full = ContactSurface::from_fn("shoe_full", |a1, a2| {
        cm_region_positive(&cm, a1, a2)
    });
    let bars = ContactSurface::from_fn("shoe_bars", |a1, a2| {
        cm_region_positive(&cm, a1, a2) && a2 % 4 < 2
    });
    // placeholder accidentals on active cells; harness runs overwrite them
    let spot = |k: usize| {
        let cell = cm.active_cells()[k] as usize;
        let a = GridIndex::from_flat(cell);
        ((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)
    };
    let shoes = vec![
        ShoeRecord {
            id: "shoe_full".into(),
            mask: full,
            accidentals: (0..n_accidentals).map(|k| spot(k * 3)).collect(),
        },
        ShoeRecord {
            id: "shoe_bars".into(),
            mask: bars,
            accidentals: (0..n_accidentals).map(|k| spot(k * 5 + 1)).collect(),
        },
    ];
    Dataset { coarse: cm, shoes }
}

fn cm_region_positive(cm: &CoarseMap, a1: i32, a2: i32) -> bool {
    cm.region(a1, a2) > 0
}

/// Run the check and report per-statistic KS results.
pub fn joint_distribution_check<R: Rng + ?Sized>(
    cfg: &GewekeConfig,
    mutation: Mutation,
    rng: &mut R,
) -> Result<GewekeReport> {
    let data = tiny_model(cfg.n_accidentals);
    let prior = CoarsePrior::new(&cfg.prior, &data.coarse)?;

    // forward stream: the statistics depend on the parameters alone, so
    // forward draws are direct prior draws
    let mut forward = vec![Vec::with_capacity(cfg.n_samples); STAT_NAMES.len()];
    for _ in 0..cfg.n_samples {
        let theta = sample_prior_with(rng, &cfg.prior, &prior);
        for (dst, v) in forward.iter_mut().zip(stat_vector(&theta)) {
            dst.push(v);
        }
    }

    // successive-conditional stream
    let ws = Workspace::build(&data)?;
    let mut sampler = Sampler::new(
        &data.coarse,
        ws,
        cfg.variant,
        SliceConfig::default(),
        cfg.prior,
        None,
        rng,
    )?;
    sampler.mutation = mutation;
    sampler.resample_data_forward(rng)?;
    let mut successive = vec![Vec::with_capacity(cfg.n_samples); STAT_NAMES.len()];
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thin {
            sampler.sweep(rng)?;
            sampler.resample_data_forward(rng)?;
        }
        for (dst, v) in successive.iter_mut().zip(stat_vector(sampler.theta())) {
            dst.push(v);
        }
    }

    let stats = STAT_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (ks, p_value) = ks_two_sample(&forward[i], &successive[i]);
            GewekeStat { name, ks, p_value }
        })
        .collect();
    Ok(GewekeReport { stats })
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    (d, ks_q(lambda))
}

fn ks_q(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
