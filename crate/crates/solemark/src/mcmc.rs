//! Posterior sampling for the augmented model.
//!
//! One full sweep updates, in order: every per-shoe auxiliary scalar by
//! slice sampling, the coarse log-weights jointly by elliptical slice
//! sampling, each shape effect by bounded slice sampling, the score shape
//! `q`, each kernel tier parameter, and finally every cell assignment by an
//! exact Gibbs draw. Ablation variants skip the updates of their disabled
//! blocks and hold the corresponding parameters fixed.
//!
//! Expensive sums are grouped by `(region, shape-code)` cells once per shoe
//! (see [`crate::likelihood`]); the scan over occupied cells stays exact.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::coarse::CoarseMap;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{GridIndex, SHAPE_CODES};
use crate::kernel::{Kernel, KernelParams, KERNEL_REACH, TIERS};
use crate::likelihood::{
    apply_variant, window_cells, AuxiliaryState, ModelVariant, ShoeAux, Workspace,
};
use crate::params::{sample_prior_with, CoarsePrior, GlobalParams, PriorConfig};
use crate::records::{DrawRecord, PosteriorDraws};
use crate::slice::{elliptical_slice, slice_sample_1d};
use crate::util::ln_gamma;

/// Slice-sampler step widths. The per-shoe auxiliary width is
/// `u_width_scale * sqrt(N_s) / (|A| q)`, recomputed at every update.
#[derive(Debug, Clone, Copy)]
pub struct SliceConfig {
    pub q_width: f64,
    pub phi_width: f64,
    pub p_width: f64,
    pub u_width_scale: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            q_width: 0.2,
            phi_width: 0.01,
            p_width: 1.0,
            u_width_scale: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// Total sweeps, including warm-up.
    pub iters: usize,
    /// Leading sweeps discarded from the record.
    pub warmup: usize,
    /// Record every `thin`-th retained sweep.
    pub thin: usize,
    pub variant: ModelVariant,
    pub slice: SliceConfig,
    pub prior: PriorConfig,
    /// Iteration offset, for resumed chains.
    pub start_iter: i64,
    /// Starting parameters; drawn from the prior when absent.
    pub init: Option<GlobalParams>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iters: 30_000,
            warmup: 10_000,
            thin: 1,
            variant: ModelVariant::full(),
            slice: SliceConfig::default(),
            prior: PriorConfig::default(),
            start_iter: 0,
            init: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.iters {
            return Err(Error::Config(format!(
                "warmup {} must be smaller than iters {}",
                self.warmup, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deliberate defects used by the sampler-validation harness. `None` is the
/// production path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Wrong prior rate in the `q` conditional.
    QPriorRate,
    /// Drop the count-coupling factor from the assignment Gibbs weights.
    ZDropCount,
}

/// The chain state plus everything needed to advance it.
pub struct Sampler<'a> {
    cm: &'a CoarseMap,
    pub ws: Workspace,
    variant: ModelVariant,
    slice: SliceConfig,
    prior_cfg: PriorConfig,
    prior: CoarsePrior,
    theta: GlobalParams,
    log_w: Vec<f64>,
    aux: Vec<ShoeAux>,
    pub mutation: Mutation,
}

impl<'a> Sampler<'a> {
    pub fn new<R: Rng + ?Sized>(
        cm: &'a CoarseMap,
        ws: Workspace,
        variant: ModelVariant,
        slice: SliceConfig,
        prior_cfg: PriorConfig,
        init: Option<GlobalParams>,
        rng: &mut R,
    ) -> Result<Self> {
        let prior = CoarsePrior::new(&prior_cfg, cm)?;
        let mut theta = match init {
            Some(t) => {
                t.validate(cm.n_regions())?;
                t
            }
            None => sample_prior_with(rng, &prior_cfg, &prior),
        };
        theta = apply_variant(&theta, variant);
        if !variant.scores_on {
            theta.q = 1.0;
        }
        if !variant.kernel_on {
            theta.kparams = KernelParams::zeros();
        }
        let log_w = theta.w_e.iter().map(|w| w.ln()).collect();
        let mut sampler = Sampler {
            cm,
            ws,
            variant,
            slice,
            prior_cfg,
            prior,
            theta,
            log_w,
            aux: Vec::new(),
            mutation: Mutation::None,
        };
        sampler.init_aux()?;
        Ok(sampler)
    }

    pub fn theta(&self) -> &GlobalParams {
        &self.theta
    }

    pub fn aux(&self) -> AuxiliaryState {
        AuxiliaryState {
            shoes: self.aux.clone(),
        }
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn kernel(&self) -> Kernel {
        self.variant.kernel(&self.theta)
    }

    fn init_aux(&mut self) -> Result<()> {
        let kernel = self.kernel();
        let mut aux = Vec::with_capacity(self.ws.shoes.len());
        for cells in &self.ws.shoes {
            let n = cells.n_accidentals();
            if n == 0 {
                aux.push(ShoeAux::from_assignments(Vec::new(), 1.0));
                continue;
            }
            let mut z = Vec::with_capacity(n);
            for (idx, &x) in cells.acc_cells.iter().enumerate() {
                let xa = GridIndex::from_flat(x as usize);
                let admissible = |cell: u32| -> f64 {
                    let wphi = cells.wphi_at(cell, &self.theta, self.cm);
                    if wphi <= 0.0 {
                        return 0.0;
                    }
                    let za = GridIndex::from_flat(cell as usize);
                    wphi * kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2)
                };
                let start = if self.variant.kernel_on {
                    if admissible(x) > 0.0 {
                        x
                    } else {
                        // feasible fallback: the best-weighted window cell
                        let best = window_cells(xa)
                            .map(|c| (c, admissible(c)))
                            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                        match best {
                            Some((cell, wt)) if wt > 0.0 => cell,
                            _ => {
                                return Err(Error::ImpossibleAssignment {
                                    shoe: cells.shoe_id.clone(),
                                    accidental: idx,
                                })
                            }
                        }
                    }
                } else {
                    if admissible(x) <= 0.0 {
                        return Err(Error::ImpossibleAssignment {
                            shoe: cells.shoe_id.clone(),
                            accidental: idx,
                        });
                    }
                    x
                };
                z.push(start);
            }
            let u = if self.variant.scores_on {
                let total = cells.sum_wphi(&self.theta);
                if total <= 0.0 {
                    return Err(Error::DegenerateModel);
                }
                n as f64 / (self.theta.q * total)
            } else {
                1.0
            };
            aux.push(ShoeAux::from_assignments(z, u));
        }
        self.aux = aux;
        Ok(())
    }

    /// `(w * phi, cell count)` per group of one shoe.
    fn group_wphi(&self, s: usize) -> Vec<(f64, f64)> {
        self.ws.shoes[s]
            .groups
            .iter()
            .map(|g| {
                (
                    self.theta.w_e[g.region as usize - 1] * self.theta.phi[g.code as usize - 1],
                    g.count as f64,
                )
            })
            .collect()
    }

    /// `(w * phi, assignment count)` per occupied cell of one shoe.
    fn counted_wphi(&self, s: usize) -> Vec<(f64, f64)> {
        let cells = &self.ws.shoes[s];
        self.aux[s]
            .counts
            .iter()
            .map(|(&cell, &c)| (cells.wphi_at(cell, &self.theta, self.cm), c as f64))
            .collect()
    }

    pub fn update_u<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Result<()> {
        debug_assert!(self.variant.scores_on);
        let n = self.ws.shoes[s].n_accidentals();
        if n == 0 {
            return Ok(());
        }
        let groups = self.group_wphi(s);
        let counted = self.counted_wphi(s);
        let q = self.theta.q;
        let nf = n as f64;
        let logd = |u: f64| {
            if u <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let grid: f64 = groups.iter().map(|&(wp, c)| c * (u * wp).ln_1p()).sum();
            let occ: f64 = counted.iter().map(|&(wp, c)| c * (u * wp).ln_1p()).sum();
            (nf - 1.0) * u.ln() - q * grid - occ
        };
        let width =
            self.slice.u_width_scale * nf.sqrt() / (self.cm.active_count() as f64 * q);
        let u = slice_sample_1d(logd, self.aux[s].u, width, (0.0, f64::INFINITY), rng)?;
        self.aux[s].u = u;
        Ok(())
    }

    fn w_loglik(&self, log_w: &[f64]) -> f64 {
        let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
        let q = self.theta.q;
        let mut total = 0.0;
        for (s, cells) in self.ws.shoes.iter().enumerate() {
            let n = cells.n_accidentals();
            if n == 0 {
                continue;
            }
            let u = self.aux[s].u;
            let mut counted_term = 0.0;
            for (&cell, &c) in &self.aux[s].counts {
                let r = self.cm.region_at_flat(cell as usize) as usize;
                let wphi = w[r - 1] * self.theta.phi[cells.code_at(cell) as usize - 1];
                let c = c as f64;
                if self.variant.scores_on {
                    counted_term += c * (w[r - 1].ln() - (u * wphi).ln_1p());
                } else {
                    counted_term += c * w[r - 1].ln();
                }
            }
            if self.variant.scores_on {
                let grid: f64 = cells
                    .groups
                    .iter()
                    .map(|g| {
                        let wphi = w[g.region as usize - 1] * self.theta.phi[g.code as usize - 1];
                        g.count as f64 * (u * wphi).ln_1p()
                    })
                    .sum();
                total += counted_term - q * grid;
            } else {
                let sum: f64 = cells
                    .groups
                    .iter()
                    .map(|g| {
                        g.count as f64
                            * w[g.region as usize - 1]
                            * self.theta.phi[g.code as usize - 1]
                    })
                    .sum();
                total += counted_term - n as f64 * sum.ln();
            }
        }
        total
    }

    pub fn update_w<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        debug_assert!(self.variant.w_on);
        let nu = self.prior.sample_log_w(rng);
        let (new_log_w, _) = elliptical_slice(&self.log_w, &nu, |lw| self.w_loglik(lw), rng);
        self.theta.w_e = new_log_w.iter().map(|l| l.exp()).collect();
        self.log_w = new_log_w;
        Ok(())
    }

    pub fn update_phi<R: Rng + ?Sized>(&mut self, code: u8, rng: &mut R) -> Result<()> {
        debug_assert!(self.variant.phi_on);
        debug_assert!((1..=SHAPE_CODES as u8).contains(&code));
        let q = self.theta.q;

        // flatten code-i terms across shoes; `uw` folds u and w so the
        // conditional is a function of phi alone
        let mut grid_terms: Vec<(f64, f64)> = Vec::new(); // (u*w, q*count)
        let mut occ_terms: Vec<(f64, f64)> = Vec::new(); // (u*w, count)
        let mut no_scores: Vec<(f64, f64, f64)> = Vec::new(); // (N, base, coef)
        let mut t_total = 0.0;
        for (s, cells) in self.ws.shoes.iter().enumerate() {
            if cells.n_accidentals() == 0 {
                continue;
            }
            let u = self.aux[s].u;
            for (&cell, &c) in &self.aux[s].counts {
                if cells.code_at(cell) == code {
                    t_total += c as f64;
                    if self.variant.scores_on {
                        let r = self.cm.region_at_flat(cell as usize) as usize;
                        occ_terms.push((u * self.theta.w_e[r - 1], c as f64));
                    }
                }
            }
            if self.variant.scores_on {
                for g in cells.groups_with_code(code) {
                    grid_terms.push((
                        u * self.theta.w_e[g.region as usize - 1],
                        q * g.count as f64,
                    ));
                }
            } else {
                let mut base = 0.0;
                let mut coef = 0.0;
                for g in &cells.groups {
                    let v = g.count as f64 * self.theta.w_e[g.region as usize - 1];
                    if g.code == code {
                        coef += v;
                    } else {
                        base += v * self.theta.phi[g.code as usize - 1];
                    }
                }
                no_scores.push((cells.n_accidentals() as f64, base, coef));
            }
        }

        let upper = self.prior_cfg.phi_upper;
        let scores_on = self.variant.scores_on;
        let logd = |phi: f64| {
            if !(0.0..=upper).contains(&phi) {
                return f64::NEG_INFINITY;
            }
            let mut ll = if t_total > 0.0 {
                t_total * phi.ln()
            } else {
                0.0
            };
            if scores_on {
                for &(uw, qc) in &grid_terms {
                    ll -= qc * (uw * phi).ln_1p();
                }
                for &(uw, c) in &occ_terms {
                    ll -= c * (uw * phi).ln_1p();
                }
            } else {
                for &(n, base, coef) in &no_scores {
                    ll -= n * (base + coef * phi).ln();
                }
            }
            ll
        };
        let current = self.theta.phi[code as usize - 1];
        let new = slice_sample_1d(logd, current, self.slice.phi_width, (0.0, upper), rng)?;
        self.theta.phi[code as usize - 1] = new;
        Ok(())
    }

    pub fn update_q<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        debug_assert!(self.variant.scores_on);
        // the log-product over every (shoe, cell) pair is q-independent, so
        // it is computed once and recycled across the slice evaluations
        let mut log_prod = 0.0;
        let mut hist: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
        for (s, cells) in self.ws.shoes.iter().enumerate() {
            if cells.n_accidentals() == 0 {
                continue;
            }
            log_prod += cells.log1p_sum(&self.theta, self.aux[s].u);
            for &c in self.aux[s].counts.values() {
                *hist.entry(c).or_insert(0.0) += 1.0;
            }
        }
        let counts: Vec<(f64, f64)> = hist.into_iter().map(|(i, n)| (i as f64, n)).collect();
        let prior_rate = match self.mutation {
            Mutation::QPriorRate => 1.0,
            _ => self.prior_cfg.q_rate,
        };
        let prior_shape = self.prior_cfg.q_shape;
        let logd = |q: f64| {
            if q <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut ll = (prior_shape - 1.0) * q.ln() - prior_rate * q - q * log_prod;
            for &(i, n) in &counts {
                ll += n * (ln_gamma(q + i) - ln_gamma(q));
            }
            ll
        };
        let q = slice_sample_1d(logd, self.theta.q, self.slice.q_width, (0.0, f64::INFINITY), rng)?;
        self.theta.q = q;
        Ok(())
    }

    /// Per-axis histogram of absolute assignment displacements (0..=3).
    fn offset_hist(&self, horizontal: bool) -> [f64; TIERS] {
        let mut hist = [0.0; TIERS];
        for (s, cells) in self.ws.shoes.iter().enumerate() {
            for (&z, &x) in self.aux[s].z.iter().zip(&cells.acc_cells) {
                let za = GridIndex::from_flat(z as usize);
                let xa = GridIndex::from_flat(x as usize);
                let d = if horizontal {
                    (za.a1 - xa.a1).unsigned_abs()
                } else {
                    (za.a2 - xa.a2).unsigned_abs()
                };
                hist[d as usize] += 1.0;
            }
        }
        hist
    }

    pub fn update_p<R: Rng + ?Sized>(
        &mut self,
        horizontal: bool,
        tier: usize,
        hist: &[f64; TIERS],
        rng: &mut R,
    ) -> Result<()> {
        debug_assert!(self.variant.kernel_on);
        let mut p = if horizontal {
            self.theta.kparams.p_h
        } else {
            self.theta.kparams.p_v
        };
        let two_var = 2.0 * self.prior_cfg.p_variance;
        let logd = |v: f64| {
            let mut trial = p;
            trial[tier] = v;
            let kp = if horizontal {
                KernelParams::new(trial, [0.0; TIERS])
            } else {
                KernelParams::new([0.0; TIERS], trial)
            };
            let k = Kernel::from_params(&kp);
            let kappa = if horizontal { k.kappa_h } else { k.kappa_v };
            let mut ll = -v * v / two_var;
            for (d, &n) in hist.iter().enumerate() {
                if n > 0.0 {
                    ll += n * kappa[d].ln();
                }
            }
            ll
        };
        let new = slice_sample_1d(
            logd,
            p[tier],
            self.slice.p_width,
            (f64::NEG_INFINITY, f64::INFINITY),
            rng,
        )?;
        p[tier] = new;
        if horizontal {
            self.theta.kparams.p_h = p;
        } else {
            self.theta.kparams.p_v = p;
        }
        Ok(())
    }

    pub fn update_z<R: Rng + ?Sized>(&mut self, s: usize, n: usize, rng: &mut R) -> Result<()> {
        debug_assert!(self.variant.kernel_on);
        let kernel = self.kernel();
        let x = self.ws.shoes[s].acc_cells[n];
        let xa = GridIndex::from_flat(x as usize);
        let current = self.aux[s].z[n];
        let q = self.theta.q;
        let u = self.aux[s].u;

        let mut cand: Vec<(u32, f64)> = Vec::with_capacity(49);
        let mut total = 0.0;
        {
            let cells = &self.ws.shoes[s];
            let aux = &self.aux[s];
            for z in window_cells(xa) {
                let wphi = cells.wphi_at(z, &self.theta, self.cm);
                if wphi <= 0.0 {
                    continue;
                }
                let za = GridIndex::from_flat(z as usize);
                let k = kernel.weight_at(za.a1 - xa.a1, za.a2 - xa.a2);
                if k <= 0.0 {
                    continue;
                }
                let weight = if self.variant.scores_on {
                    let c_minus = aux.count_at(z) - u32::from(z == current);
                    let coupling = match self.mutation {
                        Mutation::ZDropCount => 1.0,
                        _ => q + c_minus as f64,
                    };
                    coupling * wphi / (u * wphi + 1.0) * k
                } else {
                    wphi * k
                };
                cand.push((z, weight));
                total += weight;
            }
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::ImpossibleAssignment {
                shoe: self.ws.shoes[s].shoe_id.clone(),
                accidental: n,
            });
        }
        let draw = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = cand[cand.len() - 1].0;
        for &(z, wt) in &cand {
            acc += wt;
            if draw < acc {
                chosen = z;
                break;
            }
        }
        self.aux[s].move_assignment(n, chosen);
        Ok(())
    }

    /// One full sweep in the fixed update order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.variant.scores_on {
            for s in 0..self.ws.shoes.len() {
                self.update_u(s, rng)?;
            }
        }
        if self.variant.w_on {
            self.update_w(rng)?;
        }
        if self.variant.phi_on {
            for code in 1..=SHAPE_CODES as u8 {
                self.update_phi(code, rng)?;
            }
        }
        if self.variant.scores_on {
            self.update_q(rng)?;
        }
        if self.variant.kernel_on {
            let hist_h = self.offset_hist(true);
            for tier in 0..TIERS {
                self.update_p(true, tier, &hist_h, rng)?;
            }
            let hist_v = self.offset_hist(false);
            for tier in 0..TIERS {
                self.update_p(false, tier, &hist_v, rng)?;
            }
            for s in 0..self.ws.shoes.len() {
                for n in 0..self.ws.shoes[s].n_accidentals() {
                    self.update_z(s, n, rng)?;
                }
            }
        }
        Ok(())
    }

    pub fn record(&self, iter: i64) -> DrawRecord {
        DrawRecord::from_params(iter, &self.theta)
    }

    /// Replace the observed data with a fresh forward draw given the current
    /// parameters, refreshing the auxiliary state to match. This is the
    /// data-refresh step of the joint-distribution validation harness.
    pub fn resample_data_forward<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let kernel = self.kernel();
        let gamma = if self.variant.scores_on {
            Some(Gamma::new(self.theta.q, 1.0).expect("q > 0"))
        } else {
            None
        };
        for s in 0..self.ws.shoes.len() {
            let n = self.ws.shoes[s].n_accidentals();
            if n == 0 {
                continue;
            }
            let cells = &self.ws.shoes[s];
            // shoe-level atom weights, with fresh scores when enabled
            let mut weights = Vec::with_capacity(self.cm.active_count());
            let mut total = 0.0;
            for &cell in self.cm.active_cells() {
                let mut v = cells.wphi_at(cell, &self.theta, self.cm);
                if let Some(g) = &gamma {
                    v *= g.sample(rng);
                }
                total += v;
                weights.push((cell, v));
            }
            if total <= 0.0 {
                return Err(Error::DegenerateModel);
            }
            let mut z = Vec::with_capacity(n);
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                let draw = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut cell = weights[weights.len() - 1].0;
                for &(c, v) in &weights {
                    acc += v;
                    if draw < acc {
                        cell = c;
                        break;
                    }
                }
                z.push(cell);
                let za = GridIndex::from_flat(cell as usize);
                let (di, dj) = if self.variant.kernel_on {
                    (
                        sample_axis_offset(&kernel.kappa_h, rng),
                        sample_axis_offset(&kernel.kappa_v, rng),
                    )
                } else {
                    (0, 0)
                };
                let x = GridIndex::new(za.a1 + di, za.a2 + dj).expect("margin keeps x in-grid");
                xs.push(x.flat() as u32);
            }
            let u = if self.variant.scores_on {
                Gamma::new(n as f64, 1.0 / total)
                    .expect("positive rate")
                    .sample(rng)
            } else {
                1.0
            };
            self.ws.shoes[s].acc_cells = xs;
            self.aux[s] = ShoeAux::from_assignments(z, u);
        }
        Ok(())
    }

    /// Exact recount of all assignment histograms.
    pub fn counts_consistent(&self) -> bool {
        self.aux.iter().all(|a| a.consistent())
    }
}

/// Draw a 1-D kernel offset in -3..=3; `kappa[t]` is the probability of each
/// single offset at distance `t`.
fn sample_axis_offset<R: Rng + ?Sized>(kappa: &[f64; TIERS], rng: &mut R) -> i32 {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for d in -KERNEL_REACH..=KERNEL_REACH {
        acc += kappa[d.unsigned_abs() as usize];
        if u < acc {
            return d;
        }
    }
    KERNEL_REACH
}

/// Run the full sampler on a dataset and collect retained draws.
pub fn run_chain<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let ws = Workspace::build(data)?;
    let mut sampler = Sampler::new(
        &data.coarse,
        ws,
        cfg.variant,
        cfg.slice,
        cfg.prior,
        cfg.init.clone(),
        rng,
    )?;
    let mut records = Vec::new();
    for sweep in 0..cfg.iters {
        sampler.sweep(rng)?;
        if sweep % 1000 == 999 {
            debug_assert!(sampler.counts_consistent());
        }
        if sweep >= cfg.warmup && (sweep - cfg.warmup) % cfg.thin == 0 {
            records.push(sampler.record(cfg.start_iter + sweep as i64));
        }
    }
    Ok(PosteriorDraws {
        records,
        variant: cfg.variant,
    })
}
