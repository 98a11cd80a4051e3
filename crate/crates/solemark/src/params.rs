//! Global model parameters and their priors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::SHAPE_CODES;
use crate::kernel::{KernelParams, TIERS};

/// The global parameter vector: score shape `q`, coarse spatial weights,
/// per-shape contact effects, and kernel tier parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    pub q: f64,
    pub w_e: Vec<f64>,
    pub phi: [f64; SHAPE_CODES],
    pub kparams: KernelParams,
}

impl GlobalParams {
    pub fn validate(&self, n_regions: usize) -> Result<()> {
        if !(self.q > 0.0) {
            return Err(Error::Config(format!("q must be positive, got {}", self.q)));
        }
        if self.w_e.len() != n_regions {
            return Err(Error::Config(format!(
                "expected {n_regions} coarse weights, got {}",
                self.w_e.len()
            )));
        }
        if self.w_e.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("coarse weights must be positive".into()));
        }
        if self.phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("shape effects must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of the independent priors on the global parameters.
#[derive(Debug, Clone, Copy)]
pub struct PriorConfig {
    pub q_shape: f64,
    pub q_rate: f64,
    pub p_variance: f64,
    pub w_precision_diag: f64,
    pub w_precision_adj: f64,
    pub phi_upper: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            q_shape: 2.0,
            q_rate: 2.0,
            p_variance: 4.0,
            w_precision_diag: 1.0,
            w_precision_adj: 0.2,
            phi_upper: 1.0,
        }
    }
}

/// Gaussian prior on the log coarse weights, held as the Cholesky factor of
/// its precision matrix (unit diagonal, one off-diagonal entry per adjacent
/// region pair).
pub struct CoarsePrior {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl CoarsePrior {
    pub fn new(cfg: &PriorConfig, cm: &CoarseMap) -> Result<Self> {
        let n = cm.n_regions();
        let mut prec = DMatrix::from_element(n, n, 0.0);
        for i in 0..n {
            prec[(i, i)] = cfg.w_precision_diag;
        }
        for &(r1, r2) in cm.adjacency() {
            let (i, j) = (r1 as usize - 1, r2 as usize - 1);
            prec[(i, j)] = cfg.w_precision_adj;
            prec[(j, i)] = cfg.w_precision_adj;
        }
        let chol = Cholesky::new(prec)
            .ok_or_else(|| Error::Config("coarse-weight precision is not positive definite".into()))?;
        Ok(CoarsePrior { chol, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Draw `log w_E` from the prior by solving against the upper Cholesky
    /// factor of the precision.
    pub fn sample_log_w<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eps = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let upper = self.chol.l().transpose();
        let x = upper
            .solve_upper_triangular(&eps)
            .expect("cholesky factor is nonsingular");
        x.as_slice().to_vec()
    }
}

/// Draw a full parameter vector from the prior.
pub fn sample_prior<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PriorConfig,
    cm: &CoarseMap,
) -> Result<GlobalParams> {
    let prior = CoarsePrior::new(cfg, cm)?;
    Ok(sample_prior_with(rng, cfg, &prior))
}

/// Like [`sample_prior`] but reusing a prebuilt Cholesky factor.
pub fn sample_prior_with<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PriorConfig,
    prior: &CoarsePrior,
) -> GlobalParams {
    let q = Gamma::new(cfg.q_shape, 1.0 / cfg.q_rate)
        .expect("valid gamma prior")
        .sample(rng);
    let w_e: Vec<f64> = prior.sample_log_w(rng).iter().map(|l| l.exp()).collect();
    let mut phi = [0.0; SHAPE_CODES];
    for slot in phi.iter_mut() {
        *slot = rng.random::<f64>() * cfg.phi_upper;
    }
    let sd = cfg.p_variance.sqrt();
    let draw_p = |rng: &mut R| {
        let mut p = [0.0; TIERS];
        for slot in p.iter_mut() {
            *slot = sd * rng.sample::<f64, _>(StandardNormal);
        }
        p
    };
    let p_h = draw_p(rng);
    let p_v = draw_p(rng);
    GlobalParams {
        q,
        w_e,
        phi,
        kparams: KernelParams::new(p_h, p_v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::tiny_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_draw_respects_ranges() {
        let cm = tiny_map(2, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = sample_prior(&mut rng, &PriorConfig::default(), &cm).unwrap();
        theta.validate(cm.n_regions()).unwrap();
        assert_eq!(theta.w_e.len(), 4);
    }

    #[test]
    fn prior_moments_match() {
        let cm = tiny_map(2, 2, 5);
        let cfg = PriorConfig::default();
        let prior = CoarsePrior::new(&cfg, &cm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut qs = Vec::with_capacity(n);
        let mut p1 = Vec::with_capacity(n);
        for _ in 0..n {
            let theta = sample_prior_with(&mut rng, &cfg, &prior);
            qs.push(theta.q);
            p1.push(theta.kparams.p_h[0]);
        }
        // Gamma(2,2): mean 1, variance 1/2
        let q_mean = crate::util::mean(&qs);
        let q_se = (0.5f64 / n as f64).sqrt();
        assert!((q_mean - 1.0).abs() < 3.0 * q_se, "q mean {q_mean}");
        // kernel tiers: variance 4; SE of sample variance ~ var * sqrt(2/n)
        let p_var = crate::util::variance(&p1);
        let v_se = 4.0 * (2.0 / n as f64).sqrt();
        assert!((p_var - 4.0).abs() < 3.0 * v_se, "p variance {p_var}");
    }

    #[test]
    fn log_w_prior_covariance_matches_precision_inverse() {
        // Against a dense inverse: neighbors get negative partial
        // correlation under the +0.2 off-diagonal precision.
        let cm = tiny_map(2, 1, 5);
        let cfg = PriorConfig::default();
        let prior = CoarsePrior::new(&cfg, &cm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let (mut v0, mut v1, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = prior.sample_log_w(&mut rng);
            v0 += z[0] * z[0];
            v1 += z[1] * z[1];
            cross += z[0] * z[1];
        }
        // precision [[1, .2], [.2, 1]] inverts to [[1.0417, -0.2083], ...]
        let inv_diag = 1.0 / (1.0 - 0.04);
        let inv_off = -0.2 / (1.0 - 0.04);
        assert!((v0 / n as f64 - inv_diag).abs() < 0.02);
        assert!((v1 / n as f64 - inv_diag).abs() < 0.02);
        assert!((cross / n as f64 - inv_off).abs() < 0.02);
    }
}
