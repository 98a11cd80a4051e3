//! Monte Carlo random-match-probability estimation.
//!
//! A replicate draws a parameter vector from the posterior chain, fresh
//! scores, and a full accidental configuration for the query's contact
//! surface, then asks a match predicate whether that simulated shoe would be
//! judged consistent with the query print. The match fraction estimates the
//! probability that a random shoe from the population shares the print's
//! accidental features; the report carries an exact binomial interval.
//!
//! What counts as a "match" between two prints is an open forensic
//! question: the predicate is configurable and deliberately simple.

use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{shape_code_field, ContactSurface};
use crate::intensity::{lambda_field, mu_weights, sample_accidentals, ShoeScores};
use crate::records::PosteriorDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Every query accidental must lie within `radius` of some sampled
    /// accidental (crime-scene prints are thinned subsets of the sole).
    OneSidedCover,
    /// Symmetric comparison: a maximum bipartite matching within `radius`
    /// must pair off all but `count_tolerance` accidentals on the larger
    /// side.
    Bipartite,
}

#[derive(Debug, Clone, Copy)]
pub struct MatchPredicateConfig {
    /// Match radius in grid units.
    pub radius: f64,
    /// Accidentals allowed to go unmatched.
    pub count_tolerance: usize,
    pub mode: MatchMode,
}

impl Default for MatchPredicateConfig {
    fn default() -> Self {
        MatchPredicateConfig {
            radius: 3.0,
            count_tolerance: 0,
            mode: MatchMode::OneSidedCover,
        }
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Apply the configured predicate to (query, sampled) accidental sets.
pub fn prints_match(
    cfg: &MatchPredicateConfig,
    query: &[(f64, f64)],
    sample: &[(f64, f64)],
) -> bool {
    let r2 = cfg.radius * cfg.radius;
    match cfg.mode {
        MatchMode::OneSidedCover => {
            let uncovered = query
                .iter()
                .filter(|q| !sample.iter().any(|s| dist2(**q, *s) <= r2))
                .count();
            uncovered <= cfg.count_tolerance
        }
        MatchMode::Bipartite => {
            let matched = max_bipartite_matching(query, sample, r2);
            let larger = query.len().max(sample.len());
            larger.saturating_sub(matched) <= cfg.count_tolerance
        }
    }
}

/// Kuhn's augmenting-path maximum matching on the within-radius graph.
fn max_bipartite_matching(left: &[(f64, f64)], right: &[(f64, f64)], r2: f64) -> usize {
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|q| {
            right
                .iter()
                .enumerate()
                .filter(|(_, s)| dist2(*q, **s) <= r2)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut match_right: Vec<Option<usize>> = vec![None; right.len()];
    fn try_assign(
        i: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if match_right[j].is_none()
                || try_assign(match_right[j].unwrap(), adj, seen, match_right)
            {
                match_right[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..left.len() {
        let mut seen = vec![false; right.len()];
        if try_assign(i, &adj, &mut seen, &mut match_right) {
            matched += 1;
        }
    }
    matched
}

#[derive(Debug, Clone)]
pub struct RmpResult {
    pub matches: usize,
    pub replicates: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Exact (Clopper-Pearson) binomial confidence interval.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0);
    let alpha = 1.0 - confidence;
    let low = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .expect("valid beta")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .expect("valid beta")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

/// Estimate the RMP with a caller-supplied predicate over the sampled
/// accidental set. `counts` is the pool of per-shoe accidental totals to
/// resample from (typically the training set's empirical counts).
pub fn rmp_monte_carlo<R: Rng + ?Sized, F: FnMut(&[(f64, f64)]) -> bool>(
    draws: &PosteriorDraws,
    cm: &CoarseMap,
    query_mask: &ContactSurface,
    counts: &[usize],
    replicates: usize,
    mut predicate: F,
    rng: &mut R,
) -> Result<RmpResult> {
    if replicates < 100 {
        return Err(Error::Config(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    if draws.is_empty() {
        return Err(Error::Config("empty posterior draw chain".into()));
    }
    if counts.is_empty() {
        return Err(Error::Config("empty accidental-count pool".into()));
    }
    let codes = shape_code_field(query_mask);
    let mut matches = 0usize;
    for _ in 0..replicates {
        let rec = &draws.records[rng.random_range(0..draws.records.len())];
        let theta = rec.to_params()?;
        let nu = if draws.variant.scores_on {
            ShoeScores::sample(rng, theta.q, cm)
        } else {
            ShoeScores::ones(cm)
        };
        let mu = mu_weights(&theta, &nu, &codes, cm)?;
        let kernel = draws.variant.kernel(&theta);
        let field = lambda_field(&mu, &kernel);
        let n = counts[rng.random_range(0..counts.len())];
        let sample = sample_accidentals(&field, n, rng);
        if predicate(&sample) {
            matches += 1;
        }
    }
    let estimate = matches as f64 / replicates as f64;
    let (ci_low, ci_high) = clopper_pearson(matches, replicates, 0.95);
    Ok(RmpResult {
        matches,
        replicates,
        estimate,
        ci_low,
        ci_high,
    })
}

/// Estimate the RMP of a query print with the configured predicate.
pub fn rmp_estimate<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    cm: &CoarseMap,
    query_mask: &ContactSurface,
    query_accidentals: &[(f64, f64)],
    counts: &[usize],
    replicates: usize,
    predicate: &MatchPredicateConfig,
    rng: &mut R,
) -> Result<RmpResult> {
    rmp_monte_carlo(
        draws,
        cm,
        query_mask,
        counts,
        replicates,
        |sample| prints_match(predicate, query_accidentals, sample),
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::tiny_map;
    use crate::grid::SHAPE_CODES;
    use crate::kernel::KernelParams;
    use crate::likelihood::ModelVariant;
    use crate::params::GlobalParams;
    use crate::records::DrawRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_draws(cm: &CoarseMap) -> PosteriorDraws {
        let theta = GlobalParams {
            q: 1.0,
            w_e: vec![1.0; cm.n_regions()],
            phi: [1.0; SHAPE_CODES],
            kparams: KernelParams::zeros(),
        };
        PosteriorDraws {
            records: vec![DrawRecord::from_params(0, &theta)],
            variant: ModelVariant::full(),
        }
    }

    #[test]
    fn constant_predicates_give_zero_and_one() {
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("q", |a1, a2| cm.region(a1, a2) > 0);
        let draws = toy_draws(&cm);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let always =
            rmp_monte_carlo(&draws, &cm, &mask, &[5], 200, |_| true, &mut rng).unwrap();
        assert_eq!(always.estimate, 1.0);
        assert_eq!(always.ci_high, 1.0);
        let never =
            rmp_monte_carlo(&draws, &cm, &mask, &[5], 200, |_| false, &mut rng).unwrap();
        assert_eq!(never.estimate, 0.0);
        assert_eq!(never.ci_low, 0.0);
    }

    #[test]
    fn too_few_replicates_are_refused() {
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("q", |_, _| true);
        let draws = toy_draws(&cm);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let err = rmp_monte_carlo(&draws, &cm, &mask, &[5], 99, |_| true, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn worked_binomial_example() {
        // 15 matches out of 10000 replicates
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("q", |a1, a2| cm.region(a1, a2) > 0);
        let draws = toy_draws(&cm);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut k = 0usize;
        let result = rmp_monte_carlo(
            &draws,
            &cm,
            &mask,
            &[3],
            10_000,
            |_| {
                k += 1;
                k % 667 == 0
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(result.matches, 14); // floor(10000/667)
        let result2 = {
            let mut k = 0usize;
            rmp_monte_carlo(
                &draws,
                &cm,
                &mask,
                &[3],
                10_000,
                |_| {
                    k += 1;
                    k <= 15
                },
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(result2.matches, 15);
        assert!((result2.estimate - 0.0015).abs() < 1e-12);
        assert!(result2.ci_low < 0.0015 && 0.0015 < result2.ci_high);
        // reference values for CP(15, 10000, 95%)
        assert!((result2.ci_low - 0.00083977).abs() < 1e-6, "{}", result2.ci_low);
        assert!((result2.ci_high - 0.00247282).abs() < 1e-6, "{}", result2.ci_high);
    }

    #[test]
    fn cover_predicate_and_bipartite_behave() {
        let cfg = MatchPredicateConfig {
            radius: 1.5,
            count_tolerance: 0,
            mode: MatchMode::OneSidedCover,
        };
        let query = vec![(10.0, 10.0), (20.0, 20.0)];
        let close = vec![(10.5, 10.5), (20.2, 19.6), (50.0, 50.0)];
        assert!(prints_match(&cfg, &query, &close));
        let far = vec![(10.5, 10.5), (30.0, 30.0)];
        assert!(!prints_match(&cfg, &query, &far));
        // bipartite: one sample point cannot cover two query points
        let cfg = MatchPredicateConfig {
            mode: MatchMode::Bipartite,
            ..cfg
        };
        let query = vec![(10.0, 10.0), (10.5, 10.5)];
        let one = vec![(10.2, 10.2)];
        assert!(!prints_match(&cfg, &query, &one));
        let two = vec![(10.2, 10.2), (10.7, 10.7)];
        assert!(prints_match(&cfg, &query, &two));
        // tolerance forgives the extra sampled point
        let tol = MatchPredicateConfig {
            count_tolerance: 1,
            ..cfg
        };
        let three = vec![(10.2, 10.2), (10.7, 10.7), (90.0, 190.0)];
        assert!(prints_match(&tol, &query, &three));
        assert!(!prints_match(&cfg, &query, &three));
    }
}
