//! Shoe datasets: accidental CSV files, synthetic masks, and simulation of
//! whole datasets from the generative model.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use crate::coarse::CoarseMap;
use crate::error::{Error, Result};
use crate::grid::{ContactSurface, GridIndex, shape_code_field};
use crate::intensity::{lambda_field, mu_weights, sample_accidentals, ShoeScores};
use crate::kernel::Kernel;
use crate::likelihood::ModelVariant;
use crate::params::{sample_prior, GlobalParams, PriorConfig};

/// One shoe: its contact surface and observed accidental locations.
#[derive(Debug, Clone)]
pub struct ShoeRecord {
    pub id: String,
    pub mask: ContactSurface,
    pub accidentals: Vec<(f64, f64)>,
}

/// A full dataset sharing one coarse map.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub coarse: CoarseMap,
    pub shoes: Vec<ShoeRecord>,
}

impl Dataset {
    /// Total number of accidentals across shoes.
    pub fn total_accidentals(&self) -> usize {
        self.shoes.iter().map(|s| s.accidentals.len()).sum()
    }
}

/// How per-shoe accidental counts are chosen during simulation.
#[derive(Debug, Clone)]
pub enum CountModel {
    Fixed(usize),
    /// Rounded log-normal, matching the right-skewed counts seen in real
    /// databases. `median` is the median count.
    LogNormal { median: f64, sigma: f64 },
    /// Explicit per-shoe counts, cycled if shorter than the shoe list.
    List(Vec<usize>),
}

impl CountModel {
    fn draw<R: Rng + ?Sized>(&self, shoe: usize, rng: &mut R) -> usize {
        match self {
            CountModel::Fixed(n) => *n,
            CountModel::LogNormal { median, sigma } => {
                let d = LogNormal::new(median.ln(), *sigma).expect("valid lognormal");
                d.sample(rng).round().max(1.0) as usize
            }
            CountModel::List(counts) => counts[shoe % counts.len()],
        }
    }
}

/// Where simulated shoes get their contact surfaces.
#[derive(Debug, Clone)]
pub enum MaskSource {
    /// Fresh random tread pattern per shoe, targeting the given fraction of
    /// the active set.
    Synthetic { coverage: f64 },
    /// One random tread pattern shared by every shoe (replicate draws from a
    /// single population).
    SyntheticShared { coverage: f64 },
    /// Externally supplied masks, cycled by shoe index.
    Provided(Vec<ContactSurface>),
}

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub n_shoes: usize,
    pub counts: CountModel,
    pub masks: MaskSource,
    /// Fixed truth; drawn from the prior when absent.
    pub truth: Option<GlobalParams>,
    pub variant: ModelVariant,
    pub prior: PriorConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n_shoes: 386,
            counts: CountModel::LogNormal {
                median: 20.0,
                sigma: 0.8,
            },
            masks: MaskSource::Synthetic { coverage: 0.65 },
            truth: None,
            variant: ModelVariant::full(),
            prior: PriorConfig::default(),
        }
    }
}

/// A simulated dataset along with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub truth: GlobalParams,
}

/// Random tread-like mask: a union of axis-aligned bars and discs clipped to
/// the active set, grown until it covers at least `coverage` of it.
pub fn synthetic_mask<R: Rng + ?Sized>(
    cm: &CoarseMap,
    coverage: f64,
    shoe_id: impl Into<String>,
    rng: &mut R,
) -> ContactSurface {
    let mut bits = vec![0u8; crate::grid::CELL_COUNT];
    let active = cm.active_cells();
    let target = ((coverage.clamp(0.05, 1.0)) * active.len() as f64) as usize;
    let covered = |bits: &[u8]| active.iter().filter(|&&c| bits[c as usize] == 1).count();

    // horizontal tread bars with a random phase and duty cycle
    let period = rng.random_range(6..14) as i32;
    let duty = rng.random_range(3..period.max(4)) as i32;
    let phase = rng.random_range(0..period) as i32;
    for &cell in active {
        let a = GridIndex::from_flat(cell as usize);
        if (a.a2 + phase).rem_euclid(period) < duty {
            bits[cell as usize] = 1;
        }
    }
    // add discs until the target coverage is met
    let mut guard = 0;
    while covered(&bits) < target && guard < 4000 {
        guard += 1;
        let center = active[rng.random_range(0..active.len())] as usize;
        let c = GridIndex::from_flat(center);
        let radius = rng.random_range(2..7) as i32;
        for dj in -radius..=radius {
            for di in -radius..=radius {
                if di * di + dj * dj > radius * radius {
                    continue;
                }
                let (a1, a2) = (c.a1 + di, c.a2 + dj);
                if GridIndex::in_bounds(a1, a2) {
                    let idx = (a2 as usize - 1) * crate::grid::GRID_WIDTH + (a1 as usize - 1);
                    if cm.region_at_flat(idx) > 0 {
                        bits[idx] = 1;
                    }
                }
            }
        }
    }
    ContactSurface::new(shoe_id, bits).expect("bits are 0/1")
}

/// Draw a dataset from the generative model.
pub fn simulate_dataset<R: Rng + ?Sized>(
    cfg: &SimulateConfig,
    cm: &CoarseMap,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    let mut truth = match &cfg.truth {
        Some(t) => {
            t.validate(cm.n_regions())?;
            t.clone()
        }
        None => sample_prior(rng, &cfg.prior, cm)?,
    };
    truth = crate::likelihood::apply_variant(&truth, cfg.variant);
    let kernel = if cfg.variant.kernel_on {
        Kernel::from_params(&truth.kparams)
    } else {
        Kernel::identity()
    };

    let shared = match &cfg.masks {
        MaskSource::SyntheticShared { coverage } => {
            Some(synthetic_mask(cm, *coverage, "shared", rng))
        }
        _ => None,
    };

    let width = cfg.n_shoes.to_string().len().max(3);
    let mut shoes = Vec::with_capacity(cfg.n_shoes);
    for s in 0..cfg.n_shoes {
        let id = format!("shoe_{s:0width$}");
        let mask = match &cfg.masks {
            MaskSource::Synthetic { coverage } => synthetic_mask(cm, *coverage, id.clone(), rng),
            MaskSource::SyntheticShared { .. } => {
                let mut m = shared.clone().unwrap();
                m.shoe_id = id.clone();
                m
            }
            MaskSource::Provided(masks) => {
                if masks.is_empty() {
                    return Err(Error::Config("mask source is empty".into()));
                }
                let mut m = masks[s % masks.len()].clone();
                m.shoe_id = id.clone();
                m
            }
        };
        let codes = shape_code_field(&mask);
        let nu = if cfg.variant.scores_on {
            ShoeScores::sample(rng, truth.q, cm)
        } else {
            ShoeScores::ones(cm)
        };
        let mu = mu_weights(&truth, &nu, &codes, cm)?;
        let field = lambda_field(&mu, &kernel);
        let n = cfg.counts.draw(s, rng);
        let accidentals = sample_accidentals(&field, n, rng);
        shoes.push(ShoeRecord {
            id,
            mask,
            accidentals,
        });
    }
    Ok(SyntheticDataset {
        dataset: Dataset {
            coarse: cm.clone(),
            shoes,
        },
        truth,
    })
}

/// Serialize accidentals as `shoe_id,x1,x2` rows.
pub fn write_accidentals_csv(shoes: &[ShoeRecord]) -> String {
    let mut out = String::from("shoe_id,x1,x2\n");
    for shoe in shoes {
        for (x1, x2) in &shoe.accidentals {
            out.push_str(&format!("{},{:.6},{:.6}\n", shoe.id, x1, x2));
        }
    }
    out
}

/// Parse `shoe_id,x1,x2` rows into per-shoe location lists, preserving the
/// order of first appearance. Coordinates are validated against the grid.
pub fn parse_accidentals_csv(text: &str) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "shoe_id,x1,x2" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                col: 1,
                msg: "expected header 'shoe_id,x1,x2'".into(),
            })
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: std::collections::HashMap<String, Vec<(f64, f64)>> =
        std::collections::HashMap::new();
    for (k, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = k + 1;
        let mut parts = line.split(',');
        let (id, x1, x2) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(x1), Some(x2), None) => (id, x1, x2),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    col: 1,
                    msg: "expected three comma-separated fields".into(),
                })
            }
        };
        let parse_coord = |tok: &str, col: usize| -> Result<f64> {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                col,
                msg: format!("invalid coordinate '{tok}'"),
            })
        };
        let x1 = parse_coord(x1, id.len() + 2)?;
        let x2 = parse_coord(x2, id.len() + 2)?;
        GridIndex::cell_of(x1, x2)?;
        if !by_id.contains_key(id) {
            order.push(id.to_string());
        }
        by_id.entry(id.to_string()).or_default().push((x1, x2));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let pts = by_id.remove(&id).unwrap();
            (id, pts)
        })
        .collect())
}
