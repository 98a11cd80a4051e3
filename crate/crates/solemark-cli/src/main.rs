//! Command-line workflows: simulate datasets, fit the posterior, evaluate
//! held-out shoes, score competitor baselines, estimate random match
//! probabilities, and summarize chains.

mod config;
mod store;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use solemark::baselines;
use solemark::coarse::CoarseMap;
use solemark::dataset::{
    simulate_dataset, CountModel, Dataset, MaskSource, ShoeRecord, SimulateConfig,
};
use solemark::grid::parse_mask;
use solemark::heldout::{chain_ess, geo_mean_metric, heldout_density, per_accidental_metric};
use solemark::likelihood::{ModelVariant, ShoeCells};
use solemark::mcmc::{run_chain, ChainConfig};
use solemark::records::{
    parse_draw_log, render_draw_log, variant_from_headers, DrawRecord, PosteriorDraws,
};
use solemark::rmp::{rmp_estimate, MatchMode, MatchPredicateConfig};

use config::Config;
use store::{atomic_write, load_dataset, save_dataset};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "solemark", version, about = "Spatial modeling of accidental marks on shoe soles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser, Debug)]
struct CommonArgs {
    /// key=value configuration file; flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the generative model
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// output dataset directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shoes: Option<usize>,
        /// counts spec: fixed:K | lognormal:MEDIAN,SIGMA | list:PATH
        #[arg(long)]
        counts: Option<String>,
        /// fraction of the active set each synthetic mask covers
        #[arg(long)]
        coverage: Option<f64>,
        /// share one mask across all shoes
        #[arg(long)]
        shared_mask: bool,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run the posterior sampler on the training split
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// dataset directory
        #[arg(long)]
        data: PathBuf,
        /// output draw log
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        variant: Option<String>,
        /// continue a previous draw log (iteration numbering carries on)
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Importance-sampled held-out density of the test split
    Heldout {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// draw log from `fit`
        #[arg(long)]
        draws: PathBuf,
        /// output results CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a competitor model on the test split
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// renormalize the KDE over the active set instead of the padded grid
        #[arg(long)]
        kde_restrict: bool,
    },
    /// Monte Carlo random-match-probability estimate for a query print
    Rmp {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        draws: PathBuf,
        /// dataset directory supplying the coarse map and count pool
        #[arg(long)]
        data: PathBuf,
        /// query contact surface (mask file)
        #[arg(long)]
        query_mask: PathBuf,
        /// query accidentals (CSV with header shoe_id,x1,x2)
        #[arg(long)]
        query_acc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        count_tolerance: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<RmpMode>,
    },
    /// Trace summaries and effective sample sizes of a draw log
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Uniform,
    Kde,
    Contact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RmpMode {
    Cover,
    Bipartite,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            common,
            out,
            shoes,
            counts,
            coverage,
            shared_mask,
            variant,
        } => cmd_simulate(common, out, shoes, counts, coverage, shared_mask, variant),
        Command::Fit {
            common,
            data,
            out,
            iters,
            warmup,
            thin,
            variant,
            resume,
        } => cmd_fit(common, data, out, iters, warmup, thin, variant, resume),
        Command::Heldout {
            common,
            data,
            draws,
            out,
        } => cmd_heldout(common, data, draws, out),
        Command::Baseline {
            common,
            method,
            data,
            out,
            kde_restrict,
        } => cmd_baseline(common, method, data, out, kde_restrict),
        Command::Rmp {
            common,
            draws,
            data,
            query_mask,
            query_acc,
            out,
            replicates,
            radius,
            count_tolerance,
            mode,
        } => cmd_rmp(
            common,
            draws,
            data,
            query_mask,
            query_acc,
            out,
            replicates,
            radius,
            count_tolerance,
            mode,
        ),
        Command::Diagnose { common, draws, out } => cmd_diagnose(common, draws, out),
    }
}

fn resolve_config(common: &CommonArgs, overrides: &[(&str, Option<String>)]) -> Result<Config> {
    let mut cfg = Config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.set("seed", seed);
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v);
        }
    }
    cfg.set_if_absent("seed", 0u64);
    Ok(cfg)
}

fn header(cmd: &str, cfg: &Config, extra: &[(&str, String)]) -> String {
    let mut line = format!(
        "# solemark={VERSION} cmd={cmd} seed={} config={}",
        cfg.get("seed").unwrap_or("0"),
        cfg.hash()
    );
    for (k, v) in extra {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    line
}

fn parse_counts(spec: &str) -> Result<CountModel> {
    if let Some(k) = spec.strip_prefix("fixed:") {
        return Ok(CountModel::Fixed(k.parse().context("fixed count")?));
    }
    if let Some(rest) = spec.strip_prefix("lognormal:") {
        let (median, sigma) = rest
            .split_once(',')
            .context("lognormal spec needs MEDIAN,SIGMA")?;
        return Ok(CountModel::LogNormal {
            median: median.parse().context("lognormal median")?,
            sigma: sigma.parse().context("lognormal sigma")?,
        });
    }
    if let Some(path) = spec.strip_prefix("list:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let counts = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<usize>().context("count list entry"))
            .collect::<Result<Vec<_>>>()?;
        if counts.is_empty() {
            bail!("count list {path} is empty");
        }
        return Ok(CountModel::List(counts));
    }
    bail!("unknown counts spec '{spec}' (expected fixed:, lognormal:, or list:)")
}

fn parse_variant(cfg: &Config) -> Result<ModelVariant> {
    Ok(ModelVariant::parse(cfg.get("variant").unwrap_or("full"))?)
}

/// Deterministic train/test split: indices shuffled by `split_seed`,
/// training first. `train=all` keeps every shoe in training.
fn split_dataset(cfg: &Config, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let train_key = cfg.get("train").unwrap_or("all");
    let test_n: usize = cfg.usize_or("test", 0)?;
    if train_key == "all" {
        return Ok(((0..n).collect(), Vec::new()));
    }
    let train_n: usize = train_key
        .parse()
        .with_context(|| format!("config key train has invalid value '{train_key}'"))?;
    if train_n + test_n > n {
        bail!("split train={train_n} + test={test_n} exceeds dataset size {n}");
    }
    let split_seed = cfg.u64_or("split_seed", 0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let mut train: Vec<usize> = order[..train_n].to_vec();
    let mut test: Vec<usize> = if test_n == 0 {
        order[train_n..].to_vec()
    } else {
        order[train_n..train_n + test_n].to_vec()
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn subset(data: &Dataset, idx: &[usize]) -> Dataset {
    Dataset {
        coarse: data.coarse.clone(),
        shoes: idx.iter().map(|&i| data.shoes[i].clone()).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    common: CommonArgs,
    out: PathBuf,
    shoes: Option<usize>,
    counts: Option<String>,
    coverage: Option<f64>,
    shared_mask: bool,
    variant: Option<String>,
) -> Result<()> {
    let cfg = resolve_config(
        &common,
        &[
            ("shoes", shoes.map(|v| v.to_string())),
            ("counts", counts),
            ("coverage", coverage.map(|v| v.to_string())),
            ("masks", shared_mask.then(|| "shared".to_string())),
            ("variant", variant),
        ],
    )?;
    let seed = cfg.u64_or("seed", 0)?;
    let n_shoes = cfg.usize_or("shoes", 386)?;
    let coverage = cfg.f64_or("coverage", 0.65)?;
    let counts = parse_counts(cfg.get("counts").unwrap_or("lognormal:20,0.8"))?;
    let variant = parse_variant(&cfg)?;
    let masks = match cfg.get("masks") {
        Some("shared") => MaskSource::SyntheticShared { coverage },
        _ => MaskSource::Synthetic { coverage },
    };

    let cm = CoarseMap::default_map();
    let sim_cfg = SimulateConfig {
        n_shoes,
        counts,
        masks,
        truth: None,
        variant,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_dataset(&sim_cfg, &cm, &mut rng)?;
    save_dataset(&out, &sim.dataset)?;

    let truth_headers = vec![
        ("solemark".to_string(), VERSION.to_string()),
        ("cmd".to_string(), "simulate".to_string()),
        ("seed".to_string(), seed.to_string()),
        ("config".to_string(), cfg.hash()),
        ("variant".to_string(), variant.name().to_string()),
    ];
    let truth_rec = DrawRecord::from_params(-1, &sim.truth);
    atomic_write(
        &out.join("truth.jsonl"),
        &render_draw_log(&truth_headers, &[truth_rec]),
    )?;

    let mut counts: Vec<usize> = sim
        .dataset
        .shoes
        .iter()
        .map(|s| s.accidentals.len())
        .collect();
    counts.sort_unstable();
    let median = counts.get(counts.len() / 2).copied().unwrap_or(0);
    eprintln!(
        "simulated {} shoes, {} accidentals (median {median} per shoe) into {}",
        sim.dataset.shoes.len(),
        sim.dataset.total_accidentals(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    common: CommonArgs,
    data: PathBuf,
    out: PathBuf,
    iters: Option<usize>,
    warmup: Option<usize>,
    thin: Option<usize>,
    variant: Option<String>,
    resume: Option<PathBuf>,
) -> Result<()> {
    let cfg = resolve_config(
        &common,
        &[
            ("iters", iters.map(|v| v.to_string())),
            ("warmup", warmup.map(|v| v.to_string())),
            ("thin", thin.map(|v| v.to_string())),
            ("variant", variant),
        ],
    )?;
    let seed = cfg.u64_or("seed", 0)?;
    let variant = parse_variant(&cfg)?;

    let dataset = load_dataset(&data)?;
    let (train_idx, _) = split_dataset(&cfg, dataset.shoes.len())?;
    let train = subset(&dataset, &train_idx);

    let (init, start_iter, default_warmup) = match &resume {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let (headers, records) = parse_draw_log(&text)?;
            let prev_variant = variant_from_headers(&headers)?;
            if prev_variant != variant {
                bail!(
                    "resume log was fit with variant {}, requested {}",
                    prev_variant.name(),
                    variant.name()
                );
            }
            let last = records
                .last()
                .context("resume draw log has no records")?
                .clone();
            let start = last.iter + 1;
            (Some(last.to_params()?), start, 0)
        }
        None => (None, 0, 10_000),
    };

    let chain_cfg = ChainConfig {
        iters: cfg.usize_or("iters", 30_000)?,
        warmup: cfg.usize_or("warmup", default_warmup)?,
        thin: cfg.usize_or("thin", 1)?,
        variant,
        start_iter,
        init,
        ..Default::default()
    };

    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = run_chain(&train, &chain_cfg, &mut rng)?;
    let elapsed = started.elapsed().as_secs_f64();
    eprintln!(
        "fit: {} sweeps on {} shoes in {elapsed:.1}s ({:.1} sweeps/s), {} draws retained",
        chain_cfg.iters,
        train.shoes.len(),
        chain_cfg.iters as f64 / elapsed,
        draws.len()
    );

    let mut headers = vec![
        ("solemark".to_string(), VERSION.to_string()),
        ("cmd".to_string(), "fit".to_string()),
        ("seed".to_string(), seed.to_string()),
        ("config".to_string(), cfg.hash()),
        ("variant".to_string(), variant.name().to_string()),
        ("train_n".to_string(), train.shoes.len().to_string()),
    ];
    if let Some(path) = &resume {
        headers.push(("resumed_from".to_string(), path.display().to_string()));
    }
    atomic_write(&out, &render_draw_log(&headers, &draws.records))?;
    Ok(())
}

fn load_draws(path: &Path) -> Result<PosteriorDraws> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (headers, records) = parse_draw_log(&text)?;
    if records.is_empty() {
        bail!("draw log {} has no records", path.display());
    }
    Ok(PosteriorDraws {
        records,
        variant: variant_from_headers(&headers)?,
    })
}

/// Render per-shoe results sorted by metric, with the geometric-mean
/// summary. Shoes without accidentals carry no metric and are excluded from
/// the summary.
fn results_csv(
    head: String,
    mut rows: Vec<(String, usize, f64, f64, f64)>,
) -> String {
    rows.sort_by(|a, b| {
        a.3.partial_cmp(&b.3)
            .unwrap_or(std::cmp::Ordering::Greater)
            .then(a.0.cmp(&b.0))
    });
    let mut out = head;
    out.push_str("shoe_id,N,estimate_log,metric,ess\n");
    let mut metrics = Vec::new();
    for (id, n, est, metric, ess) in &rows {
        let est_txt = if est.is_finite() {
            format!("{est:.6}")
        } else {
            "-inf".to_string()
        };
        let metric_txt = if metric.is_nan() {
            "nan".to_string()
        } else {
            format!("{metric:.4}")
        };
        out.push_str(&format!("{id},{n},{est_txt},{metric_txt},{ess:.1}\n"));
        if *n > 0 {
            metrics.push(*metric);
        }
    }
    let geo = geo_mean_metric(&metrics);
    out.push_str(&format!("# geo_mean_metric={geo:.4}\n"));
    out
}

fn cmd_heldout(common: CommonArgs, data: PathBuf, draws: PathBuf, out: PathBuf) -> Result<()> {
    let cfg = resolve_config(&common, &[])?;
    let seed = cfg.u64_or("seed", 0)?;
    let dataset = load_dataset(&data)?;
    let (_, test_idx) = split_dataset(&cfg, dataset.shoes.len())?;
    let posterior = load_draws(&draws)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &i in &test_idx {
        let shoe = &dataset.shoes[i];
        let r = heldout_density(
            &posterior,
            &dataset.coarse,
            &shoe.mask,
            &shoe.accidentals,
            &mut rng,
        )?;
        rows.push((
            r.shoe_id,
            r.n_accidentals,
            r.estimate_log,
            r.metric,
            r.ess,
        ));
    }
    let head = header(
        "heldout",
        &cfg,
        &[
            ("variant", posterior.variant.name().to_string()),
            ("draws", posterior.len().to_string()),
            ("test_n", test_idx.len().to_string()),
        ],
    );
    atomic_write(&out, &results_csv(head, rows))?;
    eprintln!("heldout: scored {} test shoes into {}", test_idx.len(), out.display());
    Ok(())
}

fn cmd_baseline(
    common: CommonArgs,
    method: BaselineMethod,
    data: PathBuf,
    out: PathBuf,
    kde_restrict: bool,
) -> Result<()> {
    let cfg = resolve_config(&common, &[])?;
    let dataset = load_dataset(&data)?;
    let (train_idx, test_idx) = split_dataset(&cfg, dataset.shoes.len())?;
    let cm = &dataset.coarse;

    let eval_shoes: Vec<&ShoeRecord> = test_idx.iter().map(|&i| &dataset.shoes[i]).collect();
    let mut rows = Vec::new();
    let method_name = match method {
        BaselineMethod::Uniform => {
            for shoe in &eval_shoes {
                let ll = baselines::uniform_log_density(cm, &shoe.accidentals)?;
                rows.push(make_row(&shoe.id, shoe.accidentals.len(), ll));
            }
            "uniform"
        }
        BaselineMethod::Kde => {
            let pooled: Vec<(f64, f64)> = train_idx
                .iter()
                .flat_map(|&i| dataset.shoes[i].accidentals.iter().copied())
                .collect();
            let fit = baselines::kde_fit(&pooled, kde_restrict.then_some(cm))?;
            for shoe in &eval_shoes {
                let ll = baselines::kde_log_density(&fit, &shoe.accidentals)?;
                rows.push(make_row(&shoe.id, shoe.accidentals.len(), ll));
            }
            "kde"
        }
        BaselineMethod::Contact => {
            let train_cells: Vec<ShoeCells> = train_idx
                .iter()
                .map(|&i| {
                    let s = &dataset.shoes[i];
                    ShoeCells::build(&s.mask, &s.accidentals, cm)
                })
                .collect::<solemark::Result<_>>()?;
            let refs: Vec<&ShoeCells> = train_cells.iter().collect();
            let fit = baselines::contact_mle(&refs, cm)?;
            if fit.skipped > 0 {
                eprintln!(
                    "contact: skipped {} training accidentals outside the active set",
                    fit.skipped
                );
            }
            if !fit.pinned.is_empty() {
                eprintln!(
                    "contact: pinned {} unidentifiable shape codes to the anchor",
                    fit.pinned.len()
                );
            }
            for shoe in &eval_shoes {
                let cells = ShoeCells::build(&shoe.mask, &shoe.accidentals, cm)?;
                let ll = baselines::contact_log_density(&fit.params, &cells, cm);
                rows.push(make_row(&shoe.id, shoe.accidentals.len(), ll));
            }
            "contact"
        }
    };
    let head = header(
        "baseline",
        &cfg,
        &[
            ("method", method_name.to_string()),
            ("train_n", train_idx.len().to_string()),
            ("test_n", test_idx.len().to_string()),
        ],
    );
    atomic_write(&out, &results_csv(head, rows))?;
    eprintln!(
        "baseline {method_name}: scored {} test shoes into {}",
        eval_shoes.len(),
        out.display()
    );
    Ok(())
}

fn make_row(id: &str, n: usize, estimate_log: f64) -> (String, usize, f64, f64, f64) {
    let metric = if n == 0 {
        f64::NAN
    } else if estimate_log == f64::NEG_INFINITY {
        0.0
    } else {
        per_accidental_metric(estimate_log, n)
    };
    (id.to_string(), n, estimate_log, metric, 1.0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_rmp(
    common: CommonArgs,
    draws: PathBuf,
    data: PathBuf,
    query_mask: PathBuf,
    query_acc: PathBuf,
    out: PathBuf,
    replicates: Option<usize>,
    radius: Option<f64>,
    count_tolerance: Option<usize>,
    mode: Option<RmpMode>,
) -> Result<()> {
    let cfg = resolve_config(
        &common,
        &[
            ("replicates", replicates.map(|v| v.to_string())),
            ("radius", radius.map(|v| v.to_string())),
            ("count_tolerance", count_tolerance.map(|v| v.to_string())),
            (
                "mode",
                mode.map(|m| {
                    match m {
                        RmpMode::Cover => "cover",
                        RmpMode::Bipartite => "bipartite",
                    }
                    .to_string()
                }),
            ),
        ],
    )?;
    let seed = cfg.u64_or("seed", 0)?;
    let dataset = load_dataset(&data)?;
    let posterior = load_draws(&draws)?;

    let mask_text = std::fs::read_to_string(&query_mask)
        .with_context(|| format!("reading {}", query_mask.display()))?;
    let stem = query_mask
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("query");
    let mask = parse_mask(&mask_text, stem)?;

    let acc_text = std::fs::read_to_string(&query_acc)
        .with_context(|| format!("reading {}", query_acc.display()))?;
    let query_points: Vec<(f64, f64)> = solemark::dataset::parse_accidentals_csv(&acc_text)?
        .into_iter()
        .flat_map(|(_, pts)| pts)
        .collect();

    // empirical count pool from the training split
    let (train_idx, _) = split_dataset(&cfg, dataset.shoes.len())?;
    let counts: Vec<usize> = match cfg.get("counts") {
        Some(spec) => match parse_counts(spec)? {
            CountModel::Fixed(k) => vec![k],
            CountModel::List(list) => list,
            CountModel::LogNormal { .. } => {
                bail!("rmp counts must be fixed: or list: (an empirical pool)")
            }
        },
        None => train_idx
            .iter()
            .map(|&i| dataset.shoes[i].accidentals.len())
            .filter(|&n| n > 0)
            .collect(),
    };

    let pred = MatchPredicateConfig {
        radius: cfg.f64_or("radius", 3.0)?,
        count_tolerance: cfg.usize_or("count_tolerance", 0)?,
        mode: match cfg.get("mode").unwrap_or("cover") {
            "cover" => MatchMode::OneSidedCover,
            "bipartite" => MatchMode::Bipartite,
            other => bail!("unknown rmp mode '{other}'"),
        },
    };
    let replicates = cfg.usize_or("replicates", 10_000)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = rmp_estimate(
        &posterior,
        &dataset.coarse,
        &mask,
        &query_points,
        &counts,
        replicates,
        &pred,
        &mut rng,
    )?;

    let mut report = header(
        "rmp",
        &cfg,
        &[
            ("variant", posterior.variant.name().to_string()),
            ("radius", format!("{}", pred.radius)),
            ("count_tolerance", pred.count_tolerance.to_string()),
            (
                "mode",
                match pred.mode {
                    MatchMode::OneSidedCover => "cover".to_string(),
                    MatchMode::Bipartite => "bipartite".to_string(),
                },
            ),
        ],
    );
    report.push_str(&format!("matches={}\n", result.matches));
    report.push_str(&format!("replicates={}\n", result.replicates));
    report.push_str(&format!("rmp={:.6}\n", result.estimate));
    report.push_str(&format!("ci_low={:.6}\n", result.ci_low));
    report.push_str(&format!("ci_high={:.6}\n", result.ci_high));
    atomic_write(&out, &report)?;
    println!(
        "rmp={:.6} ({} / {} replicates), 95% CI [{:.6}, {:.6}]",
        result.estimate, result.matches, result.replicates, result.ci_low, result.ci_high
    );
    Ok(())
}

fn cmd_diagnose(common: CommonArgs, draws: PathBuf, out: PathBuf) -> Result<()> {
    let cfg = resolve_config(&common, &[])?;
    let posterior = load_draws(&draws)?;
    let records = &posterior.records;
    let n_regions = records[0].log_w_e.len();

    let mut tracked: Vec<(String, Vec<f64>)> = Vec::new();
    tracked.push(("q".into(), records.iter().map(|r| r.q).collect()));
    for idx in [0, n_regions / 2, n_regions - 1] {
        tracked.push((
            format!("log_w_E[{}]", idx + 1),
            records.iter().map(|r| r.log_w_e[idx]).collect(),
        ));
    }
    for idx in [0, 31] {
        tracked.push((
            format!("phi[{}]", idx + 1),
            records.iter().map(|r| r.phi[idx]).collect(),
        ));
    }
    for idx in 0..4 {
        tracked.push((
            format!("p_h[{}]", idx + 1),
            records.iter().map(|r| r.p_h[idx]).collect(),
        ));
        tracked.push((
            format!("p_v[{}]", idx + 1),
            records.iter().map(|r| r.p_v[idx]).collect(),
        ));
    }

    let mut out_text = header(
        "diagnose",
        &cfg,
        &[("draws", records.len().to_string())],
    );
    out_text.push_str("param,mean,sd,ess,degenerate\n");
    for (name, chain) in &tracked {
        let mean = solemark::util::mean(chain);
        let sd = if chain.len() > 1 {
            solemark::util::variance(chain).sqrt()
        } else {
            0.0
        };
        let ess = if chain.len() >= 10 {
            chain_ess(chain)
        } else {
            chain.len() as f64
        };
        let degenerate = sd == 0.0;
        out_text.push_str(&format!("{name},{mean:.6},{sd:.6},{ess:.1},{degenerate}\n"));
    }
    atomic_write(&out, &out_text)?;
    eprintln!("diagnose: {} parameters into {}", tracked.len(), out.display());
    Ok(())
}
