use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use mcl_core::metrics::{evaluate_encoder, median, pool_matrix, BYTES_PER_ENTRY};
use mcl_core::trainer::initial_params;
use mcl_core::{
    generate_pool, read_features, train, write_features, Checkpoint, GenSpec, Pool, Regime, RetrievalMetrics,
    TrainConfig, TrainOutcome, TripletWeighting,
};
use serde::Serialize;

use crate::args::{CompareArgs, DumpArgs, EvalArgs, GenArgs, TrainArgs, TrainingOptions};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub fn gen(args: &GenArgs) -> CliResult<()> {
    let spec = GenSpec {
        num_identities: args.ids,
        samples_per_identity: args.per_id,
        d_raw: args.dim,
        intra_class_sigma: args.sigma,
        seed: args.seed,
    };
    check_file_target(&args.out, args.force)?;
    let pool = generate_pool(&spec)?;
    write_features(&pool, &args.out)?;
    info!("wrote {} samples of {} identities to {}", pool.len(), args.ids, args.out.display());
    RunManifest::new("gen", serde_json::to_value(spec_json(&spec))?)
        .seed("generator", args.seed)
        .write(std::slice::from_ref(&args.out), &sidecar(&args.out))
}

#[derive(Serialize)]
struct SpecJson {
    num_identities: usize,
    samples_per_identity: usize,
    d_raw: usize,
    intra_class_sigma: f64,
    seed: u64,
}

fn spec_json(s: &GenSpec) -> SpecJson {
    SpecJson {
        num_identities: s.num_identities,
        samples_per_identity: s.samples_per_identity,
        d_raw: s.d_raw,
        intra_class_sigma: s.intra_class_sigma,
        seed: s.seed,
    }
}

pub fn train_cmd(args: &TrainArgs) -> CliResult<()> {
    let regime: Regime = args.regime.into();
    let mut cfg = resolve_config(&args.training)?;
    if regime != Regime::All {
        cfg.split_count = TrainConfig::split_count_for_ratio(args.split_ratio)?;
        if regime == Regime::Mcl && cfg.split_count == 1 {
            info!("split ratio {}: MCL clusters the whole pool and reduces to the All regime", args.split_ratio);
        }
    }
    let data = load_data(&args.pool, &args.training)?;
    prepare_dir(&args.out, args.force)?;
    info!(
        "training {regime} on {} samples ({} identities), evaluating on {} samples",
        data.train.len(),
        distinct_ids(&data.train),
        data.eval.as_ref().map_or(0, Pool::len)
    );

    let outcome = train(&data.train, data.eval.as_ref(), &cfg, regime)?;
    let outputs = write_run(&args.out, &outcome)?;
    if let Some(m) = &outcome.report.final_metrics {
        println!("{regime}: mAP {:.4} rank-1 {:.4}", m.map, m.rank(1));
    }
    RunManifest::new("train", serde_json::to_value(&cfg)?)
        .seed("train", cfg.seed)
        .inputs(&data.inputs())?
        .write(&outputs, &args.out.join("manifest.json"))
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    stage: usize,
    lr: f64,
    phase1_samples: usize,
    phase2_samples: usize,
    clusters: usize,
    outliers: usize,
    phase1_loss: Option<f64>,
    phase2_loss: Option<f64>,
    cluster_label_precision: Option<f64>,
    map: Option<f64>,
    rank1: Option<f64>,
    entries: u64,
    seconds: f64,
    skipped: Option<String>,
}

#[derive(Serialize)]
struct CostRow {
    epoch: usize,
    n_clustered: usize,
    entries: u64,
    peak_bytes: u64,
    seconds: f64,
}

/// Checkpoint, per-epoch metrics and clustering cost of one training run.
fn write_run(dir: &Path, outcome: &TrainOutcome) -> CliResult<Vec<PathBuf>> {
    let report = &outcome.report;
    let ckpt = dir.join("checkpoint.mclk");
    Checkpoint::from_params(&outcome.params).write(&ckpt)?;

    let metrics_json = dir.join("metrics.json");
    fs::write(&metrics_json, serde_json::to_string_pretty(report)? + "\n")?;

    let metrics_csv = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_csv)?;
    for e in &report.epochs {
        w.serialize(EpochRow {
            epoch: e.epoch,
            stage: e.stage,
            lr: e.lr,
            phase1_samples: e.phase1_samples,
            phase2_samples: e.phase2_samples,
            clusters: e.clusters,
            outliers: e.outliers,
            phase1_loss: e.phase1_loss,
            phase2_loss: e.phase2_loss,
            cluster_label_precision: e.cluster_label_precision,
            map: e.map,
            rank1: e.rank1,
            entries: e.distance_entries,
            seconds: e.cluster_seconds,
            skipped: e.skipped.clone(),
        })?;
    }
    w.flush()?;

    let cost_csv = dir.join("cost.csv");
    let mut w = csv::Writer::from_path(&cost_csv)?;
    for e in &report.epochs {
        w.serialize(CostRow {
            epoch: e.epoch,
            n_clustered: e.phase1_samples,
            entries: e.distance_entries,
            peak_bytes: e.distance_entries * BYTES_PER_ENTRY,
            seconds: e.cluster_seconds,
        })?;
    }
    w.flush()?;
    Ok(vec![ckpt, metrics_json, metrics_csv, cost_csv])
}

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    scheme: String,
    ratio: f64,
    split_count: usize,
    map: Option<f64>,
    rank1: Option<f64>,
    /// Pairwise entries of the largest clustering pass.
    entries: u64,
    peak_bytes: u64,
    /// Median wall time of one clustering pass.
    seconds: f64,
    train_seconds: f64,
}

#[derive(Serialize)]
struct BudgetRow {
    ratio: f64,
    split_count: usize,
    peak_bytes: u64,
    mcl_map: Option<f64>,
    naive_map: Option<f64>,
}

pub fn compare(args: &CompareArgs) -> CliResult<()> {
    if args.ratios.is_empty() {
        return Err(CliError::usage("--ratios needs at least one value"));
    }
    let base = resolve_config(&args.training)?;
    let data = load_data(&args.pool, &args.training)?;
    prepare_dir(&args.out, args.force)?;

    let mut runs: Vec<(String, f64, TrainConfig, Regime)> = Vec::new();
    let mut budget_ratios = Vec::new();
    for &ratio in &args.ratios {
        let n = TrainConfig::split_count_for_ratio(ratio)?;
        if n == 1 {
            runs.push(("all".into(), ratio, TrainConfig { split_count: 1, ..base.clone() }, Regime::All));
        } else {
            let cfg = TrainConfig { split_count: n, ..base.clone() };
            runs.push(("mcl".into(), ratio, cfg.clone(), Regime::Mcl));
            runs.push(("naive".into(), ratio, cfg, Regime::NaiveSplit));
        }
        budget_ratios.push((ratio, n));
    }

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (scheme, ratio, cfg, regime) in &runs {
        info!("compare: {scheme} at ratio {ratio}");
        let start = std::time::Instant::now();
        let outcome = train(&data.train, data.eval.as_ref(), cfg, *regime)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let r = &outcome.report;
        let passes: Vec<f64> = r.epochs.iter().filter(|e| e.distance_entries > 0).map(|e| e.cluster_seconds).collect();
        rows.push(CompareRow {
            scheme: scheme.clone(),
            ratio: *ratio,
            split_count: cfg.split_count,
            map: r.final_metrics.as_ref().map(|m| m.map),
            rank1: r.final_metrics.as_ref().map(|m| m.rank(1)),
            entries: r.peak_pass_entries,
            peak_bytes: r.peak_pass_entries * BYTES_PER_ENTRY,
            seconds: median(&passes),
            train_seconds,
        });
        reports.push(outcome.report);
    }

    let compare_csv = args.out.join("compare.csv");
    let mut w = csv::Writer::from_path(&compare_csv)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let budget_csv = args.out.join("budget.csv");
    let mut w = csv::Writer::from_path(&budget_csv)?;
    for &(ratio, n) in &budget_ratios {
        let at = |scheme: &str| rows.iter().find(|r| r.ratio == ratio && r.scheme == scheme);
        // At a unit ratio both schemes are the All run.
        let (mcl, naive) = if n == 1 { (at("all"), at("all")) } else { (at("mcl"), at("naive")) };
        w.serialize(BudgetRow {
            ratio,
            split_count: n,
            peak_bytes: mcl.map_or(0, |r| r.peak_bytes),
            mcl_map: mcl.and_then(|r| r.map),
            naive_map: naive.and_then(|r| r.map),
        })?;
    }
    w.flush()?;

    let compare_json = args.out.join("compare.json");
    fs::write(&compare_json, serde_json::to_string_pretty(&reports)? + "\n")?;

    for row in &rows {
        println!(
            "{:<6} ratio {:<5} mAP {:>7} entries {:>12} clustering {:.3}s",
            row.scheme,
            row.ratio,
            row.map.map_or("-".into(), |m| format!("{m:.4}")),
            row.entries,
            row.seconds
        );
    }
    RunManifest::new("compare", serde_json::json!({ "ratios": args.ratios, "base": base }))
        .seed("train", base.seed)
        .inputs(&data.inputs())?
        .write(&[compare_csv, budget_csv, compare_json], &args.out.join("manifest.json"))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    checkpoint: Option<String>,
    pool: String,
    identities: usize,
    samples: usize,
    metrics: RetrievalMetrics,
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let pool = read_features(&args.pool)?;
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let params = match &args.checkpoint {
        Some(p) => Checkpoint::read(p)?.params()?,
        None => initial_params(&cfg, pool.d_raw()),
    };
    if params.dims().d_raw != pool.d_raw() {
        return Err(CliError::data(format!(
            "checkpoint expects {} input features, pool has {}",
            params.dims().d_raw,
            pool.d_raw()
        )));
    }
    let pool = if args.all_identities { pool } else { holdout(&pool, args.holdout_fraction)?.1.expect("nonzero holdout") };
    let metrics = evaluate_encoder(&params, &pool, cfg.eval_max_rank)?;
    let report = EvalReport {
        checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
        pool: args.pool.display().to_string(),
        identities: distinct_ids(&pool),
        samples: pool.len(),
        metrics,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(out) => {
            check_file_target(out, args.force)?;
            fs::write(out, text)?;
            let mut inputs: Vec<&Path> = vec![&args.pool];
            if let Some(c) = &args.checkpoint {
                inputs.push(c);
            }
            RunManifest::new("eval", serde_json::to_value(&cfg)?)
                .seed("init", cfg.seed)
                .inputs(&inputs)?
                .write(std::slice::from_ref(out), &sidecar(out))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn dump_embeddings(args: &DumpArgs) -> CliResult<()> {
    let pool = read_features(&args.pool)?;
    let params = Checkpoint::read(&args.checkpoint)?.params()?;
    if params.dims().d_raw != pool.d_raw() {
        return Err(CliError::data(format!(
            "checkpoint expects {} input features, pool has {}",
            params.dims().d_raw,
            pool.d_raw()
        )));
    }
    check_file_target(&args.out, args.force)?;
    let emb = params.encode_all(&pool_matrix(&pool))?;
    let samples = pool
        .samples()
        .iter()
        .zip(emb.iter_rows())
        .map(|(s, row)| mcl_core::RawSample {
            features: row.iter().map(|&v| v as f32).collect(),
            identity: s.identity,
            sample_id: s.sample_id,
        })
        .collect();
    let out = Pool::new(samples, emb.cols())?;
    write_features(&out, &args.out)?;
    info!("wrote {} embeddings of dimension {} to {}", out.len(), emb.cols(), args.out.display());
    RunManifest::new("dump-embeddings", serde_json::json!({ "d_emb": emb.cols() }))
        .inputs(&[&args.pool, &args.checkpoint])?
        .write(std::slice::from_ref(&args.out), &sidecar(&args.out))
}

fn read_config(path: &Path) -> CliResult<TrainConfig> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

/// Config file, then MCL_SEED / --seed, then the remaining flags.
fn resolve_config(opts: &TrainingOptions) -> CliResult<TrainConfig> {
    let mut cfg = match &opts.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    if let Some(w) = opts.warmup_epochs {
        cfg.warmup_epochs = w;
    } else if opts.epochs.is_some() && opts.config.is_none() {
        // Keep the default warm-up share when only the epoch count changes.
        cfg.warmup_epochs = (cfg.epochs / 6).min(cfg.epochs.saturating_sub(1));
    }
    let a = &mut cfg.ablation;
    a.fixed_split |= opts.fixed_split;
    a.shared_label_space |= opts.shared_label_space;
    a.no_sc |= opts.no_sc;
    if opts.plain_triplet {
        a.triplet_weighting = TripletWeighting::Plain;
    }
    if opts.no_proto_renorm {
        a.proto_renorm = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Data {
    train: Pool,
    eval: Option<Pool>,
    pool_path: PathBuf,
    eval_path: Option<PathBuf>,
}

impl Data {
    fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![self.pool_path.as_path()];
        v.extend(self.eval_path.as_deref());
        v
    }
}

fn load_data(path: &Path, opts: &TrainingOptions) -> CliResult<Data> {
    let pool = read_features(path)?;
    let (train, eval) = match &opts.eval_pool {
        Some(ep) => {
            let eval = read_features(ep)?;
            if eval.d_raw() != pool.d_raw() {
                return Err(CliError::data(format!(
                    "eval pool has {} features, training pool has {}",
                    eval.d_raw(),
                    pool.d_raw()
                )));
            }
            (pool, Some(eval))
        }
        None => holdout(&pool, opts.holdout_fraction)?,
    };
    Ok(Data { train, eval, pool_path: path.into(), eval_path: opts.eval_pool.clone() })
}

/// Holds out the highest-numbered `round(fraction * ids)` identities.
fn holdout(pool: &Pool, fraction: f64) -> CliResult<(Pool, Option<Pool>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::usage(format!("--holdout-fraction must be in [0, 1), got {fraction}")));
    }
    let ids = pool.num_identities();
    let held = (fraction * ids as f64).round() as usize;
    if held == 0 {
        return Ok((pool.clone(), None));
    }
    if held >= ids {
        return Err(CliError::usage(format!("holding out {held} of {ids} identities leaves nothing to train on")));
    }
    let (train, eval) = pool.split_identities(held);
    Ok((train, Some(eval)))
}

fn distinct_ids(pool: &Pool) -> usize {
    let mut ids = pool.identities();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

fn check_file_target(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn prepare_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let occupied = !dir.is_dir() || fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(CliError::usage(format!("{} is not empty; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
