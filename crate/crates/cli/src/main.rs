//! `grasp`: synthesize grasps for one hand, transfer their contact maps to
//! another hand and check the results for stability.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use grasp_core::contact::contact_map;
use grasp_core::dataset::{read_jsonl, write_jsonl, EvalRecord, Header, Jsonl, TransferRecord};
use grasp_core::hand::hand_surface;
use grasp_core::sampler::{synthesize_grasps, GraspRecord};
use grasp_core::stability::{diversity, evaluate_grasp};
use grasp_core::transfer::optimize_to_map;
use grasp_core::{load_hand_model, load_object, HandModel, Metric, ObjectModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::PipelineConfig;

/// Bad invocation, bad config or missing assets; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "grasp", version, about = "Contact-map grasp synthesis and cross-hand transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON pipeline config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Validate inputs and print the plan without writing anything
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample force-closure grasps and write them with their contact maps
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hand: Option<PathBuf>,
        /// Object mesh; repeat for several objects
        #[arg(long = "object")]
        objects: Vec<PathBuf>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "out/dataset.jsonl")]
        out: PathBuf,
    },
    /// Fit a target hand to every contact map of a dataset
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target_hand: Option<PathBuf>,
        /// Source hand; read from the dataset header when omitted
        #[arg(long)]
        hand: Option<PathBuf>,
        #[arg(long = "object")]
        objects: Vec<PathBuf>,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<Metric>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        max_records: Option<usize>,
        #[arg(long, default_value = "out/transfer.jsonl")]
        out: PathBuf,
    },
    /// Stability test of transferred grasps with aggregate statistics
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        target_hand: Option<PathBuf>,
        #[arg(long = "object")]
        objects: Vec<PathBuf>,
        #[arg(long)]
        friction: Option<f64>,
        /// Per-grasp reports
        #[arg(long, default_value = "out/eval.jsonl")]
        out: PathBuf,
        /// Aggregates; defaults to the report path with a .csv extension
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "aligned" => Ok(Metric::Aligned),
        "euclidean" => Ok(Metric::Euclidean),
        _ => Err(format!("unknown metric {s:?}, expected aligned or euclidean")),
    }
}

/// Seconds spent per transferred record. Kept beside the results so the
/// results file itself stays reproducible byte for byte.
#[derive(Debug, Default, Serialize, Deserialize)]
struct Timings {
    seconds: Vec<f64>,
}

fn timings_path(results: &Path) -> PathBuf {
    let mut name = results.as_os_str().to_owned();
    name.push(".timings.json");
    PathBuf::from(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|e| e.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, hand, objects, batch, steps, out } => {
            let mut cfg = setup(&common)?;
            cfg.hand = hand.or(cfg.hand);
            if !objects.is_empty() {
                cfg.objects = objects;
            }
            cfg.synth.batch = batch.unwrap_or(cfg.synth.batch);
            cfg.synth.steps = steps.unwrap_or(cfg.synth.steps);
            cfg.sample_count.get_or_insert(config::DEFAULT_SAMPLE_COUNT);
            synth(cfg, common.dry_run, &out)
        }
        Command::Transfer { common, dataset, target_hand, hand, objects, metric, restarts, steps, max_records, out } => {
            let mut cfg = setup(&common)?;
            cfg.target_hand = target_hand.or(cfg.target_hand);
            cfg.hand = hand.or(cfg.hand);
            if !objects.is_empty() {
                cfg.objects = objects;
            }
            cfg.transfer.metric = metric.unwrap_or(cfg.transfer.metric);
            cfg.transfer.restarts = restarts.unwrap_or(cfg.transfer.restarts);
            cfg.transfer.steps = steps.unwrap_or(cfg.transfer.steps);
            cfg.max_records = max_records.or(cfg.max_records);
            transfer(cfg, common.dry_run, &dataset, &out)
        }
        Command::Eval { common, results, target_hand, objects, friction, out, csv } => {
            let mut cfg = setup(&common)?;
            cfg.target_hand = target_hand.or(cfg.target_hand);
            if !objects.is_empty() {
                cfg.objects = objects;
            }
            cfg.eval.friction_mu = friction.unwrap_or(cfg.eval.friction_mu);
            let csv = csv.unwrap_or_else(|| out.with_extension("csv"));
            eval(cfg, common.dry_run, &results, &out, &csv)
        }
    }
}

fn setup(common: &Common) -> Result<PipelineConfig> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            bail!(UsageError("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("cannot start worker pool")?;
    }
    let mut cfg = PipelineConfig::load_or_default(common.config.as_deref())?;
    cfg.apply_seed(common.seed);
    Ok(cfg)
}

fn require_asset(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(UsageError(format!("asset not found: {}", path.display())));
    }
    Ok(())
}

fn load_hand(path: Option<&Path>, role: &str) -> Result<HandModel> {
    let Some(path) = path else {
        bail!(UsageError(format!("no {role} given (flag or config)")));
    };
    require_asset(path)?;
    load_hand_model(path).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// Objects keyed by name, in config order.
fn load_objects(cfg: &PipelineConfig) -> Result<Vec<ObjectModel>> {
    if cfg.objects.is_empty() {
        bail!(UsageError("no objects given (--object or config)".into()));
    }
    cfg.objects
        .iter()
        .map(|path| {
            require_asset(path)?;
            let obj = load_object(path, cfg.sample_count())
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            obj.ensure_closed().map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            Ok(obj)
        })
        .collect()
}

fn find_object<'a>(objects: &'a [ObjectModel], name: &str) -> Result<&'a ObjectModel> {
    objects.iter().find(|o| o.name == name).ok_or_else(|| {
        let known: Vec<&str> = objects.iter().map(|o| o.name.as_str()).collect();
        UsageError(format!("record references object {name:?}, loaded objects are {known:?}")).into()
    })
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Jsonl<T>> {
    if !path.is_file() {
        bail!(UsageError(format!("input not found: {}", path.display())));
    }
    let parsed = read_jsonl(path)?;
    if parsed.parse_errors > 0 {
        eprintln!("warning: skipped {} unparseable line(s) in {}", parsed.parse_errors, path.display());
        for (line, msg) in parsed.errors.iter().take(5) {
            eprintln!("  line {line}: {msg}");
        }
    }
    Ok(parsed)
}

fn synth(cfg: PipelineConfig, dry_run: bool, out: &Path) -> Result<()> {
    let hand = load_hand(cfg.hand.as_deref(), "hand")?;
    let objects = load_objects(&cfg)?;
    cfg.synth.validate().map_err(|e| UsageError(e.to_string()))?;
    if dry_run {
        println!(
            "dry run: {} chains x {} steps with {} on {} object(s); nothing written",
            cfg.synth.batch,
            cfg.synth.steps,
            hand.name,
            objects.len()
        );
        return Ok(());
    }
    let mut records: Vec<GraspRecord> = Vec::new();
    for obj in &objects {
        let start = Instant::now();
        let (found, summary) = synthesize_grasps(&hand, obj, &cfg.synth)?;
        let dfc: Vec<f64> = found.iter().map(|r| r.energy.dfc_norm).collect();
        let pen: Vec<f64> = found.iter().map(|r| r.energy.e_pen).collect();
        println!(
            "{} / {}: {} of {} chains valid (rejected: dfc {}, pen {}, prior {}, distance {}); \
             acceptance {:.3}; mean |Gc| {:.4}, max E_p {:.2e}; {:.1}s",
            hand.name,
            obj.name,
            summary.valid,
            summary.chains,
            summary.rejected_dfc,
            summary.rejected_pen,
            summary.rejected_prior,
            summary.rejected_distance,
            summary.acceptance_rate,
            mean(&dfc),
            pen.iter().copied().fold(0.0, f64::max),
            start.elapsed().as_secs_f64()
        );
        records.extend(found);
    }
    let header = Header::new("synth", cfg.seed, cfg.echo());
    write_jsonl(out, &header, &records)?;
    println!("wrote {} record(s) to {}", records.len(), out.display());
    Ok(())
}

fn transfer(mut cfg: PipelineConfig, dry_run: bool, dataset: &Path, out: &Path) -> Result<()> {
    let parsed: Jsonl<GraspRecord> = read_records(dataset)?;
    if let Some(header) = &parsed.header {
        cfg.inherit(&header.config)?;
    }
    let target = load_hand(cfg.target_hand.as_deref(), "target hand")?;
    let limit = cfg.max_records.unwrap_or(usize::MAX);
    let records: Vec<&GraspRecord> = parsed.records.iter().take(limit).collect();
    // Maps in another metric are recomputed from the source grasp.
    let recompute = records.iter().any(|r| r.contact_map.metric != cfg.transfer.metric);
    let source = match (recompute, cfg.hand.as_deref()) {
        (false, None) => None,
        (_, path) => Some(load_hand(path, "source hand")?),
    };
    let objects = load_objects(&cfg)?;
    cfg.transfer.validate().map_err(|e| UsageError(e.to_string()))?;
    for rec in &records {
        find_object(&objects, &rec.object)?;
        if let Some(src) = &source {
            if src.name != rec.hand {
                bail!(UsageError(format!("record was made with hand {:?}, source hand is {:?}", rec.hand, src.name)));
            }
        }
    }
    if dry_run {
        println!(
            "dry run: {} record(s) -> {} with {} restarts x {} steps ({:?} maps); nothing written",
            records.len(),
            target.name,
            cfg.transfer.restarts,
            cfg.transfer.steps,
            cfg.transfer.metric
        );
        return Ok(());
    }
    if records.is_empty() {
        eprintln!("warning: {} holds no records; writing empty results", dataset.display());
    }

    let mut results = Vec::with_capacity(records.len());
    let mut timings = Timings::default();
    for (index, rec) in records.iter().enumerate() {
        let obj = find_object(&objects, &rec.object)?;
        let goal = match &source {
            Some(src) if rec.contact_map.metric != cfg.transfer.metric => {
                let surface = hand_surface(src, &rec.pose)?;
                contact_map(obj, &surface, cfg.transfer.metric, &rec.contact_map.params())?
            }
            _ => rec.contact_map.clone(),
        };
        let start = Instant::now();
        let result = optimize_to_map(&target, obj, &goal, &cfg.transfer)
            .with_context(|| format!("transfer of record {index}"))?;
        let seconds = start.elapsed().as_secs_f64();
        println!(
            "record {index} ({}): best E {:.4} (E_c {:.4}, E_p {:.2e}) from restart {} in {seconds:.1}s",
            rec.object,
            result.best_energy.total,
            result.best_energy.e_contact,
            result.best_energy.e_pen,
            result.best_restart
        );
        timings.seconds.push(seconds);
        results.push(TransferRecord {
            source_index: index,
            source_hand: rec.hand.clone(),
            hand: target.name.clone(),
            object: rec.object.clone(),
            metric: cfg.transfer.metric,
            result,
        });
    }
    let header = Header::new("transfer", cfg.seed, cfg.echo());
    write_jsonl(out, &header, &results)?;
    let sidecar = timings_path(out);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&timings)?)
        .with_context(|| format!("cannot write {}", sidecar.display()))?;
    println!("wrote {} result(s) to {}", results.len(), out.display());
    Ok(())
}

fn eval(mut cfg: PipelineConfig, dry_run: bool, results: &Path, out: &Path, csv: &Path) -> Result<()> {
    let parsed: Jsonl<TransferRecord> = read_records(results)?;
    if let Some(header) = &parsed.header {
        cfg.inherit(&header.config)?;
    }
    if parsed.records.is_empty() {
        eprintln!("warning: {} holds no results", results.display());
    }
    let hand = load_hand(cfg.target_hand.as_deref(), "target hand")?;
    let objects = load_objects(&cfg)?;
    for rec in &parsed.records {
        find_object(&objects, &rec.object)?;
        if rec.hand != hand.name {
            bail!(UsageError(format!("result is for hand {:?}, loaded hand is {:?}", rec.hand, hand.name)));
        }
    }
    if dry_run {
        println!("dry run: {} result(s) to evaluate; nothing written", parsed.records.len());
        return Ok(());
    }
    let timings: Option<Timings> = std::fs::read_to_string(timings_path(results))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());

    let evaluated: Vec<EvalRecord> = parsed
        .records
        .par_iter()
        .map(|rec| {
            let obj = find_object(&objects, &rec.object)?;
            let (pose, report) = evaluate_grasp(&hand, obj, &rec.result.best_pose, &cfg.eval)?;
            Ok(EvalRecord { source_index: rec.source_index, hand: rec.hand.clone(), object: rec.object.clone(), pose, report })
        })
        .collect::<Result<_>>()?;

    // (hand, object) -> indices into `evaluated`
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, rec) in evaluated.iter().enumerate() {
        groups.entry((rec.hand.clone(), rec.object.clone())).or_default().push(i);
    }
    let mut table = String::from("hand,object,success_rate,diversity_rad,mean_seconds\n");
    for ((hand_name, object), indices) in &groups {
        let poses: Vec<_> = indices.iter().map(|&i| evaluated[i].pose.clone()).collect();
        let reports: Vec<_> = indices.iter().map(|&i| evaluated[i].report.clone()).collect();
        let passes = reports.iter().filter(|r| r.passed).count();
        let success_rate = passes as f64 / reports.len() as f64;
        let stats = diversity(&poses, &reports);
        let seconds: Vec<f64> = match &timings {
            Some(t) => indices.iter().filter_map(|&i| t.seconds.get(i).copied()).collect(),
            None => Vec::new(),
        };
        let mean_seconds = mean(&seconds);
        println!(
            "{hand_name} / {object}: {passes}/{} passed ({success_rate:.3}), diversity {:.4} rad over {} grasps, \
             {mean_seconds:.2}s per transfer",
            reports.len(),
            stats.mean_std,
            stats.sample_count
        );
        table.push_str(&format!("{hand_name},{object},{success_rate},{},{mean_seconds}\n", stats.mean_std));
    }
    let header = Header::new("eval", cfg.seed, cfg.echo());
    write_jsonl(out, &header, &evaluated)?;
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(csv, table).with_context(|| format!("cannot write {}", csv.display()))?;
    println!("wrote {} report(s) to {} and aggregates to {}", evaluated.len(), out.display(), csv.display());
    Ok(())
}

/// Mean of `values`, NaN when empty.
fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
