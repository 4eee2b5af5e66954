use crate::manifest::ManifestWriter;
use crate::plot;
use crate::UsageError;
use anyhow::{anyhow, bail, Context, Result};
use drhg::baselines::{make_label, random_insertion, sweep, LabelMode, LabelerConfig};
use drhg::hypergraph::cluster_destroy;
use drhg::instances::{
    gen_uniform_many, read_bks, read_dataset, read_labels, route_cost, tour_length, write_dataset,
    write_labels, write_solutions, DemandConfig, Instance, Kind, Solution, Tour,
};
use drhg::model::{load_checkpoint, HyperParams, ModelParams, RolloutMode};
use drhg::rng;
use drhg::search::{
    evaluate, make_repair_policy, solve_cvrp_with, solve_tsp_with, EvalSummary, SearchConfig,
    SearchTrace,
};
use drhg::training::{fine_tune, train, TrainConfig, TrainReport};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_kind(s: &str) -> Result<Kind> {
    match s {
        "tsp" => Ok(Kind::Tsp),
        "cvrp" => Ok(Kind::Cvrp),
        other => Err(usage(format!("unknown kind {other:?}; expected tsp or cvrp"))),
    }
}

/// `--workers 0` keeps rayon's default (one thread per core). The pool is
/// process-global, so this is called once per command.
fn set_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

/// Stable per-instance seed so results do not depend on worker scheduling.
fn instance_seed(seed: u64, index: usize) -> u64 {
    let mut r = rng::stream(seed, &[0x1d5e, index as u64]);
    r.gen()
}

// ---------------------------------------------------------------- gen

#[derive(clap::Args, Serialize)]
pub struct GenArgs {
    /// Problem kind: tsp or cvrp
    #[arg(long)]
    pub kind: String,
    /// Node count (customer count for cvrp; the depot is added on top)
    #[arg(long)]
    pub n: usize,
    /// Number of instances
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// Vehicle capacity override; defaults to the benchmark ladder
    #[arg(long)]
    pub capacity: Option<u32>,
}

pub fn cmd_gen(args: GenArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    if kind == Kind::Tsp && args.n < 3 {
        return Err(usage(format!("tsp needs at least 3 nodes, got --n {}", args.n)));
    }
    if kind == Kind::Cvrp && args.n < 1 {
        return Err(usage("cvrp needs at least 1 customer"));
    }
    if args.count == 0 {
        return Err(usage("--count must be positive"));
    }
    if kind == Kind::Tsp && args.capacity.is_some() {
        return Err(usage("--capacity only applies to cvrp"));
    }
    let manifest = ManifestWriter::start("gen", &args, args.seed)?;
    let demand = DemandConfig { capacity: args.capacity, ..DemandConfig::default() };
    let instances = gen_uniform_many(kind, args.n, args.count, args.seed, &demand)?;
    write_dataset(&args.out, &instances)
        .with_context(|| format!("writing {}", args.out.display()))?;
    manifest.finish(&[&args.out])?;
    println!("wrote {} {} instances to {}", instances.len(), args.kind, args.out.display());
    Ok(())
}

// ---------------------------------------------------------------- label

#[derive(clap::Args, Serialize)]
pub struct LabelArgs {
    /// Dataset to label (JSON lines)
    pub dataset: PathBuf,
    /// Labeler: exact (Held-Karp) or local (insertion + local search)
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output label file (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 = one per core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub fn cmd_label(args: LabelArgs) -> Result<()> {
    let mode = match args.mode.as_str() {
        "exact" => LabelMode::ExactDp,
        "local" => LabelMode::LocalSearch,
        other => return Err(usage(format!("unknown label mode {other:?}; expected exact or local"))),
    };
    set_workers(args.workers);
    let manifest = ManifestWriter::start("label", &args, args.seed)?;
    let instances = read_dataset(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    let cfg = LabelerConfig { mode, ..LabelerConfig::default() };
    let labels: Vec<(String, Tour)> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let tour = make_label(inst, &cfg, instance_seed(args.seed, i))
                .with_context(|| format!("labeling {}", inst.name))?;
            Ok((inst.name.clone(), tour))
        })
        .collect::<Result<_>>()?;
    write_labels(&args.out, &labels).with_context(|| format!("writing {}", args.out.display()))?;
    manifest.finish(&[&args.out])?;
    println!("labeled {} instances to {}", labels.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(clap::Args, Serialize)]
pub struct TrainArgs {
    /// Training dataset (JSON lines)
    pub dataset: PathBuf,
    /// Reference tours matching the dataset by name
    #[arg(long)]
    pub labels: PathBuf,
    /// Run directory for checkpoints and metrics
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from this checkpoint instead of a fresh initialization
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    /// Target hyper-graph size range; defaults to [20, 0.8n]
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.97)]
    pub decay: f64,
    /// Also train on the reversed orientation of each label
    #[arg(long)]
    pub augment: bool,
    /// Instances held out from the end of the corpus for validation
    #[arg(long, default_value_t = 64)]
    pub val_count: usize,
    #[arg(long, default_value_t = 50)]
    pub val_iters: usize,
    /// Embedding width
    #[arg(long, default_value_t = 128)]
    pub d_h: usize,
    /// Attention module count
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    #[arg(long, default_value_t = 8)]
    pub r_f: usize,
    #[arg(long, default_value_t = 8)]
    pub r_c: usize,
    /// Feed-forward width; defaults to 4 * d_h
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub logit_clip: f64,
    /// Worker threads; 0 = one per core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

/// Pair every instance with its label, in dataset order.
fn align_labels(instances: &[Instance], path: &Path) -> Result<Vec<Tour>> {
    let mut map = read_labels(path).with_context(|| format!("reading {}", path.display()))?;
    instances
        .iter()
        .map(|inst| {
            map.remove(&inst.name)
                .ok_or_else(|| anyhow!("no label for instance {} in {}", inst.name, path.display()))
        })
        .collect()
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    set_workers(args.workers);
    let manifest = ManifestWriter::start("train", &args, args.seed)?;
    let instances = read_dataset(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    if instances.is_empty() {
        bail!("dataset {} is empty", args.dataset.display());
    }
    let labels = align_labels(&instances, &args.labels)?;
    let n = instances[0].num_customers();
    let hp = HyperParams {
        d_h: args.d_h,
        l: args.layers,
        heads: args.heads,
        r_f: args.r_f,
        r_c: args.r_c,
        d_ff: args.d_ff.unwrap_or(4 * args.d_h),
        input_dim: match instances[0].kind {
            Kind::Tsp => 5,
            Kind::Cvrp => 6,
        },
        logit_clip: args.logit_clip,
    };
    let mut cfg = TrainConfig::benchmark_defaults(n, &args.out);
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    if let Some(k) = args.k_min {
        cfg.k_min = k;
    }
    if let Some(k) = args.k_max {
        cfg.k_max = k;
    }
    cfg.lr0 = args.lr;
    cfg.decay = args.decay;
    cfg.seed = args.seed;
    cfg.augment = args.augment;
    cfg.val_count = args.val_count;
    cfg.val_iters = args.val_iters;
    let report = match &args.ckpt {
        Some(base) => fine_tune(&instances, &labels, base, &hp, &cfg)?,
        None => train(&instances, &labels, &hp, &cfg)?,
    };
    print_report(&report);
    manifest.finish(&[&args.out])?;
    Ok(())
}

fn print_report(report: &TrainReport) {
    for s in &report.stats {
        let val = s
            .val_gap_percent
            .map_or("-".to_string(), |g| format!("{g:.3}%"));
        println!(
            "epoch {:3}  loss {:.4}  kept {:.2}  val {}  lr {:.2e}  {:.1}s",
            s.epoch, s.mean_loss, s.kept_fraction, val, s.lr, s.seconds
        );
    }
    println!("final checkpoint: {}", report.final_checkpoint.display());
    println!("best checkpoint:  {}", report.best_checkpoint.display());
}

// ---------------------------------------------------------------- solve

#[derive(clap::Args, Serialize)]
pub struct SolveArgs {
    /// Dataset to solve (JSON lines)
    pub dataset: PathBuf,
    /// Model checkpoint; required unless --policy oracle
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Search iterations (T)
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Destruction size range; defaults to [20, min(1000, n)] for tsp and
    /// [20, min(200, n)] for cvrp, clamped to the instance
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Rollout mode: greedy or sample
    #[arg(long, default_value = "greedy")]
    pub mode: String,
    /// Repair policy: model or oracle
    #[arg(long, default_value = "model")]
    pub policy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output solution file (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 = one per core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Also write one search-trace CSV per instance into this directory
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_mode(s: &str, seed: u64) -> Result<RolloutMode> {
    match s {
        "greedy" => Ok(RolloutMode::Greedy),
        "sample" => Ok(RolloutMode::Sample(seed)),
        other => Err(usage(format!("unknown rollout mode {other:?}; expected greedy or sample"))),
    }
}

/// Checkpoints encode the feature width, which fixes the problem kind.
fn check_ckpt_kind(params: &ModelParams, kind: Kind) -> Result<()> {
    let expected = match kind {
        Kind::Tsp => 5,
        Kind::Cvrp => 6,
    };
    if params.hp.input_dim != expected {
        bail!(
            "checkpoint input_dim {} does not fit {} instances (need input_dim {})",
            params.hp.input_dim,
            kind.as_str(),
            expected
        );
    }
    Ok(())
}

fn search_config(args_iters: usize, k_min: Option<usize>, k_max: Option<usize>, mode: RolloutMode, inst: &Instance, seed: u64) -> SearchConfig {
    let mut cfg = SearchConfig::default_for(inst, seed);
    cfg.iterations = args_iters;
    cfg.mode = mode;
    if let Some(k) = k_min {
        cfg.k_min = k;
    }
    if let Some(k) = k_max {
        cfg.k_max = k;
    }
    cfg
}

pub fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mode = parse_mode(&args.mode, args.seed)?;
    if args.policy == "model" && args.ckpt.is_none() {
        return Err(usage("--policy model needs --ckpt"));
    }
    set_workers(args.workers);
    let manifest = ManifestWriter::start("solve", &args, args.seed)?;
    let instances = read_dataset(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    let params = match &args.ckpt {
        Some(path) => {
            let p = load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            for inst in &instances {
                check_ckpt_kind(&p, inst.kind)?;
            }
            Some(p)
        }
        None => None,
    };
    let results: Vec<(Solution, SearchTrace)> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> Result<(Solution, SearchTrace)> {
            let cfg = search_config(
                args.iters,
                args.k_min,
                args.k_max,
                mode,
                inst,
                instance_seed(args.seed, i),
            );
            let policy = make_repair_policy(&args.policy, params.clone(), cfg.mode)?;
            let (solution, trace) = match inst.kind {
                Kind::Tsp => {
                    let (tour, trace) = solve_tsp_with(inst, policy.as_ref(), &cfg)?;
                    let objective = tour_length(inst, &tour)?;
                    (
                        Solution {
                            name: inst.name.clone(),
                            order: Some(tour.order),
                            routes: None,
                            objective,
                        },
                        trace,
                    )
                }
                Kind::Cvrp => {
                    let (plan, trace) = solve_cvrp_with(inst, policy.as_ref(), &cfg)?;
                    let objective = route_cost(inst, &plan)?;
                    (
                        Solution {
                            name: inst.name.clone(),
                            order: None,
                            routes: Some(plan.routes),
                            objective,
                        },
                        trace,
                    )
                }
            };
            Ok((solution, trace))
        })
        .collect::<Result<_>>()?;
    let solutions: Vec<Solution> = results.iter().map(|(s, _)| s.clone()).collect();
    write_solutions(&args.out, &solutions)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(dir) = &args.trace {
        std::fs::create_dir_all(dir)?;
        for (solution, trace) in &results {
            let path = dir.join(format!("{}.csv", solution.name));
            let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            trace.write_csv(&mut file)?;
        }
        outputs.push(dir);
    }
    manifest.finish(&outputs)?;
    let mean = solutions.iter().map(|s| s.objective).sum::<f64>() / solutions.len().max(1) as f64;
    println!(
        "solved {} instances, mean objective {:.4}, wrote {}",
        solutions.len(),
        mean,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(clap::Args, Serialize)]
pub struct EvalArgs {
    /// Dataset to evaluate on (JSON lines)
    pub dataset: PathBuf,
    /// Model checkpoint; omit to evaluate the construction baseline
    /// (random insertion for tsp, sweep for cvrp)
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Reference tours (JSON lines); gaps are computed against their length
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Best-known-solution file: JSON lines of {"name", "objective"}
    #[arg(long)]
    pub bks: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Rollout mode: greedy or sample
    #[arg(long, default_value = "greedy")]
    pub mode: String,
    /// Repair policy when --ckpt is given: model or oracle
    #[arg(long, default_value = "model")]
    pub policy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV table
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 = one per core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

fn eval_references(args: &EvalArgs, instances: &[Instance]) -> Result<Vec<Option<f64>>> {
    match (&args.labels, &args.bks) {
        (Some(_), Some(_)) => Err(usage("pass --labels or --bks, not both")),
        (Some(path), None) => {
            let map = read_labels(path).with_context(|| format!("reading {}", path.display()))?;
            instances
                .iter()
                .map(|inst| match map.get(&inst.name) {
                    Some(tour) => Ok(Some(tour_length(inst, tour)?)),
                    None => Ok(None),
                })
                .collect()
        }
        (None, Some(path)) => {
            let map = read_bks(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(instances.iter().map(|inst| map.get(&inst.name).copied()).collect())
        }
        (None, None) => Ok(vec![None; instances.len()]),
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mode = parse_mode(&args.mode, args.seed)?;
    set_workers(args.workers);
    let manifest = ManifestWriter::start("eval", &args, args.seed)?;
    let instances = read_dataset(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    if instances.is_empty() {
        bail!("dataset {} is empty", args.dataset.display());
    }
    let references = eval_references(&args, &instances)?;
    let params = match &args.ckpt {
        Some(path) => {
            let p = load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            for inst in &instances {
                check_ckpt_kind(&p, inst.kind)?;
            }
            Some(p)
        }
        None => None,
    };
    // Solve in parallel first; `evaluate` then only assembles records, and
    // the per-row timings measured here replace its (trivial) ones.
    let solved: Vec<(f64, f64)> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> Result<(f64, f64)> {
            let clock = std::time::Instant::now();
            let seed = instance_seed(args.seed, i);
            let objective = match &params {
                Some(p) => {
                    let cfg = search_config(args.iters, args.k_min, args.k_max, mode, inst, seed);
                    let policy = make_repair_policy(&args.policy, Some(p.clone()), cfg.mode)?;
                    match inst.kind {
                        Kind::Tsp => {
                            let (tour, _) = solve_tsp_with(inst, policy.as_ref(), &cfg)?;
                            tour_length(inst, &tour)?
                        }
                        Kind::Cvrp => {
                            let (plan, _) = solve_cvrp_with(inst, policy.as_ref(), &cfg)?;
                            route_cost(inst, &plan)?
                        }
                    }
                }
                None => match inst.kind {
                    Kind::Tsp => tour_length(inst, &random_insertion(inst, seed)?)?,
                    Kind::Cvrp => route_cost(inst, &sweep(inst)?)?,
                },
            };
            Ok((objective, clock.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;
    let mut next = solved.iter();
    let mut summary: EvalSummary = evaluate(
        &instances,
        |_| Ok(next.next().expect("one solved objective per instance").0),
        &references,
    )?;
    summary.total_millis = 0.0;
    for (record, (_, millis)) in summary.records.iter_mut().zip(&solved) {
        record.millis = *millis;
        summary.total_millis += *millis;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    summary.write_csv(&mut file)?;
    drop(file);
    print!("{}", summary.render());
    manifest.finish(&[&args.out])?;
    Ok(())
}

// ---------------------------------------------------------------- plot

#[derive(clap::Args, Serialize)]
pub struct PlotArgs {
    /// Solution file (JSON lines)
    pub solution: PathBuf,
    /// Matching dataset (JSON lines)
    pub dataset: PathBuf,
    /// Which solution to draw; defaults to the first in the file
    #[arg(long)]
    pub name: Option<String>,
    /// Output SVG
    #[arg(long)]
    pub out: PathBuf,
    /// Instead of the plain drawing, render this many destruction snapshots
    #[arg(long)]
    pub trace: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cluster size for --trace snapshots; defaults to n/4
    #[arg(long)]
    pub k: Option<usize>,
}

pub fn cmd_plot(args: PlotArgs) -> Result<()> {
    let manifest = ManifestWriter::start("plot", &args, args.seed)?;
    let solutions = drhg::instances::read_solutions(&args.solution)
        .with_context(|| format!("reading {}", args.solution.display()))?;
    let instances = read_dataset(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    let solution = match &args.name {
        Some(name) => solutions
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| anyhow!("no solution named {name:?} in {}", args.solution.display()))?,
        None => solutions
            .first()
            .ok_or_else(|| anyhow!("{} is empty", args.solution.display()))?,
    };
    let inst = instances
        .iter()
        .find(|i| i.name == solution.name)
        .ok_or_else(|| {
            anyhow!("solution {:?} has no matching instance in {}", solution.name, args.dataset.display())
        })?;
    let svg = match (inst.kind, args.trace) {
        (Kind::Tsp, trace) => {
            let order = solution
                .order
                .clone()
                .ok_or_else(|| anyhow!("solution {:?} has no tour order", solution.name))?;
            let tour = Tour::new(order);
            tour.validate(inst).with_context(|| format!("solution {:?}", solution.name))?;
            match trace {
                None => plot::render_tour(inst, &tour.order),
                Some(panels) => {
                    if panels == 0 {
                        return Err(usage("--trace needs at least one snapshot"));
                    }
                    let n = inst.n();
                    let k = args.k.unwrap_or((n / 4).max(1));
                    if k >= n {
                        return Err(usage(format!("--k {k} must be below the node count {n}")));
                    }
                    let mut r = rng::stream(args.seed, &[0x907]);
                    let series: Vec<_> = (0..panels)
                        .map(|_| cluster_destroy(inst, &tour, r.gen_range(0..n), k))
                        .collect::<drhg::Result<_>>()?;
                    plot::render_trace(inst, &tour.order, &series)
                }
            }
        }
        (Kind::Cvrp, None) => {
            let routes = solution
                .routes
                .clone()
                .ok_or_else(|| anyhow!("solution {:?} has no routes", solution.name))?;
            let plan = drhg::instances::RoutePlan::new(routes);
            plan.validate(inst).with_context(|| format!("solution {:?}", solution.name))?;
            plot::render_plan(inst, &plan.routes)
        }
        (Kind::Cvrp, Some(_)) => {
            return Err(usage("--trace currently draws tour destructions only (tsp)"));
        }
    };
    std::fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    manifest.finish(&[&args.out])?;
    println!("wrote {}", args.out.display());
    Ok(())
}
