//! Supervised training on labeled tours: size-aligned batch construction,
//! masked cross-entropy over the non-forced decode steps, Adam, per-epoch
//! checkpoints plus a best-validation checkpoint.
//!
//! Labels are tours, so training always runs on the TSP side (input width
//! 5); capacity behavior needs no learned signal beyond what the masking
//! already enforces.

use crate::hypergraph::{
    align_sample_size, destroy_tour_set, reduce, target_sequence, transform_coords, HyperGraph,
    TargetSequence,
};
use crate::instances::{gap, tour_length, Instance, Kind, Tour};
use crate::model::{
    encode, load_checkpoint, save_checkpoint, step_logits, CheckpointDtype, DecodeState,
    HyperParams, ModelParams, ParamLeaves,
};
use crate::numcore::{adam_update, lr_schedule, AdamState, NodeId, Tape, Tensor};
use crate::rng;
use crate::search::{solve_tsp, Acceptance, SearchConfig};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Samples per tape during backprop; bounds peak graph memory while keeping
/// the accumulation order fixed.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub hg: HyperGraph,
    pub target: TargetSequence,
    pub instance_name: String,
    pub center: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Target hyper-graph size range; every kept sample hits the drawn size
    /// exactly.
    pub k_min: usize,
    pub k_max: usize,
    pub lr0: f64,
    pub decay: f64,
    pub seed: u64,
    /// Also emit the reversed-orientation target per destruction.
    pub augment: bool,
    /// Instances held out from the end of the corpus; 0 disables validation.
    pub val_count: usize,
    /// Search iterations per validation instance.
    pub val_iters: usize,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    /// Full-scale defaults for instances of `n` nodes.
    pub fn benchmark_defaults(n: usize, out_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 1024,
            k_min: 20,
            k_max: ((0.8 * n as f64) as usize).max(20),
            lr0: 1e-4,
            decay: 0.97,
            seed: 0,
            augment: false,
            val_count: 64,
            val_iters: 50,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::config(format!(
                "bad target size range [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if !(self.lr0 > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config(format!(
                "bad schedule lr0 {} decay {}",
                self.lr0, self.decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BuiltBatch {
    /// The shared hyper-graph size drawn for this batch.
    pub k: usize,
    /// Instances attempted (before the feasibility filter).
    pub attempted: usize,
    pub samples: Vec<TrainingSample>,
}

/// Draw one target size for the whole batch, then keep each instance whose
/// alignment hits that size exactly. The destruction applied is the aligned
/// mask itself, so every kept sample reduces to m = k.
pub fn build_batch(
    instances: &[Instance],
    labels: &[Tour],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BuiltBatch> {
    if instances.len() != labels.len() {
        return Err(Error::Size(format!(
            "{} instances vs {} labels",
            instances.len(),
            labels.len()
        )));
    }
    let k = rng::stream(seed, &[0xba7c]).gen_range(cfg.k_min..=cfg.k_max);
    let augment = cfg.augment;
    let built: Vec<Vec<TrainingSample>> = instances
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (inst, label))| -> Result<Vec<TrainingSample>> {
            let mut srng = rng::stream(seed, &[0xba7c, i as u64]);
            let center = srng.gen_range(0..inst.n());
            let align = align_sample_size(inst, label, center, k)?;
            if !align.feasible {
                return Ok(Vec::new());
            }
            let destroyed = align
                .mask
                .iter()
                .enumerate()
                .filter_map(|(v, &d)| d.then_some(v))
                .collect();
            let d = destroy_tour_set(inst, label, destroyed);
            let hg = transform_coords(&reduce(inst, &d)?)?;
            debug_assert_eq!(hg.m(), k);
            let mut out = vec![TrainingSample {
                target: target_sequence(label, &hg)?,
                instance_name: inst.name.clone(),
                center,
                k,
                hg: hg.clone(),
            }];
            if augment {
                let reversed = Tour::new(label.order.iter().rev().copied().collect());
                out.push(TrainingSample {
                    target: target_sequence(&reversed, &hg)?,
                    instance_name: inst.name.clone(),
                    center,
                    k,
                    hg,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(BuiltBatch {
        k,
        attempted: instances.len(),
        samples: built.into_iter().flatten().collect(),
    })
}

#[derive(Debug)]
pub struct SampleLoss {
    /// None when every non-initial step is forced.
    pub loss: Option<NodeId>,
    pub scored: usize,
    pub clamped: usize,
    /// Logit nodes of forced steps, recorded only under `audit_forced`;
    /// they sit on the tape but never feed the loss.
    pub forced_logits: Vec<NodeId>,
}

/// Mean negative log-probability of the target decode over non-forced
/// steps. Step 0 is the given start and is never scored; forced steps
/// contribute exactly zero (their subgraphs are not even built unless
/// auditing).
pub fn xent_loss_masked(
    tape: &Tape,
    leaves: &ParamLeaves,
    hg: &HyperGraph,
    target: &TargetSequence,
    audit_forced: bool,
) -> Result<SampleLoss> {
    let m = hg.m();
    if target.rows.len() != m {
        return Err(Error::Consistency(format!(
            "target has {} rows, hyper-graph has {m}",
            target.rows.len()
        )));
    }
    if hg.capacity.is_some() {
        return Err(Error::Unsupported("training targets are tours".into()));
    }
    let h0 = encode(tape, &hg.feature_tensor(), leaves)?;
    let mut state = DecodeState::start(hg, target.rows[0])?;
    let mut sum: Option<NodeId> = None;
    let mut scored = 0;
    let mut clamped = 0;
    let mut forced_logits = Vec::new();
    for i in 1..m {
        let row = target.rows[i];
        if target.forced[i] {
            if state.forced_next != Some(row) {
                return Err(Error::Consistency(format!(
                    "target step {i} marked forced but row {row} is not the pending partner"
                )));
            }
            if audit_forced {
                let candidates = state.candidates();
                forced_logits.push(step_logits(
                    tape,
                    h0,
                    leaves,
                    state.first,
                    state.current,
                    &candidates,
                )?);
            }
            state.advance(hg, row, false)?;
            continue;
        }
        let candidates = state.candidates();
        let j = candidates.iter().position(|&c| c == row).ok_or_else(|| {
            Error::Consistency(format!("target row {row} already visited at step {i}"))
        })?;
        let logits = step_logits(tape, h0, leaves, state.first, state.current, &candidates)?;
        let probs = tape.softmax(logits)?;
        let p = tape.pick(probs, 0, j)?;
        let term = if tape.scalar(p)? <= 1e-12 {
            // unreachable with clipped logits; kept as a guard rail
            clamped += 1;
            tape.scale(tape.ln(tape.leaf(&Tensor::scalar(1e-12))), -1.0)
        } else {
            tape.scale(tape.ln(p), -1.0)
        };
        sum = Some(match sum {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
        scored += 1;
        state.advance(hg, row, false)?;
    }
    let loss = match sum {
        None => None,
        Some(s) => Some(tape.scale(s, 1.0 / scored as f64)),
    };
    Ok(SampleLoss { loss, scored, clamped, forced_logits })
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub kept_fraction: f64,
    pub val_gap_percent: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
    pub clamped: usize,
    pub skipped_batches: usize,
}

#[derive(Debug)]
pub struct TrainReport {
    pub stats: Vec<EpochStats>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub best_epoch: Option<usize>,
    pub params: ModelParams,
}

pub fn train(
    instances: &[Instance],
    labels: &[Tour],
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let params = ModelParams::init(hp, cfg.seed)?;
    train_from(params, instances, labels, cfg)
}

/// Resume from a checkpoint; the learning-rate schedule restarts at lr0.
pub fn fine_tune(
    instances: &[Instance],
    labels: &[Tour],
    base: &Path,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let params = load_checkpoint(base)?;
    if params.hp != *hp {
        return Err(Error::config(format!(
            "checkpoint hyper-parameters {:?} differ from requested {:?}",
            params.hp, hp
        )));
    }
    train_from(params, instances, labels, cfg)
}

fn train_from(
    mut params: ModelParams,
    instances: &[Instance],
    labels: &[Tour],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if instances.is_empty() || instances.len() != labels.len() {
        return Err(Error::Size(format!(
            "corpus has {} instances and {} labels",
            instances.len(),
            labels.len()
        )));
    }
    if let Some(bad) = instances.iter().find(|i| i.kind != Kind::Tsp) {
        return Err(Error::config(format!("labels are tours; {:?} is not a TSP instance", bad.name)));
    }
    if params.hp.input_dim != 5 {
        return Err(Error::config("tour training needs input_dim 5"));
    }
    if cfg.val_count > 0 && instances.len() <= cfg.val_count {
        return Err(Error::config(format!(
            "cannot hold out {} of {} instances for validation",
            cfg.val_count,
            instances.len()
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;

    let train_n = instances.len() - cfg.val_count;
    let (train_insts, val_insts) = instances.split_at(train_n);
    let (train_labels, val_labels) = labels.split_at(train_n);

    let shapes: Vec<Tensor> = params.tensors().iter().map(|t| (*t).clone()).collect();
    let mut adam = AdamState::new(&shapes);
    drop(shapes);

    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "epoch,mean_loss,kept_fraction,val_gap,lr,seconds")?;

    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let best_path = cfg.out_dir.join("best.ckpt");

    for epoch in 0..cfg.epochs {
        let clock = Instant::now();
        let lr = lr_schedule(cfg.lr0, cfg.decay, epoch as u32);
        let mut idx: Vec<usize> = (0..train_n).collect();
        idx.shuffle(&mut rng::stream(cfg.seed, &[0x5f1e, epoch as u64]));
        let mut batch_seeds = rng::stream(cfg.seed, &[0xba7c, epoch as u64]);

        let mut loss_sum = 0.0;
        let mut sample_count = 0usize;
        let mut attempted = 0usize;
        let mut clamped = 0usize;
        let mut skipped = 0usize;

        for (bi, chunk) in idx.chunks(cfg.batch_size).enumerate() {
            let bseed: u64 = batch_seeds.gen();
            let insts: Vec<Instance> = chunk.iter().map(|&i| train_insts[i].clone()).collect();
            let labs: Vec<Tour> = chunk.iter().map(|&i| train_labels[i].clone()).collect();
            let built = build_batch(&insts, &labs, cfg, bseed)?;
            attempted += built.attempted;
            if built.samples.is_empty() {
                skipped += 1;
                log::warn!("epoch {epoch} batch {bi}: no feasible samples at k = {}", built.k);
                continue;
            }
            let n_s = built.samples.len();
            let mut grads: Vec<Tensor> = params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect();
            let mut batch_loss = 0.0;
            for part in built.samples.chunks(GRAD_CHUNK) {
                let tape = Tape::new();
                let leaves = ParamLeaves::new(&tape, &params);
                let mut part_loss: Option<NodeId> = None;
                for sample in part {
                    let sl = xent_loss_masked(&tape, &leaves, &sample.hg, &sample.target, false)?;
                    clamped += sl.clamped;
                    if let Some(l) = sl.loss {
                        batch_loss += tape.scalar(l)?;
                        part_loss = Some(match part_loss {
                            None => l,
                            Some(acc) => tape.add(acc, l)?,
                        });
                    }
                }
                if let Some(pl) = part_loss {
                    tape.backward(pl)?;
                    for (g, id) in grads.iter_mut().zip(leaves.ids()) {
                        let got = tape.grad(id);
                        for (a, b) in g.data.iter_mut().zip(&got.data) {
                            *a += b;
                        }
                    }
                }
            }
            let mean = batch_loss / n_s as f64;
            if !mean.is_finite() {
                let dump = cfg.out_dir.join(format!("diagnostic_e{epoch}_b{bi}.json"));
                dump_batch(&dump, epoch, bi, bseed, &built)?;
                return Err(Error::domain(format!(
                    "non-finite loss {mean} in epoch {epoch} batch {bi}; dumped {}",
                    dump.display()
                )));
            }
            let inv = 1.0 / n_s as f64;
            for g in &mut grads {
                for v in &mut g.data {
                    *v *= inv;
                }
            }
            adam.t += 1;
            for (((p, g), m), v) in params
                .tensors_mut()
                .into_iter()
                .zip(&grads)
                .zip(adam.m.iter_mut())
                .zip(adam.v.iter_mut())
            {
                adam_update(p, g, m, v, adam.t, lr, 0.9, 0.999, 1e-8)?;
            }
            loss_sum += batch_loss;
            sample_count += n_s;
        }

        let mean_loss = loss_sum / sample_count.max(1) as f64;
        let kept_fraction = if attempted == 0 {
            0.0
        } else {
            sample_count as f64 / (attempted * if cfg.augment { 2 } else { 1 }) as f64
        };
        let val_gap_percent = if val_insts.is_empty() {
            None
        } else {
            Some(validation_gap(val_insts, val_labels, &params, cfg)?)
        };

        save_checkpoint(
            &cfg.out_dir.join(format!("epoch_{epoch:03}.ckpt")),
            &params,
            CheckpointDtype::F64,
        )?;
        if let Some(g) = val_gap_percent {
            if g < best_val {
                best_val = g;
                best_epoch = Some(epoch);
                save_checkpoint(&best_path, &params, CheckpointDtype::F64)?;
            }
        }

        let seconds = clock.elapsed().as_secs_f64();
        writeln!(
            metrics,
            "{epoch},{mean_loss:.9},{kept_fraction:.4},{},{lr:.9e},{seconds:.2}",
            val_gap_percent.map_or(String::new(), |g| format!("{g:.4}"))
        )?;
        metrics.flush()?;
        log::info!(
            "epoch {epoch}: loss {mean_loss:.5}, kept {kept_fraction:.2}, val {val_gap_percent:?}, lr {lr:.2e}, {seconds:.1}s"
        );
        stats.push(EpochStats {
            epoch,
            mean_loss,
            kept_fraction,
            val_gap_percent,
            lr,
            seconds,
            clamped,
            skipped_batches: skipped,
        });
    }

    let final_path = cfg.out_dir.join("final.ckpt");
    save_checkpoint(&final_path, &params, CheckpointDtype::F64)?;
    if best_epoch.is_none() {
        save_checkpoint(&best_path, &params, CheckpointDtype::F64)?;
    }
    Ok(TrainReport {
        stats,
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        best_epoch,
        params,
    })
}

/// Mean percent gap of greedy short searches against the label objectives,
/// with a destruction seed held fixed across epochs so the series is
/// comparable.
fn validation_gap(
    insts: &[Instance],
    labels: &[Tour],
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (inst, label) in insts.iter().zip(labels) {
        let n = inst.n();
        let search = SearchConfig {
            iterations: cfg.val_iters,
            k_min: cfg.k_min.min(n),
            k_max: cfg.k_max.min(n),
            mode: crate::model::RolloutMode::Greedy,
            acceptance: Acceptance::GreedyImprove,
            seed: cfg.seed ^ 0x7a11,
        };
        let (tour, _) = solve_tsp(inst, params, &search)?;
        let reference = tour_length(inst, label)?;
        total += gap(tour_length(inst, &tour)?, reference)? * 100.0;
    }
    Ok(total / insts.len() as f64)
}

fn dump_batch(path: &Path, epoch: usize, batch: usize, seed: u64, built: &BuiltBatch) -> Result<()> {
    let meta: Vec<serde_json::Value> = built
        .samples
        .iter()
        .map(|s| {
            serde_json::json!({
                "instance": s.instance_name,
                "center": s.center,
                "k": s.k,
                "rows": s.target.rows,
                "forced": s.target.forced,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "epoch": epoch,
        "batch": batch,
        "seed": seed,
        "k": built.k,
        "attempted": built.attempted,
        "samples": meta,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
