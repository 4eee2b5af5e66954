//! The iterative destroy-and-repair loop: start from a construction
//! heuristic, then repeatedly destroy a node cluster, reduce to a
//! hyper-graph, repair it, and restore. The best restored solution is
//! tracked across all iterations regardless of acceptance.

use crate::baselines::{random_insertion, sweep};
use crate::hypergraph::{
    cluster_destroy, cluster_destroy_plan, reduce, restore, transform_coords, HyperGraph,
    ReducedOrder,
};
use crate::instances::{gap, route_cost, tour_length, Instance, Kind, RoutePlan, Tour};
use crate::model::{rollout, ModelParams, RolloutMode, StartRule};
use crate::rng;
use crate::{Error, Result};
use rand::Rng;
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    /// Replace the current solution iff the repair is not worse.
    GreedyImprove,
    Always,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub iterations: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub mode: RolloutMode,
    pub acceptance: Acceptance,
    pub seed: u64,
}

impl SearchConfig {
    /// Full-scale defaults: T = 1000, k in [20, min(1000, n)] for tours and
    /// [20, min(200, n)] for route plans, clamped for small instances.
    pub fn default_for(inst: &Instance, seed: u64) -> Self {
        let n = inst.num_customers();
        let cap = match inst.kind {
            Kind::Tsp => 1000,
            Kind::Cvrp => 200,
        };
        let k_max = n.min(cap);
        SearchConfig {
            iterations: 1000,
            k_min: 20.min(k_max),
            k_max,
            mode: RolloutMode::Greedy,
            acceptance: Acceptance::GreedyImprove,
            seed,
        }
    }

    pub fn validate_for(&self, inst: &Instance) -> Result<()> {
        let n = inst.num_customers();
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::config(format!(
                "bad destruction range [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if self.k_max > n {
            return Err(Error::config(format!(
                "k_max {} exceeds the {} destroyable nodes",
                self.k_max, n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub k: usize,
    pub center: usize,
    pub objective_after: f64,
    pub accepted: bool,
    pub best_so_far: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub init_objective: f64,
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    pub fn best_is_monotone(&self) -> bool {
        let mut prev = self.init_objective;
        for r in &self.records {
            if r.best_so_far > prev {
                return false;
            }
            prev = r.best_so_far;
        }
        true
    }

    /// Everything except wall time, for reproducibility comparisons.
    pub fn decisions(&self) -> Vec<(usize, usize, usize, u64, bool, u64)> {
        self.records
            .iter()
            .map(|r| {
                (r.iteration, r.k, r.center, r.objective_after.to_bits(), r.accepted, r.best_so_far.to_bits())
            })
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,k,center,objective_after,accepted,best_so_far,millis")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{:.9},{},{:.9},{:.3}",
                r.iteration, r.k, r.center, r.objective_after, r.accepted, r.best_so_far, r.millis
            )?;
        }
        Ok(())
    }
}

/// A repair strategy for reduced hyper-graphs. `seed` varies per iteration;
/// deterministic policies may ignore it.
pub trait RepairPolicy {
    fn name(&self) -> &str;
    fn repair(&self, hg: &HyperGraph, seed: u64) -> Result<ReducedOrder>;
}

pub struct ModelRepair {
    pub params: ModelParams,
    pub mode: RolloutMode,
}

impl RepairPolicy for ModelRepair {
    fn name(&self) -> &str {
        "model"
    }

    fn repair(&self, hg: &HyperGraph, seed: u64) -> Result<ReducedOrder> {
        let mode = match self.mode {
            RolloutMode::Greedy => RolloutMode::Greedy,
            RolloutMode::Sample(base) => RolloutMode::Sample(base ^ seed),
        };
        rollout(hg, &self.params, mode, StartRule::Random(seed))
    }
}

/// Exact repair: Held-Karp over the reduced units (hyper-edges with two
/// orientations, isolated nodes with one). Connection costs use the
/// transformed endpoint coordinates; segment interiors are fixed, so the
/// argmin matches the original metric.
pub struct OracleRepair {
    pub max_m: usize,
}

impl Default for OracleRepair {
    fn default() -> Self {
        OracleRepair { max_m: 12 }
    }
}

struct Unit {
    /// Entry row per orientation; exit is the mirrored index.
    ends: [usize; 2],
    orientations: usize,
}

impl RepairPolicy for OracleRepair {
    fn name(&self) -> &str {
        "oracle"
    }

    fn repair(&self, hg: &HyperGraph, _seed: u64) -> Result<ReducedOrder> {
        if hg.capacity.is_some() {
            return Err(Error::Unsupported("oracle repair handles tours only".into()));
        }
        let m = hg.m();
        if m > self.max_m {
            return Err(Error::Size(format!("oracle repair capped at m = {}, got {m}", self.max_m)));
        }
        if m < 2 {
            return Err(Error::Size(format!("repair needs m >= 2, got {m}")));
        }

        let mut units: Vec<Unit> = Vec::new();
        for &v in &hg.isolated {
            let r = hg.row_of(v).expect("isolated nodes have rows");
            units.push(Unit { ends: [r, r], orientations: 1 });
        }
        for e in &hg.hyper_edges {
            let ra = hg.row_of(e.a).expect("endpoints have rows");
            let rb = hg.row_of(e.b).expect("endpoints have rows");
            units.push(Unit { ends: [ra, rb], orientations: 2 });
        }
        let u = units.len();
        if u == 1 {
            // a single hyper-edge: either orientation restores the same tour
            let unit = &units[0];
            return Ok(ReducedOrder {
                rows: vec![unit.ends[0], unit.ends[1]],
                returns: vec![false; 2],
            });
        }

        let coord = |row: usize| (hg.features[row].xa, hg.features[row].ya);
        let dist = |from_row: usize, to_row: usize| {
            let (x1, y1) = coord(from_row);
            let (x2, y2) = coord(to_row);
            ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt()
        };
        // entry(i, o) = ends[o], exit(i, o) = ends[1 - o] for two-sided units
        let entry = |i: usize, o: usize| units[i].ends[o];
        let exit = |i: usize, o: usize| units[i].ends[if units[i].orientations == 2 { 1 - o } else { 0 }];

        let full: usize = 1 << u;
        let mut best_cost = f64::INFINITY;
        let mut best_rows: Vec<usize> = Vec::new();
        for o0 in 0..units[0].orientations {
            // dp[mask][i][oi]: cheapest path over `mask` ending at unit i
            // with orientation oi, starting from unit 0 fixed at o0
            let mut dp = vec![vec![[f64::INFINITY; 2]; u]; full];
            let mut parent = vec![vec![[(usize::MAX, 0usize); 2]; u]; full];
            dp[1][0][o0] = 0.0;
            for mask in 1..full {
                if mask & 1 == 0 {
                    continue;
                }
                for i in 0..u {
                    if mask & (1 << i) == 0 {
                        continue;
                    }
                    for oi in 0..units[i].orientations {
                        let c = dp[mask][i][oi];
                        if !c.is_finite() {
                            continue;
                        }
                        for j in 0..u {
                            if mask & (1 << j) != 0 {
                                continue;
                            }
                            for oj in 0..units[j].orientations {
                                let nc = c + dist(exit(i, oi), entry(j, oj));
                                let slot = &mut dp[mask | (1 << j)][j][oj];
                                if nc < *slot {
                                    *slot = nc;
                                    parent[mask | (1 << j)][j][oj] = (i, oi);
                                }
                            }
                        }
                    }
                }
            }
            for i in 1..u {
                for oi in 0..units[i].orientations {
                    let c = dp[full - 1][i][oi] + dist(exit(i, oi), entry(0, o0));
                    if c < best_cost {
                        best_cost = c;
                        // walk parents back to unit 0
                        let mut chain = vec![(i, oi)];
                        let mut mask = full - 1;
                        let (mut ci, mut co) = (i, oi);
                        while ci != 0 {
                            let (pi, po) = parent[mask][ci][co];
                            mask &= !(1 << ci);
                            chain.push((pi, po));
                            ci = pi;
                            co = po;
                        }
                        chain.reverse();
                        best_rows.clear();
                        for (ui, o) in chain {
                            if units[ui].orientations == 1 {
                                best_rows.push(units[ui].ends[0]);
                            } else {
                                best_rows.push(entry(ui, o));
                                best_rows.push(exit(ui, o));
                            }
                        }
                    }
                }
            }
        }
        if best_rows.is_empty() {
            return Err(Error::Consistency("oracle DP found no tour".into()));
        }
        let len = best_rows.len();
        Ok(ReducedOrder { rows: best_rows, returns: vec![false; len] })
    }
}

pub fn repair_policy_names() -> &'static [&'static str] {
    &["model", "oracle"]
}

pub fn make_repair_policy(
    name: &str,
    params: Option<ModelParams>,
    mode: RolloutMode,
) -> Result<Box<dyn RepairPolicy>> {
    match name {
        "model" => {
            let params = params
                .ok_or_else(|| Error::config("policy 'model' needs checkpoint parameters"))?;
            Ok(Box::new(ModelRepair { params, mode }))
        }
        "oracle" => Ok(Box::new(OracleRepair::default())),
        other => Err(Error::config(format!(
            "unknown repair policy {other:?}; known: {:?}",
            repair_policy_names()
        ))),
    }
}

pub fn solve_tsp(
    inst: &Instance,
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Result<(Tour, SearchTrace)> {
    let policy = ModelRepair { params: params.clone(), mode: cfg.mode };
    solve_tsp_with(inst, &policy, cfg)
}

pub fn solve_tsp_with(
    inst: &Instance,
    policy: &dyn RepairPolicy,
    cfg: &SearchConfig,
) -> Result<(Tour, SearchTrace)> {
    if inst.kind != Kind::Tsp {
        return Err(Error::Kind { expected: "tsp", got: "cvrp" });
    }
    cfg.validate_for(inst)?;
    let n = inst.n();
    let mut current = random_insertion(inst, cfg.seed)?;
    let mut cur_obj = tour_length(inst, &current)?;
    let mut best = current.clone();
    let mut best_obj = cur_obj;
    let mut trace = SearchTrace { init_objective: cur_obj, records: Vec::with_capacity(cfg.iterations) };
    let mut loop_rng = rng::stream(cfg.seed, &[0x10c4]);
    for t in 0..cfg.iterations {
        let clock = Instant::now();
        let k = loop_rng.gen_range(cfg.k_min..=cfg.k_max);
        let center = loop_rng.gen_range(0..n);
        let iter_seed: u64 = loop_rng.gen();
        let d = cluster_destroy(inst, &current, center, k)?;
        let hg = transform_coords(&reduce(inst, &d)?)?;
        let order = policy.repair(&hg, iter_seed)?;
        let repaired = restore(inst, &hg, &order)?.into_tour()?;
        let obj = tour_length(inst, &repaired)?;
        let accepted = match cfg.acceptance {
            Acceptance::GreedyImprove => obj <= cur_obj,
            Acceptance::Always => true,
        };
        if obj < best_obj {
            best_obj = obj;
            best = repaired.clone();
        }
        if accepted {
            current = repaired;
            cur_obj = obj;
        }
        trace.records.push(TraceRecord {
            iteration: t,
            k,
            center,
            objective_after: obj,
            accepted,
            best_so_far: best_obj,
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((best, trace))
}

pub fn solve_cvrp(
    inst: &Instance,
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Result<(RoutePlan, SearchTrace)> {
    let policy = ModelRepair { params: params.clone(), mode: cfg.mode };
    solve_cvrp_with(inst, &policy, cfg)
}

pub fn solve_cvrp_with(
    inst: &Instance,
    policy: &dyn RepairPolicy,
    cfg: &SearchConfig,
) -> Result<(RoutePlan, SearchTrace)> {
    if inst.kind != Kind::Cvrp {
        return Err(Error::Kind { expected: "cvrp", got: "tsp" });
    }
    cfg.validate_for(inst)?;
    let n = inst.n();
    let mut current = sweep(inst)?;
    let mut cur_obj = route_cost(inst, &current)?;
    let mut best = current.clone();
    let mut best_obj = cur_obj;
    let mut trace = SearchTrace { init_objective: cur_obj, records: Vec::with_capacity(cfg.iterations) };
    let mut loop_rng = rng::stream(cfg.seed, &[0x10c4]);
    for t in 0..cfg.iterations {
        let clock = Instant::now();
        let k = loop_rng.gen_range(cfg.k_min..=cfg.k_max);
        let center = loop_rng.gen_range(1..n);
        let iter_seed: u64 = loop_rng.gen();
        let d = cluster_destroy_plan(inst, &current, center, k)?;
        let hg = transform_coords(&reduce(inst, &d)?)?;
        let order = policy.repair(&hg, iter_seed)?;
        let repaired = restore(inst, &hg, &order)?.into_plan()?;
        let obj = route_cost(inst, &repaired)?;
        let accepted = match cfg.acceptance {
            Acceptance::GreedyImprove => obj <= cur_obj,
            Acceptance::Always => true,
        };
        if obj < best_obj {
            best_obj = obj;
            best = repaired.clone();
        }
        if accepted {
            current = repaired;
            cur_obj = obj;
        }
        trace.records.push(TraceRecord {
            iteration: t,
            k,
            center,
            objective_after: obj,
            accepted,
            best_so_far: best_obj,
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((best, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub name: String,
    pub objective: f64,
    pub reference: Option<f64>,
    /// None when the reference is missing.
    pub gap_percent: Option<f64>,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub records: Vec<EvalRecord>,
    pub mean_objective: f64,
    /// Mean over rows that have references; None when none do.
    pub mean_gap_percent: Option<f64>,
    pub total_millis: f64,
}

/// Run `solver` over every instance in order, comparing against per-instance
/// references where available.
pub fn evaluate<F>(
    instances: &[Instance],
    mut solver: F,
    references: &[Option<f64>],
) -> Result<EvalSummary>
where
    F: FnMut(&Instance) -> Result<f64>,
{
    if instances.is_empty() {
        return Err(Error::Size("evaluate needs at least one instance".into()));
    }
    if references.len() != instances.len() {
        return Err(Error::Size(format!(
            "{} references for {} instances",
            references.len(),
            instances.len()
        )));
    }
    let mut records = Vec::with_capacity(instances.len());
    let mut total_millis = 0.0;
    for (inst, reference) in instances.iter().zip(references) {
        let clock = Instant::now();
        let objective = solver(inst)?;
        let millis = clock.elapsed().as_secs_f64() * 1e3;
        total_millis += millis;
        let gap_percent = match reference {
            Some(r) => Some(gap(objective, *r)? * 100.0),
            None => None,
        };
        records.push(EvalRecord {
            name: inst.name.clone(),
            objective,
            reference: *reference,
            gap_percent,
            millis,
        });
    }
    let mean_objective = records.iter().map(|r| r.objective).sum::<f64>() / records.len() as f64;
    let gaps: Vec<f64> = records.iter().filter_map(|r| r.gap_percent).collect();
    let mean_gap_percent = if gaps.is_empty() {
        None
    } else {
        Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
    };
    Ok(EvalSummary { records, mean_objective, mean_gap_percent, total_millis })
}

impl EvalSummary {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "name,objective,reference,gap_percent,millis")?;
        for r in &self.records {
            let reference = r.reference.map_or(String::new(), |v| format!("{v:.9}"));
            let gap = r.gap_percent.map_or("no-reference".to_string(), |v| format!("{v:.4}"));
            writeln!(w, "{},{:.9},{},{},{:.3}", r.name, r.objective, reference, gap, r.millis)?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .records
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once(4))
            .max()
            .unwrap();
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>12}  {:>9}  {:>9}\n",
            "name", "objective", "reference", "gap%", "ms"
        ));
        for r in &self.records {
            let reference = r.reference.map_or("-".to_string(), |v| format!("{v:.4}"));
            let gap = r.gap_percent.map_or("-".to_string(), |v| format!("{v:.3}"));
            out.push_str(&format!(
                "{:<name_w$}  {:>12.4}  {:>12}  {:>9}  {:>9.1}\n",
                r.name, r.objective, reference, gap, r.millis
            ));
        }
        out.push_str(&format!(
            "mean objective {:.4}",
            self.mean_objective
        ));
        if let Some(g) = self.mean_gap_percent {
            out.push_str(&format!(", mean gap {g:.3}%"));
        }
        out.push_str(&format!(", total {:.1} ms\n", self.total_millis));
        out
    }
}
