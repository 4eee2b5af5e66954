//! The neural repair policy: a single linear-projection encoder,
//! representative-node construction from the first/current node, L stacked
//! linear attention modules (aggregate into representatives, broadcast
//! back), and a clipped-logit next-node head.
//!
//! Attention always runs representatives against the full row set, never
//! rows against rows, which keeps per-step cost linear in the hyper-graph
//! size. Visited rows are removed from the stack input, so the candidate
//! width shrinks as decoding proceeds.

use crate::hypergraph::{HyperGraph, ReducedOrder};
use crate::numcore::{NodeId, Tape, Tensor};
use crate::rng;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const RMS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub d_h: usize,
    pub l: usize,
    pub heads: usize,
    pub r_f: usize,
    pub r_c: usize,
    pub d_ff: usize,
    pub input_dim: usize,
    pub logit_clip: f64,
}

impl HyperParams {
    pub fn default_tsp() -> Self {
        HyperParams { d_h: 128, l: 6, heads: 8, r_f: 8, r_c: 8, d_ff: 512, input_dim: 5, logit_clip: 10.0 }
    }

    pub fn default_cvrp() -> Self {
        HyperParams { input_dim: 6, ..Self::default_tsp() }
    }

    pub fn r(&self) -> usize {
        self.r_f + self.r_c
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.heads == 0 || self.d_h % self.heads != 0 {
            return Err(Error::config(format!(
                "d_h {} must be a positive multiple of heads {}",
                self.d_h, self.heads
            )));
        }
        if self.r() == 0 {
            return Err(Error::config("need at least one representative channel"));
        }
        if self.l == 0 || self.d_ff == 0 {
            return Err(Error::config("l and d_ff must be positive"));
        }
        if self.input_dim != 5 && self.input_dim != 6 {
            return Err(Error::config(format!("input_dim {} not in {{5, 6}}", self.input_dim)));
        }
        if !(self.logit_clip > 0.0) {
            return Err(Error::config("logit_clip must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_out: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// One linear attention module: aggregating attention + feed-forward, then
/// broadcasting attention + feed-forward, each pair wrapped in residual
/// adds with rms-norm gains g1..g4.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleParams {
    pub agg: AttnParams,
    pub brd: AttnParams,
    pub ff1: FfParams,
    pub ff2: FfParams,
    pub g1: Tensor,
    pub g2: Tensor,
    pub g3: Tensor,
    pub g4: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hp: HyperParams,
    pub w_embed: Tensor,
    pub b_embed: Tensor,
    pub w_f: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub modules: Vec<ModuleParams>,
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor { rows, cols, data }
}

fn ones(cols: usize) -> Tensor {
    Tensor { rows: 1, cols, data: vec![1.0; cols] }
}

impl ModelParams {
    /// Fresh parameters: Xavier-uniform weights, zero biases, unit gains.
    pub fn init(hp: &HyperParams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let mut rng = rng::stream(seed, &[0x1417]);
        let d = hp.d_h;
        let attn = |rng: &mut rand_chacha::ChaCha8Rng| AttnParams {
            w_q: xavier(rng, d, d),
            w_k: xavier(rng, d, d),
            w_v: xavier(rng, d, d),
            w_out: xavier(rng, d, d),
        };
        let ff = |rng: &mut rand_chacha::ChaCha8Rng| FfParams {
            w1: xavier(rng, d, hp.d_ff),
            b1: Tensor::zeros(1, hp.d_ff),
            w2: xavier(rng, hp.d_ff, d),
            b2: Tensor::zeros(1, d),
        };
        let modules = (0..hp.l)
            .map(|_| ModuleParams {
                agg: attn(&mut rng),
                brd: attn(&mut rng),
                ff1: ff(&mut rng),
                ff2: ff(&mut rng),
                g1: ones(d),
                g2: ones(d),
                g3: ones(d),
                g4: ones(d),
            })
            .collect();
        Ok(ModelParams {
            hp: *hp,
            w_embed: xavier(&mut rng, hp.input_dim, d),
            b_embed: Tensor::zeros(1, d),
            w_f: xavier(&mut rng, d, d * hp.r_f),
            w_c: xavier(&mut rng, d, d * hp.r_c),
            w_o: xavier(&mut rng, d, 1),
            modules,
        })
    }

    /// Stable tensor order shared by `tensors`, `tensors_mut`, checkpoints
    /// and the optimizer state.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec![
            "embed.w".to_string(),
            "embed.b".to_string(),
            "rep.w_f".to_string(),
            "rep.w_c".to_string(),
            "head.w_o".to_string(),
        ];
        for i in 0..self.modules.len() {
            for part in ["agg", "brd"] {
                for w in ["w_q", "w_k", "w_v", "w_out"] {
                    out.push(format!("mod{i}.{part}.{w}"));
                }
            }
            for part in ["ff1", "ff2"] {
                for w in ["w1", "b1", "w2", "b2"] {
                    out.push(format!("mod{i}.{part}.{w}"));
                }
            }
            for g in ["g1", "g2", "g3", "g4"] {
                out.push(format!("mod{i}.{g}"));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.w_embed, &self.b_embed, &self.w_f, &self.w_c, &self.w_o];
        for m in &self.modules {
            for a in [&m.agg, &m.brd] {
                out.extend([&a.w_q, &a.w_k, &a.w_v, &a.w_out]);
            }
            for f in [&m.ff1, &m.ff2] {
                out.extend([&f.w1, &f.b1, &f.w2, &f.b2]);
            }
            out.extend([&m.g1, &m.g2, &m.g3, &m.g4]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> =
            vec![&mut self.w_embed, &mut self.b_embed, &mut self.w_f, &mut self.w_c, &mut self.w_o];
        for m in &mut self.modules {
            for a in [&mut m.agg, &mut m.brd] {
                out.extend([&mut a.w_q, &mut a.w_k, &mut a.w_v, &mut a.w_out]);
            }
            for f in [&mut m.ff1, &mut m.ff2] {
                out.extend([&mut f.w1, &mut f.b1, &mut f.w2, &mut f.b2]);
            }
            out.extend([&mut m.g1, &mut m.g2, &mut m.g3, &mut m.g4]);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub struct AttnLeaves {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub w_out: NodeId,
}

pub struct FfLeaves {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

pub struct ModuleLeaves {
    pub agg: AttnLeaves,
    pub brd: AttnLeaves,
    pub ff1: FfLeaves,
    pub ff2: FfLeaves,
    pub g1: NodeId,
    pub g2: NodeId,
    pub g3: NodeId,
    pub g4: NodeId,
}

/// All parameters leafed onto one tape exactly once, so gradients land on
/// one node per tensor. Forward passes run against these ids, and training
/// harvests gradients through `ids()` (same order as `ModelParams::tensors`).
pub struct ParamLeaves {
    pub hp: HyperParams,
    pub w_embed: NodeId,
    pub b_embed: NodeId,
    pub w_f: NodeId,
    pub w_c: NodeId,
    pub w_o: NodeId,
    pub modules: Vec<ModuleLeaves>,
}

impl ParamLeaves {
    pub fn new(tape: &Tape, params: &ModelParams) -> Self {
        let attn = |a: &AttnParams| AttnLeaves {
            w_q: tape.leaf(&a.w_q),
            w_k: tape.leaf(&a.w_k),
            w_v: tape.leaf(&a.w_v),
            w_out: tape.leaf(&a.w_out),
        };
        let ff = |f: &FfParams| FfLeaves {
            w1: tape.leaf(&f.w1),
            b1: tape.leaf(&f.b1),
            w2: tape.leaf(&f.w2),
            b2: tape.leaf(&f.b2),
        };
        ParamLeaves {
            hp: params.hp,
            w_embed: tape.leaf(&params.w_embed),
            b_embed: tape.leaf(&params.b_embed),
            w_f: tape.leaf(&params.w_f),
            w_c: tape.leaf(&params.w_c),
            w_o: tape.leaf(&params.w_o),
            modules: params
                .modules
                .iter()
                .map(|m| ModuleLeaves {
                    agg: attn(&m.agg),
                    brd: attn(&m.brd),
                    ff1: ff(&m.ff1),
                    ff2: ff(&m.ff2),
                    g1: tape.leaf(&m.g1),
                    g2: tape.leaf(&m.g2),
                    g3: tape.leaf(&m.g3),
                    g4: tape.leaf(&m.g4),
                })
                .collect(),
        }
    }

    /// Leaf ids in `ModelParams::tensors` order.
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.w_embed, self.b_embed, self.w_f, self.w_c, self.w_o];
        for m in &self.modules {
            for a in [&m.agg, &m.brd] {
                out.extend([a.w_q, a.w_k, a.w_v, a.w_out]);
            }
            for f in [&m.ff1, &m.ff2] {
                out.extend([f.w1, f.b1, f.w2, f.b2]);
            }
            out.extend([m.g1, m.g2, m.g3, m.g4]);
        }
        out
    }
}

/// H(0) = X * W_embed + b: one embedding row per feature row, no mixing.
pub fn encode(tape: &Tape, features: &Tensor, leaves: &ParamLeaves) -> Result<NodeId> {
    if features.cols != leaves.hp.input_dim {
        return Err(Error::shape(format!(
            "feature width {} vs input_dim {}",
            features.cols, leaves.hp.input_dim
        )));
    }
    let x = tape.leaf(features);
    tape.add_bias(tape.matmul(x, leaves.w_embed)?, leaves.b_embed)
}

/// Virtual representative rows: h_f * W_f reshaped to r_f rows stacked on
/// h_c * W_c reshaped to r_c rows. Row j of each block is the j-th d_h-wide
/// column chunk of the projected row vector.
pub fn make_representatives(
    tape: &Tape,
    h_f: NodeId,
    h_c: NodeId,
    leaves: &ParamLeaves,
) -> Result<NodeId> {
    let hp = &leaves.hp;
    for (name, id) in [("h_f", h_f), ("h_c", h_c)] {
        let (r, c) = tape.shape(id);
        if (r, c) != (1, hp.d_h) {
            return Err(Error::shape(format!("{name} is {r}x{c}, want 1x{}", hp.d_h)));
        }
    }
    let rep_f = tape.reshape(tape.matmul(h_f, leaves.w_f)?, hp.r_f, hp.d_h)?;
    let rep_c = tape.reshape(tape.matmul(h_c, leaves.w_c)?, hp.r_c, hp.d_h)?;
    tape.concat_rows(rep_f, rep_c)
}

fn attn_block(
    tape: &Tape,
    queries: NodeId,
    keys_values: NodeId,
    p: &AttnLeaves,
    heads: usize,
) -> Result<NodeId> {
    let q = tape.matmul(queries, p.w_q)?;
    let k = tape.matmul(keys_values, p.w_k)?;
    let v = tape.matmul(keys_values, p.w_v)?;
    tape.matmul(tape.attention(q, k, v, heads)?, p.w_out)
}

fn ff_block(tape: &Tape, x: NodeId, p: &FfLeaves) -> Result<NodeId> {
    let h = tape.relu(tape.add_bias(tape.matmul(x, p.w1)?, p.b1)?);
    tape.add_bias(tape.matmul(h, p.w2)?, p.b2)
}

/// One module: representatives aggregate from concat(H~, H_a), then the
/// aggregate broadcasts back to every row; both halves return refreshed.
pub fn linear_attention_module(
    tape: &Tape,
    h_tilde: NodeId,
    h_a: NodeId,
    leaves: &ParamLeaves,
    l: usize,
) -> Result<(NodeId, NodeId)> {
    let hp = &leaves.hp;
    let m = leaves
        .modules
        .get(l)
        .ok_or_else(|| Error::config(format!("module index {l} of {}", leaves.modules.len())))?;
    let (r, _) = tape.shape(h_tilde);
    let h_all = tape.concat_rows(h_tilde, h_a)?;
    let (all_rows, _) = tape.shape(h_all);

    let agg = attn_block(tape, h_tilde, h_all, &m.agg, hp.heads)?;
    let agg1 = tape.rms_norm(tape.add(h_tilde, agg)?, m.g1, RMS_EPS)?;
    let agg2 = tape.rms_norm(tape.add(agg1, ff_block(tape, agg1, &m.ff1)?)?, m.g2, RMS_EPS)?;

    let brd = attn_block(tape, h_all, agg2, &m.brd, hp.heads)?;
    let brd1 = tape.rms_norm(tape.add(h_all, brd)?, m.g3, RMS_EPS)?;
    let brd2 = tape.rms_norm(tape.add(brd1, ff_block(tape, brd1, &m.ff2)?)?, m.g4, RMS_EPS)?;

    Ok((tape.slice_rows(brd2, 0, r)?, tape.slice_rows(brd2, r, all_rows)?))
}

/// Clipped unnormalized scores for `candidates`, a 1 x |candidates| row:
/// a_i = C * tanh(h_i W_o / C). The caller applies the mask and softmax.
pub fn step_logits(
    tape: &Tape,
    h0: NodeId,
    leaves: &ParamLeaves,
    first: usize,
    current: usize,
    candidates: &[usize],
) -> Result<NodeId> {
    let hp = &leaves.hp;
    let h_f = tape.gather_rows(h0, &[first])?;
    let h_c = tape.gather_rows(h0, &[current])?;
    let mut h_tilde = make_representatives(tape, h_f, h_c, leaves)?;
    let mut h_a = tape.gather_rows(h0, candidates)?;
    for l in 0..hp.l {
        (h_tilde, h_a) = linear_attention_module(tape, h_tilde, h_a, leaves, l)?;
    }
    let z = tape.transpose(tape.matmul(h_a, leaves.w_o)?);
    let c = hp.logit_clip;
    Ok(tape.scale(tape.tanh(tape.scale(z, 1.0 / c)), c))
}

/// Decoder bookkeeping between steps.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub first: usize,
    pub current: usize,
    pub visited: Vec<bool>,
    /// Set while sitting on the entry endpoint of a consumed hyper-edge.
    pub forced_next: Option<usize>,
    /// CVRP only.
    pub remaining: Option<u64>,
}

impl DecodeState {
    pub fn start(hg: &HyperGraph, start_row: usize) -> Result<Self> {
        let m = hg.m();
        if start_row >= m {
            return Err(Error::Index { index: start_row, len: m });
        }
        let remaining = match hg.capacity {
            None => None,
            Some(cap) => {
                let d = hg.row_demand[start_row];
                if d > cap {
                    return Err(Error::Infeasible(format!(
                        "row demand {d} exceeds capacity {cap}"
                    )));
                }
                Some(cap - d)
            }
        };
        let mut visited = vec![false; m];
        visited[start_row] = true;
        Ok(DecodeState {
            first: start_row,
            current: start_row,
            visited,
            forced_next: hg.partner[start_row],
            remaining,
        })
    }

    /// Records visiting `row`; `returned` resets capacity first (CVRP depot
    /// return). Forced partners consume no demand: the edge's total was
    /// taken at its entry.
    pub fn advance(&mut self, hg: &HyperGraph, row: usize, returned: bool) -> Result<()> {
        if self.visited[row] {
            return Err(Error::domain(format!("row {row} already visited")));
        }
        let was_forced = self.forced_next == Some(row);
        if self.forced_next.is_some() && !was_forced {
            return Err(Error::domain(format!(
                "row {row} chosen while partner {} is forced",
                self.forced_next.unwrap()
            )));
        }
        if returned && was_forced {
            return Err(Error::domain("depot return inside a hyper-edge"));
        }
        if let Some(rem) = self.remaining.as_mut() {
            if returned {
                *rem = hg.capacity.expect("cvrp state implies capacity");
            }
            if !was_forced {
                let d = hg.row_demand[row];
                if d > *rem {
                    return Err(Error::Infeasible(format!(
                        "row demand {d} exceeds remaining {rem}"
                    )));
                }
                *rem -= d;
            }
        } else if returned {
            return Err(Error::domain("depot return on a tour"));
        }
        self.visited[row] = true;
        self.current = row;
        self.forced_next = if was_forced { None } else { hg.partner[row] };
        Ok(())
    }

    pub fn candidates(&self) -> Vec<usize> {
        (0..self.visited.len()).filter(|&r| !self.visited[r]).collect()
    }

    fn mask_for(&self, hg: &HyperGraph, candidates: &[usize]) -> Vec<bool> {
        match (self.forced_next, self.remaining) {
            (Some(f), _) => candidates.iter().map(|&c| c == f).collect(),
            (None, Some(rem)) => candidates.iter().map(|&c| hg.row_demand[c] <= rem).collect(),
            (None, None) => vec![true; candidates.len()],
        }
    }
}

/// Tape node of the next-step distribution plus the candidate row per
/// probability column.
pub struct StepOutput {
    pub probs: NodeId,
    pub candidates: Vec<usize>,
}

pub fn decode_step_node(
    tape: &Tape,
    h0: NodeId,
    hg: &HyperGraph,
    leaves: &ParamLeaves,
    state: &DecodeState,
) -> Result<StepOutput> {
    let candidates = state.candidates();
    if candidates.is_empty() {
        return Err(Error::domain("decode on a finished state"));
    }
    let mask = state.mask_for(hg, &candidates);
    if !mask.iter().any(|&b| b) {
        return Err(Error::Infeasible("no candidate fits remaining capacity".into()));
    }
    let logits = step_logits(tape, h0, leaves, state.first, state.current, &candidates)?;
    let probs = tape.masked_softmax(logits, &mask)?;
    Ok(StepOutput { probs, candidates })
}

/// Convenience: probabilities expanded over all m rows (zero at visited and
/// masked rows).
pub fn decode_step(hg: &HyperGraph, params: &ModelParams, state: &DecodeState) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let leaves = ParamLeaves::new(&tape, params);
    let h0 = encode(&tape, &hg.feature_tensor(), &leaves)?;
    let out = decode_step_node(&tape, h0, hg, &leaves, state)?;
    let p = tape.value(out.probs);
    let mut full = vec![0.0; hg.m()];
    for (j, &row) in out.candidates.iter().enumerate() {
        full[row] = p.data[j];
    }
    Ok(full)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RolloutMode {
    Greedy,
    Sample(u64),
}

#[derive(Debug, Clone, Copy)]
pub enum StartRule {
    /// Start from this row (training uses the label's start).
    Fixed(usize),
    /// Uniform hyper-edge entry endpoint, or a uniform isolated row when no
    /// segments survive.
    Random(u64),
}

fn pick_start(hg: &HyperGraph, rule: StartRule) -> Result<usize> {
    match rule {
        StartRule::Fixed(r) => {
            if r >= hg.m() {
                return Err(Error::Index { index: r, len: hg.m() });
            }
            Ok(r)
        }
        StartRule::Random(seed) => {
            let mut rng = rng::stream(seed, &[0x57a7]);
            if hg.hyper_edges.is_empty() {
                let i = rng.gen_range(0..hg.isolated.len());
                Ok(hg.row_of(hg.isolated[i]).expect("isolated nodes are rows"))
            } else {
                let e = rng.gen_range(0..hg.hyper_edges.len());
                let edge = &hg.hyper_edges[e];
                let node = if rng.gen_bool(0.5) { edge.a } else { edge.b };
                Ok(hg.row_of(node).expect("endpoints are rows"))
            }
        }
    }
}

fn choose(probs: &[f64], mode: RolloutMode, sampler: &mut Option<rand_chacha::ChaCha8Rng>) -> usize {
    match mode {
        RolloutMode::Greedy => {
            let mut best = 0;
            for (j, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = j;
                }
            }
            best
        }
        RolloutMode::Sample(_) => {
            let u: f64 = sampler.as_mut().expect("sampler present").gen_range(0.0..1.0);
            let mut acc = 0.0;
            for (j, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            probs.len() - 1
        }
    }
}

/// Decode every row of the hyper-graph into a visit order. Forced steps and
/// single-candidate steps never invoke the network.
pub fn rollout(
    hg: &HyperGraph,
    params: &ModelParams,
    mode: RolloutMode,
    start_rule: StartRule,
) -> Result<ReducedOrder> {
    let m = hg.m();
    if m < 2 {
        return Err(Error::Size(format!("rollout needs m >= 2, got {m}")));
    }
    if hg.input_dim() != params.hp.input_dim {
        return Err(Error::shape(format!(
            "hyper-graph input_dim {} vs model {}",
            hg.input_dim(),
            params.hp.input_dim
        )));
    }
    let start = pick_start(hg, start_rule)?;
    let mut state = DecodeState::start(hg, start)?;
    let mut rows = vec![start];
    let mut returns = vec![false];
    let mut sampler = match mode {
        RolloutMode::Sample(seed) => Some(rng::stream(seed, &[0x5a3b])),
        RolloutMode::Greedy => None,
    };
    // encoder output shared by all steps; built only if a real choice occurs
    let mut stack: Option<(Tape, ParamLeaves, NodeId)> = None;
    for _ in 1..m {
        if let Some(p) = state.forced_next {
            state.advance(hg, p, false)?;
            rows.push(p);
            returns.push(false);
            continue;
        }
        let candidates = state.candidates();
        let mut mask = state.mask_for(hg, &candidates);
        let mut returned = false;
        if !mask.iter().any(|&b| b) {
            // depot return: full capacity must open at least one row
            let cap = hg.capacity.ok_or_else(|| {
                Error::Infeasible("tour decode ran out of candidates".into())
            })?;
            mask = candidates.iter().map(|&c| hg.row_demand[c] <= cap).collect();
            if !mask.iter().any(|&b| b) {
                return Err(Error::Infeasible(
                    "a row demand exceeds vehicle capacity".into(),
                ));
            }
            returned = true;
        }
        let live: Vec<usize> = (0..candidates.len()).filter(|&j| mask[j]).collect();
        let chosen = if live.len() == 1 {
            candidates[live[0]]
        } else {
            let (tape, leaves, h0) = match &mut stack {
                Some(triple) => (&triple.0, &triple.1, triple.2),
                None => {
                    let tape = Tape::new();
                    let leaves = ParamLeaves::new(&tape, params);
                    let h0 = encode(&tape, &hg.feature_tensor(), &leaves)?;
                    stack = Some((tape, leaves, h0));
                    let triple = stack.as_mut().expect("just set");
                    (&triple.0, &triple.1, triple.2)
                }
            };
            let logits = step_logits(tape, h0, leaves, state.first, state.current, &candidates)?;
            let probs = tape.masked_softmax(logits, &mask)?;
            let p = tape.value(probs);
            candidates[choose(&p.data, mode, &mut sampler)]
        };
        state.advance(hg, chosen, returned)?;
        rows.push(chosen);
        returns.push(returned);
    }
    Ok(ReducedOrder { rows, returns })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointDtype {
    F64,
    F32,
}

const CKPT_MAGIC: &[u8; 4] = b"DRHG";
const CKPT_VERSION: u32 = 1;

/// Binary checkpoint: magic, version, dtype tag, hyper-parameter record,
/// then each named tensor as (name, rank, dims, little-endian values).
pub fn save_checkpoint(path: &Path, params: &ModelParams, dtype: CheckpointDtype) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&[match dtype {
        CheckpointDtype::F64 => 8u8,
        CheckpointDtype::F32 => 4u8,
    }])?;
    let hp = &params.hp;
    for v in [hp.d_h, hp.l, hp.heads, hp.r_f, hp.r_c, hp.d_ff, hp.input_dim] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&hp.logit_clip.to_le_bytes())?;
    let names = params.names();
    let tensors = params.tensors();
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for (name, t) in names.iter().zip(tensors) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(t.rows as u32).to_le_bytes())?;
        w.write_all(&(t.cols as u32).to_le_bytes())?;
        for &v in &t.data {
            match dtype {
                CheckpointDtype::F64 => w.write_all(&v.to_le_bytes())?,
                CheckpointDtype::F32 => w.write_all(&(v as f32).to_le_bytes())?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Parse { line: 0, msg: "bad checkpoint magic".into() });
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(Error::Parse { line: 0, msg: format!("unknown checkpoint version {version}") });
    }
    let mut dtype_tag = [0u8; 1];
    r.read_exact(&mut dtype_tag)?;
    let dtype = match dtype_tag[0] {
        8 => CheckpointDtype::F64,
        4 => CheckpointDtype::F32,
        other => {
            return Err(Error::Parse { line: 0, msg: format!("unknown dtype tag {other}") })
        }
    };
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = read_u32(&mut r)? as usize;
    }
    let mut clip = [0u8; 8];
    r.read_exact(&mut clip)?;
    let hp = HyperParams {
        d_h: dims[0],
        l: dims[1],
        heads: dims[2],
        r_f: dims[3],
        r_c: dims[4],
        d_ff: dims[5],
        input_dim: dims[6],
        logit_clip: f64::from_le_bytes(clip),
    };
    let count = read_u32(&mut r)? as usize;
    let mut params = ModelParams::init(&hp, 0)?;
    let names = params.names();
    if count != names.len() {
        return Err(Error::Consistency(format!(
            "checkpoint has {count} tensors, model wants {}",
            names.len()
        )));
    }
    let mut loaded: std::collections::HashMap<String, Tensor> = std::collections::HashMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Parse { line: 0, msg: "tensor name not utf-8".into() })?;
        let rank = read_u32(&mut r)?;
        if rank != 2 {
            return Err(Error::Parse { line: 0, msg: format!("tensor rank {rank}") });
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        match dtype {
            CheckpointDtype::F64 => {
                let mut buf = [0u8; 8];
                for v in &mut data {
                    r.read_exact(&mut buf)?;
                    *v = f64::from_le_bytes(buf);
                }
            }
            CheckpointDtype::F32 => {
                let mut buf = [0u8; 4];
                for v in &mut data {
                    r.read_exact(&mut buf)?;
                    *v = f32::from_le_bytes(buf) as f64;
                }
            }
        }
        loaded.insert(name, Tensor { rows, cols, data });
    }
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let t = loaded.remove(name).ok_or_else(|| {
            Error::Consistency(format!("checkpoint missing tensor {name}"))
        })?;
        if (t.rows, t.cols) != (slot.rows, slot.cols) {
            return Err(Error::Consistency(format!(
                "tensor {name} is {}x{}, model wants {}x{}",
                t.rows, t.cols, slot.rows, slot.cols
            )));
        }
        *slot = t;
    }
    Ok(params)
}

impl HyperGraph {
    /// Feature rows as a tensor ready for `encode`.
    pub fn feature_tensor(&self) -> Tensor {
        Tensor {
            rows: self.m(),
            cols: self.input_dim(),
            data: self.feature_matrix(),
        }
    }
}
