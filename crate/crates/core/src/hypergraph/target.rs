//! Supervision extraction and solution restoration.
//!
//! `target_sequence` reads the row-visit order off a label tour; `restore`
//! is its inverse, expanding a row order back to a full solution. Together
//! they close the destroy/repair round trip.

use super::{norm_edge, HyperGraph};
use crate::instances::{validate_permutation, Instance, Kind, RoutePlan, Tour};
use crate::{Error, Result};
use std::collections::BTreeSet;

/// Expert visit order over hyper-graph rows. `forced[i]` marks steps where
/// the previous row was a hyper-edge entry and `rows[i]` is its partner,
/// the only legal continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequence {
    pub rows: Vec<usize>,
    pub forced: Vec<bool>,
}

impl TargetSequence {
    pub fn to_reduced_order(&self) -> ReducedOrder {
        ReducedOrder { rows: self.rows.clone(), returns: vec![false; self.rows.len()] }
    }
}

/// A decoded row order plus, for CVRP, the depot returns chosen during
/// decoding: `returns[i]` means the vehicle returns to the depot right
/// before visiting `rows[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOrder {
    pub rows: Vec<usize>,
    pub returns: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum Restored {
    Tour(Tour),
    Plan(RoutePlan),
}

impl Restored {
    pub fn objective(&self, inst: &Instance) -> Result<f64> {
        match self {
            Restored::Tour(t) => crate::instances::tour_length(inst, t),
            Restored::Plan(p) => crate::instances::route_cost(inst, p),
        }
    }

    pub fn into_tour(self) -> Result<Tour> {
        match self {
            Restored::Tour(t) => Ok(t),
            Restored::Plan(_) => Err(Error::Kind { expected: "tour", got: "plan" }),
        }
    }

    pub fn into_plan(self) -> Result<RoutePlan> {
        match self {
            Restored::Plan(p) => Ok(p),
            Restored::Tour(_) => Err(Error::Kind { expected: "plan", got: "tour" }),
        }
    }
}

fn inconsistent(msg: impl Into<String>) -> Error {
    Error::Consistency(msg.into())
}

/// Walk the label tour in its stored orientation from the first node whose
/// predecessor edge was destroyed; emit hyper-graph rows in visit order,
/// skipping hyper-edge interiors.
pub fn target_sequence(tour: &Tour, hg: &HyperGraph) -> Result<TargetSequence> {
    if hg.kind != Kind::Tsp {
        return Err(Error::Kind { expected: "tsp", got: "cvrp" });
    }
    let n = tour.order.len();
    validate_permutation(&tour.order, n)?;
    let mut row_at: Vec<Option<usize>> = vec![None; n];
    for (row, &v) in hg.origin.iter().enumerate() {
        if v >= n {
            return Err(inconsistent(format!("hyper-graph node {v} outside tour of {n}")));
        }
        row_at[v] = Some(row);
    }
    let mut interior_of: Vec<Option<usize>> = vec![None; n];
    let mut intact: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (ei, e) in hg.hyper_edges.iter().enumerate() {
        let mut prev = e.a;
        for &v in e.interior.iter().chain(std::iter::once(&e.b)) {
            if v >= n {
                return Err(inconsistent(format!("hyper-graph node {v} outside tour of {n}")));
            }
            intact.insert(norm_edge(prev, v));
            prev = v;
        }
        for &v in &e.interior {
            if row_at[v].is_some() || interior_of[v].is_some() {
                return Err(inconsistent(format!("node {v} is both member and interior")));
            }
            interior_of[v] = Some(ei);
        }
    }
    for v in 0..n {
        if row_at[v].is_none() && interior_of[v].is_none() {
            return Err(inconsistent(format!("node {v} missing from the hyper-graph")));
        }
    }
    let t = &tour.order;
    let start = (0..n)
        .find(|&p| !intact.contains(&norm_edge(t[(p + n - 1) % n], t[p])))
        .ok_or_else(|| inconsistent("tour has no destroyed boundary"))?;

    let m = hg.m();
    let mut rows = Vec::with_capacity(m);
    let mut forced = Vec::with_capacity(m);
    // row of the hyper-edge entry we are currently traversing, if any
    let mut pending: Option<usize> = None;
    let mut prev_node: Option<usize> = None;
    for s in 0..n {
        let v = t[(start + s) % n];
        // inside a segment every traversed edge must be a stored intact
        // edge; this pins the exact interior chain, not just its node set
        if pending.is_some() {
            let p = prev_node.expect("pending implies a previous node");
            if !intact.contains(&norm_edge(p, v)) {
                return Err(inconsistent(format!(
                    "tour edge ({p}, {v}) crosses a destroyed connection inside a hyper-edge"
                )));
            }
        }
        prev_node = Some(v);
        match row_at[v] {
            Some(r) => match pending.take() {
                Some(entry) => {
                    if hg.partner[entry] != Some(r) {
                        return Err(inconsistent(format!(
                            "row {r} follows entry {entry} but is not its partner"
                        )));
                    }
                    rows.push(r);
                    forced.push(true);
                }
                None => {
                    rows.push(r);
                    forced.push(false);
                    if hg.edge_of[r].is_some() {
                        pending = Some(r);
                    }
                }
            },
            None => {
                let Some(entry) = pending else {
                    return Err(inconsistent(format!(
                        "interior node {v} visited outside its hyper-edge"
                    )));
                };
                if interior_of[v] != hg.edge_of[entry] {
                    return Err(inconsistent(format!(
                        "interior node {v} belongs to a different hyper-edge"
                    )));
                }
            }
        }
    }
    if pending.is_some() {
        return Err(inconsistent("hyper-edge left unterminated at walk end"));
    }
    if rows.len() != m {
        return Err(inconsistent(format!("emitted {} rows, expected {m}", rows.len())));
    }
    Ok(TargetSequence { rows, forced })
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::InfeasibleOrder(msg.into())
}

/// Expand a row order back to a full solution. Each hyper-edge is replayed
/// in traversal direction: entry endpoint, interiors, exit endpoint.
pub fn restore(inst: &Instance, hg: &HyperGraph, order: &ReducedOrder) -> Result<Restored> {
    let m = hg.m();
    validate_permutation(&order.rows, m)?;
    if order.returns.len() != order.rows.len() {
        return Err(Error::validation(format!(
            "returns mask length {} != rows length {}",
            order.returns.len(),
            order.rows.len()
        )));
    }
    if inst.kind != hg.kind {
        return Err(Error::Kind { expected: inst.kind.as_str(), got: hg.kind.as_str() });
    }
    if hg.kind == Kind::Tsp && order.returns.iter().any(|&b| b) {
        return Err(Error::validation("depot returns are meaningless for a tour"));
    }
    if !order.returns.is_empty() && order.returns[0] {
        return Err(infeasible("depot return before the first visit"));
    }

    let mut expanded: Vec<usize> = Vec::new();
    // positions in `expanded` where a new route begins
    let mut breaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < order.rows.len() {
        let r = order.rows[i];
        if order.returns[i] && i > 0 {
            breaks.push(expanded.len());
        }
        match hg.edge_of[r] {
            None => {
                expanded.push(hg.origin[r]);
                i += 1;
            }
            Some(ei) => {
                let partner = hg.partner[r].expect("endpoint rows have partners");
                if i + 1 >= order.rows.len() || order.rows[i + 1] != partner {
                    return Err(infeasible(format!(
                        "hyper-edge endpoints {r} and {partner} are not adjacent"
                    )));
                }
                if order.returns[i + 1] {
                    return Err(infeasible("depot return inside a hyper-edge"));
                }
                let e = &hg.hyper_edges[ei];
                if hg.origin[r] == e.a {
                    expanded.push(e.a);
                    expanded.extend(e.interior.iter().copied());
                    expanded.push(e.b);
                } else {
                    expanded.push(e.b);
                    expanded.extend(e.interior.iter().rev().copied());
                    expanded.push(e.a);
                }
                i += 2;
            }
        }
    }

    match hg.kind {
        Kind::Tsp => {
            let tour = Tour::new(expanded);
            tour.validate(inst)?;
            Ok(Restored::Tour(tour))
        }
        Kind::Cvrp => {
            let mut routes = Vec::with_capacity(breaks.len() + 1);
            let mut prev = 0;
            for &b in &breaks {
                routes.push(expanded[prev..b].to_vec());
                prev = b;
            }
            routes.push(expanded[prev..].to_vec());
            let plan = RoutePlan::new(routes);
            plan.validate(inst)?;
            Ok(Restored::Plan(plan))
        }
    }
}
