//! The core combinatorial machinery: clustering destruction, sample-size
//! alignment, hyper-graph reduction with endpoint features, coordinate
//! transformation, supervision targets, and restoration.
//!
//! Terminology: destroying a node removes both of its incident tour edges.
//! What survives is a set of maximal segments. Each segment is reduced to a
//! hyper-edge between its two endpoint nodes (set B); nodes with no
//! surviving incident edge are isolated (set A); segment interiors vanish
//! from the reduced problem. The hyper-graph size is m = |A| + |B|.

mod align;
mod target;

pub use align::{
    align_sample_size, align_sample_size_plan, emergence_count, AlignmentResult,
};
pub use target::{restore, target_sequence, ReducedOrder, Restored, TargetSequence};

use crate::instances::{Instance, Kind, RoutePlan, Tour};
use crate::{Error, Result};
use std::collections::BTreeSet;

/// Result of destroying a set of nodes: the removed edges and the maximal
/// surviving chains (each in tour order, length >= 2).
#[derive(Debug, Clone)]
pub struct Destruction {
    pub destroyed: BTreeSet<usize>,
    pub destroyed_edges: BTreeSet<(usize, usize)>,
    pub segments: Vec<Vec<usize>>,
}

/// A surviving segment reduced to its endpoints; `interior` lists the hidden
/// nodes from `a` to `b` in segment order.
#[derive(Debug, Clone)]
pub struct HyperEdge {
    pub a: usize,
    pub b: usize,
    pub interior: Vec<usize>,
}

/// Input row for one hyper-graph node: own coordinates, partner coordinates
/// (self for isolated nodes), endpoint flag, and aggregated demand (CVRP).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub xa: f64,
    pub ya: f64,
    pub xb: f64,
    pub yb: f64,
    pub endpoint: bool,
    pub dr: Option<f64>,
}

/// Record of the translate + uniform-scale applied by [`transform_coords`].
#[derive(Debug, Clone, Copy)]
pub struct CoordTransform {
    pub min_x: f64,
    pub min_y: f64,
    pub side: f64,
}

#[derive(Debug, Clone)]
pub struct HyperGraph {
    pub kind: Kind,
    /// Set A, ascending node indices.
    pub isolated: Vec<usize>,
    /// Set B, ascending node indices.
    pub endpoints: Vec<usize>,
    pub hyper_edges: Vec<HyperEdge>,
    /// One row per hyper-graph node, ordered by ascending original index.
    pub features: Vec<FeatureRow>,
    /// Row index -> original node index.
    pub origin: Vec<usize>,
    /// Row index -> partner endpoint's row (None for isolated).
    pub partner: Vec<Option<usize>>,
    /// Row index -> index into hyper_edges (None for isolated).
    pub edge_of: Vec<Option<usize>>,
    /// Row index -> demand consumed when the row is chosen (CVRP; the full
    /// hyper-edge demand sits on both endpoints, consumed once on entry).
    pub row_demand: Vec<u64>,
    /// Vehicle capacity (CVRP), so repair needs no instance back-reference.
    pub capacity: Option<u64>,
    pub transform: Option<CoordTransform>,
}

impl HyperGraph {
    /// Hyper-graph size m = |A| + |B|.
    pub fn m(&self) -> usize {
        self.features.len()
    }

    /// Feature matrix, row-major, input_dim columns (5 for TSP, 6 for CVRP).
    pub fn feature_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m() * self.input_dim());
        for row in &self.features {
            out.push(row.xa);
            out.push(row.ya);
            out.push(row.xb);
            out.push(row.yb);
            out.push(if row.endpoint { 1.0 } else { 0.0 });
            if let Some(dr) = row.dr {
                out.push(dr);
            }
        }
        out
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            Kind::Tsp => 5,
            Kind::Cvrp => 6,
        }
    }

    /// Row index of an original node, if it is a hyper-graph member.
    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.origin.binary_search(&node).ok()
    }
}

pub(crate) fn norm_edge(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Nodes eligible for destruction, sorted by (distance to center, index).
/// CVRP never destroys the depot.
pub(crate) fn nodes_by_distance(inst: &Instance, center: usize) -> Vec<usize> {
    let (cx, cy) = inst.coords[center];
    let first = match inst.kind {
        Kind::Tsp => 0,
        Kind::Cvrp => 1,
    };
    let mut nodes: Vec<usize> = (first..inst.n()).collect();
    let mut key: Vec<f64> = vec![0.0; inst.n()];
    for &v in &nodes {
        let (x, y) = inst.coords[v];
        key[v] = (x - cx).powi(2) + (y - cy).powi(2);
    }
    nodes.sort_by(|&a, &b| key[a].partial_cmp(&key[b]).unwrap().then(a.cmp(&b)));
    nodes
}

fn check_center_count(inst: &Instance, center: usize, count: usize) -> Result<usize> {
    let n = inst.n();
    if center >= n {
        return Err(Error::Index { index: center, len: n });
    }
    let repairable = inst.num_customers();
    if inst.kind == Kind::Cvrp && center == 0 {
        return Err(Error::domain("CVRP destruction center must be a customer"));
    }
    if count == 0 || count > repairable {
        return Err(Error::domain(format!(
            "destroy count {count} outside 1..={repairable}"
        )));
    }
    Ok(repairable)
}

/// Destroy the `count` nearest nodes to `center` in a TSP tour.
pub fn cluster_destroy(
    inst: &Instance,
    tour: &Tour,
    center: usize,
    count: usize,
) -> Result<Destruction> {
    if inst.kind != Kind::Tsp {
        return Err(Error::Kind { expected: "tsp", got: inst.kind.as_str() });
    }
    check_center_count(inst, center, count)?;
    tour.validate(inst)?;
    let destroyed: BTreeSet<usize> =
        nodes_by_distance(inst, center).into_iter().take(count).collect();
    Ok(destroy_tour_set(inst, tour, destroyed))
}

pub(crate) fn destroy_tour_set(
    inst: &Instance,
    tour: &Tour,
    destroyed: BTreeSet<usize>,
) -> Destruction {
    let n = inst.n();
    let t = &tour.order;
    let dead = |v: usize| destroyed.contains(&v);
    let mut destroyed_edges = BTreeSet::new();
    for p in 0..n {
        let (u, v) = (t[p], t[(p + 1) % n]);
        if dead(u) || dead(v) {
            destroyed_edges.insert(norm_edge(u, v));
        }
    }
    // segments in tour order: start where the predecessor edge is gone and
    // at least one intact successor follows (a lone intact node between two
    // destroyed neighbours is isolated, not a segment)
    let mut segments = Vec::new();
    for p in 0..n {
        let node = t[p];
        let prev = t[(p + n - 1) % n];
        let next = t[(p + 1) % n];
        if !dead(node) && dead(prev) && !dead(next) {
            let mut seg = vec![node];
            let mut q = (p + 1) % n;
            while !dead(t[q]) {
                seg.push(t[q]);
                q = (q + 1) % n;
            }
            segments.push(seg);
        }
    }
    Destruction { destroyed, destroyed_edges, segments }
}

/// Destroy the `count` nearest customers to `center` in a CVRP plan. Every
/// depot-incident edge is removed as well, before segment extraction.
pub fn cluster_destroy_plan(
    inst: &Instance,
    plan: &RoutePlan,
    center: usize,
    count: usize,
) -> Result<Destruction> {
    if inst.kind != Kind::Cvrp {
        return Err(Error::Kind { expected: "cvrp", got: inst.kind.as_str() });
    }
    check_center_count(inst, center, count)?;
    plan.validate(inst)?;
    let destroyed: BTreeSet<usize> =
        nodes_by_distance(inst, center).into_iter().take(count).collect();
    Ok(destroy_plan_set(plan, destroyed))
}

pub(crate) fn destroy_plan_set(plan: &RoutePlan, destroyed: BTreeSet<usize>) -> Destruction {
    let dead = |v: usize| destroyed.contains(&v);
    let mut destroyed_edges = BTreeSet::new();
    let mut segments = Vec::new();
    for route in &plan.routes {
        destroyed_edges.insert(norm_edge(0, route[0]));
        destroyed_edges.insert(norm_edge(0, route[route.len() - 1]));
        for w in route.windows(2) {
            if dead(w[0]) || dead(w[1]) {
                destroyed_edges.insert(norm_edge(w[0], w[1]));
            }
        }
        let mut p = 0;
        while p < route.len() {
            let starts = !dead(route[p])
                && (p == 0 || dead(route[p - 1]))
                && p + 1 < route.len()
                && !dead(route[p + 1]);
            if starts {
                let mut seg = vec![route[p]];
                let mut q = p + 1;
                while q < route.len() && !dead(route[q]) {
                    seg.push(route[q]);
                    q += 1;
                }
                segments.push(seg);
                p = q;
            } else {
                p += 1;
            }
        }
    }
    Destruction { destroyed, destroyed_edges, segments }
}

/// Build the hyper-graph from a destruction per the endpoint-feature scheme.
pub fn reduce(inst: &Instance, destruction: &Destruction) -> Result<HyperGraph> {
    if destruction.destroyed.is_empty() {
        return Err(Error::domain("reduce requires at least one destroyed node"));
    }
    let first = match inst.kind {
        Kind::Tsp => 0,
        Kind::Cvrp => 1,
    };
    let n = inst.n();
    let mut in_segment = vec![false; n];
    let mut is_member = vec![false; n];
    for seg in &destruction.segments {
        for &v in seg {
            in_segment[v] = true;
        }
        is_member[seg[0]] = true;
        is_member[*seg.last().unwrap()] = true;
    }
    let mut isolated = Vec::new();
    for v in first..n {
        if !in_segment[v] {
            isolated.push(v);
            is_member[v] = true;
        }
    }
    let mut endpoints: Vec<usize> = Vec::with_capacity(destruction.segments.len() * 2);
    let mut hyper_edges = Vec::with_capacity(destruction.segments.len());
    // node -> (edge index, partner node)
    let mut edge_info: Vec<Option<(usize, usize)>> = vec![None; n];
    for (ei, seg) in destruction.segments.iter().enumerate() {
        let a = seg[0];
        let b = *seg.last().unwrap();
        endpoints.push(a);
        endpoints.push(b);
        edge_info[a] = Some((ei, b));
        edge_info[b] = Some((ei, a));
        hyper_edges.push(HyperEdge { a, b, interior: seg[1..seg.len() - 1].to_vec() });
    }
    endpoints.sort_unstable();

    let demands = inst.demands.as_deref();
    let edge_demand: Vec<u64> = destruction
        .segments
        .iter()
        .map(|seg| {
            demands.map_or(0, |d| seg.iter().map(|&v| d[v] as u64).sum())
        })
        .collect();

    let origin: Vec<usize> = (first..n).filter(|&v| is_member[v]).collect();
    let mut features = Vec::with_capacity(origin.len());
    let mut partner = vec![None; origin.len()];
    let mut edge_of = vec![None; origin.len()];
    let mut row_demand = vec![0u64; origin.len()];
    for (row, &v) in origin.iter().enumerate() {
        let (x, y) = inst.coords[v];
        match edge_info[v] {
            None => {
                let d = demands.map(|d| d[v] as u64);
                features.push(FeatureRow {
                    xa: x,
                    ya: y,
                    xb: x,
                    yb: y,
                    endpoint: false,
                    dr: d.map(|d| d as f64),
                });
                row_demand[row] = d.unwrap_or(0);
            }
            Some((ei, partner_node)) => {
                let (px, py) = inst.coords[partner_node];
                features.push(FeatureRow {
                    xa: x,
                    ya: y,
                    xb: px,
                    yb: py,
                    endpoint: true,
                    dr: demands.map(|_| edge_demand[ei] as f64),
                });
                edge_of[row] = Some(ei);
                row_demand[row] = edge_demand[ei];
            }
        }
    }
    // partner rows resolved after origin is final
    let hg_tmp_origin = &origin;
    for (row, &v) in hg_tmp_origin.iter().enumerate() {
        if let Some((_, p)) = edge_info[v] {
            partner[row] = Some(hg_tmp_origin.binary_search(&p).unwrap());
        }
    }

    Ok(HyperGraph {
        kind: inst.kind,
        isolated,
        endpoints,
        hyper_edges,
        features,
        origin,
        partner,
        edge_of,
        row_demand,
        capacity: inst.capacity.map(u64::from),
        transform: None,
    })
}

/// Translate the bounding box of all feature coordinates to the origin and
/// scale uniformly by the longest side, mapping into the unit square.
pub fn transform_coords(hg: &HyperGraph) -> Result<HyperGraph> {
    if hg.m() < 2 {
        return Err(Error::domain(format!("transform needs m >= 2, got {}", hg.m())));
    }
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for r in &hg.features {
        for (x, y) in [(r.xa, r.ya), (r.xb, r.yb)] {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    let side = (max_x - min_x).max(max_y - min_y);
    if side <= 0.0 {
        return Err(Error::Degenerate("all feature coordinates coincide".into()));
    }
    let mut out = hg.clone();
    for r in &mut out.features {
        r.xa = (r.xa - min_x) / side;
        r.ya = (r.ya - min_y) / side;
        r.xb = (r.xb - min_x) / side;
        r.yb = (r.yb - min_y) / side;
    }
    out.transform = Some(CoordTransform { min_x, min_y, side });
    Ok(out)
}

/// Destruction operators behind a name registry. Only clustering ships; the
/// seam exists so alternates can drop in without touching the search loop.
pub trait DestroyOperator: Send + Sync {
    fn name(&self) -> &'static str;
    fn destroy_tour(
        &self,
        inst: &Instance,
        tour: &Tour,
        center: usize,
        count: usize,
    ) -> Result<Destruction>;
    fn destroy_plan(
        &self,
        inst: &Instance,
        plan: &RoutePlan,
        center: usize,
        count: usize,
    ) -> Result<Destruction>;
}

pub struct ClusterDestroy;

impl DestroyOperator for ClusterDestroy {
    fn name(&self) -> &'static str {
        "cluster"
    }
    fn destroy_tour(
        &self,
        inst: &Instance,
        tour: &Tour,
        center: usize,
        count: usize,
    ) -> Result<Destruction> {
        cluster_destroy(inst, tour, center, count)
    }
    fn destroy_plan(
        &self,
        inst: &Instance,
        plan: &RoutePlan,
        center: usize,
        count: usize,
    ) -> Result<Destruction> {
        cluster_destroy_plan(inst, plan, center, count)
    }
}

pub fn destroy_operator(name: &str) -> Result<Box<dyn DestroyOperator>> {
    match name {
        "cluster" => Ok(Box::new(ClusterDestroy)),
        other => Err(Error::config(format!(
            "unknown destroy operator {other:?}; available: {:?}",
            destroy_operator_names()
        ))),
    }
}

pub fn destroy_operator_names() -> &'static [&'static str] {
    &["cluster"]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_uniform, DemandConfig, DistanceKind};

    fn line_tsp(n: usize) -> (Instance, Tour) {
        // nodes on a line so that node i is the i-th nearest to node 0
        let coords: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, 0.0)).collect();
        let inst = Instance::new_tsp("line", coords, DistanceKind::ExactEuclidean).unwrap();
        let tour = Tour::new((0..n).collect());
        (inst, tour)
    }

    #[test]
    fn destroy_all_nodes() {
        let (inst, tour) = line_tsp(5);
        let d = cluster_destroy(&inst, &tour, 0, 5).unwrap();
        assert_eq!(d.destroyed.len(), 5);
        assert!(d.segments.is_empty());
        assert_eq!(d.destroyed_edges.len(), 5);
    }

    #[test]
    fn destroy_single_middle_node() {
        // tour (0,1,2,3,4); make node 2 the unique nearest to the center
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)];
        let inst = Instance::new_tsp("t", coords, DistanceKind::ExactEuclidean).unwrap();
        let tour = Tour::new(vec![0, 1, 2, 3, 4]);
        let d = cluster_destroy(&inst, &tour, 2, 1).unwrap();
        assert!(d.destroyed.contains(&2));
        assert_eq!(d.segments, vec![vec![3, 4, 0, 1]]);
        assert_eq!(
            d.destroyed_edges,
            BTreeSet::from([(1, 2), (2, 3)])
        );
    }

    #[test]
    fn destroy_count_one_generic() {
        let inst = gen_uniform(Kind::Tsp, 10, 3, &DemandConfig::default()).unwrap();
        let tour = crate::baselines::random_insertion(&inst, 0).unwrap();
        let d = cluster_destroy(&inst, &tour, 4, 1).unwrap();
        assert_eq!(d.destroyed.len(), 1);
        assert!(d.destroyed.contains(&4));
        assert_eq!(d.segments.len(), 1);
        assert_eq!(d.segments[0].len(), 9);
    }

    #[test]
    fn destroy_count_bounds() {
        let (inst, tour) = line_tsp(5);
        assert!(cluster_destroy(&inst, &tour, 0, 0).is_err());
        assert!(cluster_destroy(&inst, &tour, 0, 6).is_err());
        assert!(cluster_destroy(&inst, &tour, 9, 1).is_err());
    }

    #[test]
    fn reduce_all_destroyed_rows() {
        let (inst, tour) = line_tsp(4);
        let d = cluster_destroy(&inst, &tour, 0, 4).unwrap();
        let hg = reduce(&inst, &d).unwrap();
        assert_eq!(hg.m(), 4);
        assert!(hg.hyper_edges.is_empty());
        for (row, f) in hg.features.iter().enumerate() {
            let (x, y) = inst.coords[hg.origin[row]];
            assert_eq!((f.xa, f.ya, f.xb, f.yb, f.endpoint), (x, y, x, y, false));
        }
    }

    #[test]
    fn reduce_segment_endpoint_features() {
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)];
        let inst = Instance::new_tsp("t", coords, DistanceKind::ExactEuclidean).unwrap();
        let tour = Tour::new(vec![0, 1, 2, 3, 4]);
        let d = cluster_destroy(&inst, &tour, 2, 1).unwrap();
        let hg = reduce(&inst, &d).unwrap();
        // members: isolated {2}, endpoints {3, 1}; interiors 4 and 0 absent
        assert_eq!(hg.isolated, vec![2]);
        assert_eq!(hg.endpoints, vec![1, 3]);
        assert_eq!(hg.origin, vec![1, 2, 3]);
        assert_eq!(hg.m(), 3);
        let row1 = hg.row_of(1).unwrap();
        let row3 = hg.row_of(3).unwrap();
        let f1 = &hg.features[row1];
        assert_eq!((f1.xa, f1.ya), (1.0, 0.0));
        assert_eq!((f1.xb, f1.yb), (3.0, 0.0));
        assert!(f1.endpoint);
        let f3 = &hg.features[row3];
        assert_eq!((f3.xb, f3.yb), (1.0, 0.0));
        assert_eq!(hg.partner[row1], Some(row3));
        assert_eq!(hg.partner[row3], Some(row1));
        let f2 = &hg.features[hg.row_of(2).unwrap()];
        assert!(!f2.endpoint);
    }

    #[test]
    fn reduce_cvrp_demand_aggregation() {
        // one route 1-2-3 with demands (2,3,4); destroy node 4 from another
        // route so the segment 1-2-3 survives whole
        let inst = Instance::new_cvrp(
            "t",
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (10.0, 10.0)],
            vec![0, 2, 3, 4, 5],
            9,
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let plan = RoutePlan::new(vec![vec![1, 2, 3], vec![4]]);
        let d = cluster_destroy_plan(&inst, &plan, 4, 1).unwrap();
        let hg = reduce(&inst, &d).unwrap();
        assert_eq!(hg.isolated, vec![4]);
        assert_eq!(hg.endpoints, vec![1, 3]);
        let r1 = &hg.features[hg.row_of(1).unwrap()];
        let r3 = &hg.features[hg.row_of(3).unwrap()];
        assert_eq!(r1.dr, Some(9.0)); // 2 + 3 + 4 over the whole segment
        assert_eq!(r3.dr, Some(9.0));
        let r4 = &hg.features[hg.row_of(4).unwrap()];
        assert_eq!(r4.dr, Some(5.0));
        assert_eq!(hg.row_demand[hg.row_of(1).unwrap()], 9);
    }

    #[test]
    fn reduce_member_partition_invariants() {
        for seed in 0..50 {
            let inst = gen_uniform(Kind::Tsp, 30, seed, &DemandConfig::default()).unwrap();
            let tour = crate::baselines::random_insertion(&inst, seed).unwrap();
            let center = (seed as usize * 7) % 30;
            let count = 1 + (seed as usize % 29);
            let d = cluster_destroy(&inst, &tour, center, count).unwrap();
            let hg = reduce(&inst, &d).unwrap();
            assert_eq!(hg.m(), hg.isolated.len() + 2 * hg.hyper_edges.len());
            assert_eq!(hg.m(), hg.isolated.len() + hg.endpoints.len());
            // every node exactly one of isolated / endpoint / interior
            let mut seen = vec![0u8; 30];
            for &v in &hg.isolated {
                seen[v] += 1;
            }
            for &v in &hg.endpoints {
                seen[v] += 1;
            }
            for e in &hg.hyper_edges {
                for &v in &e.interior {
                    seen[v] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "partition failed seed {seed}");
            // feature-row invariants
            for (row, f) in hg.features.iter().enumerate() {
                if f.endpoint {
                    let p = hg.partner[row].unwrap();
                    let (px, py) = inst.coords[hg.origin[p]];
                    assert_eq!((f.xb, f.yb), (px, py));
                } else {
                    assert_eq!((f.xa, f.ya), (f.xb, f.yb));
                }
            }
        }
    }

    #[test]
    fn reduce_empty_destruction_rejected() {
        let (inst, _) = line_tsp(5);
        let d = Destruction {
            destroyed: BTreeSet::new(),
            destroyed_edges: BTreeSet::new(),
            segments: vec![],
        };
        assert!(reduce(&inst, &d).is_err());
    }

    #[test]
    fn transform_identity_when_already_unit() {
        let coords = vec![(0.0, 0.0), (1.0, 1.0), (0.5, 0.25), (0.25, 0.75)];
        let inst = Instance::new_tsp("t", coords, DistanceKind::ExactEuclidean).unwrap();
        let tour = Tour::new(vec![0, 1, 2, 3]);
        let d = cluster_destroy(&inst, &tour, 0, 4).unwrap();
        let hg = reduce(&inst, &d).unwrap();
        let t = transform_coords(&hg).unwrap();
        for (a, b) in hg.features.iter().zip(&t.features) {
            assert_eq!((a.xa, a.ya, a.xb, a.yb), (b.xa, b.ya, b.xb, b.yb));
        }
    }

    #[test]
    fn transform_translation_and_scale_invariance() {
        // dyadic-grid coordinates: +5 translation and x3 scaling are exact
        // in f64, so the invariance must hold bitwise
        let grid = |i: u32| i as f64 / 1024.0;
        let coords = vec![(grid(3), grid(900)), (grid(511), grid(7)), (grid(1020), grid(350))];
        let shifted: Vec<(f64, f64)> = coords.iter().map(|&(x, y)| (x + 5.0, y + 5.0)).collect();
        let scaled: Vec<(f64, f64)> = coords.iter().map(|&(x, y)| (x * 3.0, y * 3.0)).collect();
        let tour = Tour::new(vec![0, 1, 2]);
        let mk = |c: Vec<(f64, f64)>| {
            let inst = Instance::new_tsp("t", c, DistanceKind::ExactEuclidean).unwrap();
            let d = cluster_destroy(&inst, &tour, 0, 1).unwrap();
            transform_coords(&reduce(&inst, &d).unwrap()).unwrap()
        };
        let base = mk(coords);
        for variant in [mk(shifted), mk(scaled)] {
            for (a, b) in base.features.iter().zip(&variant.features) {
                assert_eq!(a.xa.to_bits(), b.xa.to_bits());
                assert_eq!(a.ya.to_bits(), b.ya.to_bits());
                assert_eq!(a.xb.to_bits(), b.xb.to_bits());
                assert_eq!(a.yb.to_bits(), b.yb.to_bits());
            }
        }
    }

    #[test]
    fn transform_degenerate_rejected() {
        let coords = vec![(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)];
        let inst = Instance::new_tsp("t", coords, DistanceKind::ExactEuclidean).unwrap();
        let tour = Tour::new(vec![0, 1, 2]);
        let d = cluster_destroy(&inst, &tour, 0, 3).unwrap();
        let hg = reduce(&inst, &d).unwrap();
        assert!(matches!(transform_coords(&hg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn destroy_operator_registry() {
        assert!(destroy_operator("cluster").is_ok());
        assert!(destroy_operator("scatter").is_err());
        assert_eq!(destroy_operator_names(), &["cluster"]);
    }
}
