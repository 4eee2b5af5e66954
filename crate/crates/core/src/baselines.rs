//! Construction heuristics for initial solutions and exact / near-exact
//! labelers for supervision and verification.

use crate::instances::{distance, Instance, Kind, RoutePlan, Tour};
use crate::{rng, Error, Result};
use rand::seq::SliceRandom;

/// How training labels are produced.
#[derive(Debug, Clone)]
pub struct LabelerConfig {
    pub mode: LabelMode,
    pub max_exact_n: usize,
    pub ls_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    ExactDp,
    LocalSearch,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig { mode: LabelMode::ExactDp, max_exact_n: 16, ls_rounds: 50 }
    }
}

fn require_tsp(inst: &Instance) -> Result<()> {
    if inst.kind != Kind::Tsp {
        return Err(Error::Kind { expected: "tsp", got: inst.kind.as_str() });
    }
    Ok(())
}

/// Random insertion: start from a random 3-node cycle, then insert the
/// remaining nodes in random order, each at the cyclic position of minimum
/// length increase.
pub fn random_insertion(inst: &Instance, seed: u64) -> Result<Tour> {
    require_tsp(inst)?;
    let n = inst.n();
    let mut rng = rng::stream(seed, &[0x1da]);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut tour: Vec<usize> = perm[..3].to_vec();
    for &v in &perm[3..] {
        let mut best_pos = 0;
        let mut best_delta = f64::INFINITY;
        for i in 0..tour.len() {
            let a = tour[i];
            let b = tour[(i + 1) % tour.len()];
            let delta = distance(inst, a, v) + distance(inst, v, b) - distance(inst, a, b);
            if delta < best_delta {
                best_delta = delta;
                best_pos = i + 1;
            }
        }
        tour.insert(best_pos, v);
    }
    Ok(Tour::new(tour))
}

/// Sweep construction for CVRP: customers sorted by polar angle around the
/// depot, routes filled greedily in angular order.
pub fn sweep(inst: &Instance) -> Result<RoutePlan> {
    if inst.kind != Kind::Cvrp {
        return Err(Error::Kind { expected: "cvrp", got: inst.kind.as_str() });
    }
    let demands = inst.demands.as_ref().unwrap();
    let capacity = inst.capacity.unwrap() as u64;
    let (dx, dy) = inst.coords[0];
    let mut customers: Vec<usize> = (1..inst.n()).collect();
    customers.sort_by(|&a, &b| {
        let (ax, ay) = inst.coords[a];
        let (bx, by) = inst.coords[b];
        let ta = (ay - dy).atan2(ax - dx);
        let tb = (by - dy).atan2(bx - dx);
        ta.partial_cmp(&tb).unwrap().then(a.cmp(&b))
    });

    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut load: u64 = 0;
    for c in customers {
        let d = demands[c] as u64;
        if load + d > capacity && !current.is_empty() {
            routes.push(std::mem::take(&mut current));
            load = 0;
        }
        current.push(c);
        load += d;
    }
    if !current.is_empty() {
        routes.push(current);
    }
    Ok(RoutePlan::new(routes))
}

/// Exact TSP solution by dynamic programming over subsets. Capped at n = 16.
pub fn held_karp(inst: &Instance) -> Result<Tour> {
    require_tsp(inst)?;
    let n = inst.n();
    if n > 16 {
        return Err(Error::Size(format!("held_karp capped at n = 16, got {n}")));
    }
    let m = n - 1; // nodes 1..n-1; node 0 is the fixed start
    let full: usize = (1 << m) - 1;
    let mut cost = vec![f64::INFINITY; (full + 1) * m];
    let mut parent = vec![u8::MAX; (full + 1) * m];
    let d = |i: usize, j: usize| distance(inst, i, j);

    for e in 0..m {
        cost[(1 << e) * m + e] = d(0, e + 1);
    }
    for mask in 1..=full {
        for last in 0..m {
            if mask & (1 << last) == 0 {
                continue;
            }
            let c = cost[mask * m + last];
            if !c.is_finite() {
                continue;
            }
            let mut rest = full & !mask;
            while rest != 0 {
                let next = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let nm = mask | (1 << next);
                let nc = c + d(last + 1, next + 1);
                if nc < cost[nm * m + next] {
                    cost[nm * m + next] = nc;
                    parent[nm * m + next] = last as u8;
                }
            }
        }
    }

    let mut best_end = 0;
    let mut best = f64::INFINITY;
    for e in 0..m {
        let total = cost[full * m + e] + d(e + 1, 0);
        if total < best {
            best = total;
            best_end = e;
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    let mut e = best_end;
    while mask != 0 {
        order.push(e + 1);
        let p = parent[mask * m + e];
        mask &= !(1 << e);
        if p == u8::MAX {
            break;
        }
        e = p as usize;
    }
    order.push(0);
    order.reverse();
    Ok(Tour::new(order))
}

/// Improve a tour with repeated 2-opt (first improvement, randomized scan
/// order) and Or-opt (segment lengths 1-3 relocation) passes.
pub fn local_search_label(
    inst: &Instance,
    start: &Tour,
    cfg: &LabelerConfig,
    seed: u64,
) -> Result<Tour> {
    require_tsp(inst)?;
    start.validate(inst)?;
    let mut order = start.order.clone();
    let n = order.len();
    let mut rng = rng::stream(seed, &[0x2017]);
    let mut scan: Vec<usize> = (0..n).collect();

    for _round in 0..cfg.ls_rounds.max(1) {
        let mut improved = false;
        scan.shuffle(&mut rng);
        improved |= two_opt_pass(inst, &mut order, &scan);
        improved |= or_opt_pass(inst, &mut order);
        if !improved {
            break;
        }
    }
    Ok(Tour::new(order))
}

/// One first-improvement 2-opt pass. Returns whether anything improved.
fn two_opt_pass(inst: &Instance, order: &mut Vec<usize>, scan: &[usize]) -> bool {
    let n = order.len();
    let mut improved = false;
    for &i in scan {
        let a = order[i];
        let b = order[(i + 1) % n];
        let dab = distance(inst, a, b);
        for off in 2..n - 1 {
            let j = (i + off) % n;
            let c = order[j];
            let dnext = order[(j + 1) % n];
            let delta =
                distance(inst, a, c) + distance(inst, b, dnext) - dab - distance(inst, c, dnext);
            if delta < -1e-12 {
                reverse_cyclic(order, (i + 1) % n, j);
                improved = true;
                break; // first improvement: move to the next scan position
            }
        }
    }
    improved
}

/// Reverse the cyclic slice from position `from` to position `to` inclusive.
fn reverse_cyclic(order: &mut [usize], from: usize, to: usize) {
    let n = order.len();
    let len = (to + n - from) % n + 1;
    let (mut x, mut y) = (from, to);
    for _ in 0..len / 2 {
        order.swap(x, y);
        x = (x + 1) % n;
        y = (y + n - 1) % n;
    }
}

/// One Or-opt pass: relocate segments of length 1-3, first improvement.
fn or_opt_pass(inst: &Instance, order: &mut Vec<usize>) -> bool {
    let n = order.len();
    let mut improved = false;
    for seg_len in 1..=3usize.min(n - 2) {
        let mut p = 0;
        while p < n {
            let prev = order[(p + n - 1) % n];
            let first = order[p];
            let last = order[(p + seg_len - 1) % n];
            let next = order[(p + seg_len) % n];
            if next == prev {
                p += 1;
                continue; // segment covers all but one node
            }
            let removal_gain = distance(inst, prev, first) + distance(inst, last, next)
                - distance(inst, prev, next);
            if removal_gain <= 1e-12 {
                p += 1;
                continue;
            }
            // candidate insertion edges outside the segment
            let mut best: Option<(usize, f64)> = None;
            let mut q = (p + seg_len) % n;
            while (q + 1) % n != p {
                let u = order[q];
                let v = order[(q + 1) % n];
                let add = distance(inst, u, first) + distance(inst, last, v)
                    - distance(inst, u, v);
                let delta = add - removal_gain;
                if delta < -1e-12 && best.map_or(true, |(_, bd)| delta < bd) {
                    best = Some((q, delta));
                }
                q = (q + 1) % n;
            }
            if let Some((q, _)) = best {
                relocate_segment(order, p, seg_len, q);
                improved = true;
                // re-read the new layout from the same position
            } else {
                p += 1;
            }
        }
    }
    improved
}

/// Move the cyclic segment starting at `p` (length `len`) to sit after
/// position `q` (an edge endpoint outside the segment).
fn relocate_segment(order: &mut Vec<usize>, p: usize, len: usize, q: usize) {
    let n = order.len();
    let seg: Vec<usize> = (0..len).map(|i| order[(p + i) % n]).collect();
    let anchor = order[q]; // survives removal: q is outside the segment
    let mut rest: Vec<usize> = Vec::with_capacity(n - len);
    let mut i = (p + len) % n;
    while i != p {
        rest.push(order[i]);
        i = (i + 1) % n;
    }
    let at = rest.iter().position(|&v| v == anchor).unwrap();
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&rest[..=at]);
    out.extend_from_slice(&seg);
    out.extend_from_slice(&rest[at + 1..]);
    *order = out;
}

/// Produce a label tour per the configured mode.
pub fn make_label(inst: &Instance, cfg: &LabelerConfig, seed: u64) -> Result<Tour> {
    match cfg.mode {
        LabelMode::ExactDp => {
            if inst.n() > cfg.max_exact_n {
                return Err(Error::Size(format!(
                    "exact labeling needs n <= {}, got {}",
                    cfg.max_exact_n,
                    inst.n()
                )));
            }
            held_karp(inst)
        }
        LabelMode::LocalSearch => {
            let start = random_insertion(inst, seed)?;
            local_search_label(inst, &start, cfg, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        gen_uniform, tour_length, tour_length_unchecked, DemandConfig, DistanceKind,
    };

    fn uniform_tsp(n: usize, seed: u64) -> Instance {
        gen_uniform(Kind::Tsp, n, seed, &DemandConfig::default()).unwrap()
    }

    #[test]
    fn random_insertion_three_nodes() {
        let inst = Instance::new_tsp(
            "tri",
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let tour = random_insertion(&inst, 1).unwrap();
        tour.validate(&inst).unwrap();
        let len = tour_length(&inst, &tour).unwrap();
        assert!((len - (2.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn random_insertion_feasible_and_seeded() {
        let inst = uniform_tsp(40, 9);
        let a = random_insertion(&inst, 5).unwrap();
        let b = random_insertion(&inst, 5).unwrap();
        let c = random_insertion(&inst, 6).unwrap();
        a.validate(&inst).unwrap();
        assert_eq!(a.order, b.order);
        assert_ne!(a.order, c.order);
    }

    #[test]
    fn random_insertion_mean_sanity() {
        // coarse band here; the tight 10k-instance check lives in the
        // acceptance suite
        let mut sum = 0.0;
        let count = 300;
        for i in 0..count {
            let inst = uniform_tsp(100, 1000 + i);
            let tour = random_insertion(&inst, i).unwrap();
            sum += tour_length(&inst, &tour).unwrap();
        }
        let mean = sum / count as f64;
        assert!((8.3..8.8).contains(&mean), "mean {mean}");
    }

    #[test]
    fn random_insertion_rejects_cvrp() {
        let inst = gen_uniform(Kind::Cvrp, 10, 1, &DemandConfig::default()).unwrap();
        assert!(random_insertion(&inst, 0).is_err());
    }

    #[test]
    fn sweep_single_route_when_total_fits() {
        let inst = Instance::new_cvrp(
            "t",
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)],
            vec![0, 2, 3, 4],
            20,
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let plan = sweep(&inst).unwrap();
        plan.validate(&inst).unwrap();
        assert_eq!(plan.routes.len(), 1);
    }

    #[test]
    fn sweep_pigeonhole_bound() {
        for seed in 0..20 {
            let inst = gen_uniform(Kind::Cvrp, 30, seed, &DemandConfig::default()).unwrap();
            let plan = sweep(&inst).unwrap();
            plan.validate(&inst).unwrap();
            let total: u64 =
                inst.demands.as_ref().unwrap().iter().map(|&d| d as u64).sum();
            let cap = inst.capacity.unwrap() as u64;
            let lower = total.div_ceil(cap) as usize;
            assert!(plan.routes.len() >= lower);
        }
    }

    #[test]
    fn sweep_quadrant_bisectors() {
        let inst = Instance::new_cvrp(
            "quad",
            vec![(0.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)],
            vec![0, 5, 5, 5, 5],
            5,
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let plan = sweep(&inst).unwrap();
        // angular order from -pi: (-1,-1), (1,-1), (1,1), (-1,1)
        assert_eq!(plan.routes, vec![vec![3], vec![4], vec![1], vec![2]]);
    }

    #[test]
    fn held_karp_unit_square() {
        let inst = Instance::new_tsp(
            "sq",
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let tour = held_karp(&inst).unwrap();
        assert_eq!(tour_length(&inst, &tour).unwrap(), 4.0);
    }

    #[test]
    fn held_karp_triangle() {
        let inst = Instance::new_tsp(
            "tri",
            vec![(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let tour = held_karp(&inst).unwrap();
        assert_eq!(tour_length(&inst, &tour).unwrap(), 12.0);
    }

    /// Brute force over all tours with node 0 fixed first.
    fn brute_force_optimum(inst: &Instance) -> f64 {
        let n = inst.n();
        let mut rest: Vec<usize> = (1..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut rest, 0, &mut |perm| {
            let mut order = vec![0];
            order.extend_from_slice(perm);
            let len = tour_length_unchecked(inst, &order);
            if len < best {
                best = len;
            }
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn held_karp_matches_brute_force() {
        for seed in 0..500 {
            let inst = uniform_tsp(8, 7000 + seed);
            let hk = held_karp(&inst).unwrap();
            let hk_len = tour_length(&inst, &hk).unwrap();
            let bf = brute_force_optimum(&inst);
            assert!(
                (hk_len - bf).abs() < 1e-9,
                "seed {seed}: held_karp {hk_len} vs brute force {bf}"
            );
        }
    }

    #[test]
    fn held_karp_size_cap() {
        let inst = uniform_tsp(17, 0);
        assert!(matches!(held_karp(&inst), Err(Error::Size(_))));
    }

    #[test]
    fn local_search_uncrosses_square() {
        let inst = Instance::new_tsp(
            "sq",
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let crossed = Tour::new(vec![0, 2, 1, 3]);
        let fixed = local_search_label(&inst, &crossed, &LabelerConfig::default(), 1).unwrap();
        assert_eq!(tour_length(&inst, &fixed).unwrap(), 4.0);
    }

    #[test]
    fn local_search_never_worsens_and_fixed_point() {
        let cfg = LabelerConfig::default();
        for seed in 0..30 {
            let inst = uniform_tsp(24, 300 + seed);
            let start = random_insertion(&inst, seed).unwrap();
            let start_len = tour_length(&inst, &start).unwrap();
            let improved = local_search_label(&inst, &start, &cfg, seed).unwrap();
            let improved_len = tour_length(&inst, &improved).unwrap();
            assert!(improved_len <= start_len + 1e-9);
            let again = local_search_label(&inst, &improved, &cfg, seed + 1).unwrap();
            let again_len = tour_length(&inst, &again).unwrap();
            assert!((again_len - improved_len).abs() < 1e-9 || again_len < improved_len);
        }
    }

    #[test]
    fn local_search_near_optimal_on_tsp12() {
        let cfg = LabelerConfig { mode: LabelMode::LocalSearch, ..Default::default() };
        let mut gap_sum = 0.0;
        let count = 200; // the full 1,000-instance check lives in integration tests
        for seed in 0..count {
            let inst = uniform_tsp(12, 4000 + seed);
            let label = make_label(&inst, &cfg, seed).unwrap();
            let opt = held_karp(&inst).unwrap();
            let g = crate::instances::gap(
                tour_length(&inst, &label).unwrap(),
                tour_length(&inst, &opt).unwrap(),
            )
            .unwrap();
            assert!(g >= -1e-9);
            gap_sum += g;
        }
        let mean = gap_sum / count as f64;
        assert!(mean <= 0.01, "mean local-search gap {mean}");
    }

    #[test]
    fn exact_label_size_guard() {
        let inst = uniform_tsp(20, 0);
        let cfg = LabelerConfig::default();
        assert!(matches!(make_label(&inst, &cfg, 0), Err(Error::Size(_))));
    }
}
