//! Problem instances, solutions, distance kernels, and evaluation metrics.

mod gen;
mod jsonl;
mod parse;

pub use gen::{gen_uniform, gen_uniform_many, DemandConfig};
pub use jsonl::{
    read_bks, read_dataset, read_labels, read_solutions, write_dataset, write_labels,
    write_solutions, Solution,
};
pub use parse::{parse_cvrplib, parse_tsplib};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Tsp,
    Cvrp,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Tsp => "tsp",
            Kind::Cvrp => "cvrp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    ExactEuclidean,
    /// TSPLIB95 EUC_2D: Euclidean rounded to the nearest integer.
    Euc2dRounded,
    /// TSPLIB95 CEIL_2D: Euclidean rounded up.
    Ceil2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub kind: Kind,
    pub coords: Vec<(f64, f64)>,
    /// CVRP only; index 0 is the depot with demand 0.
    pub demands: Option<Vec<u32>>,
    pub capacity: Option<u32>,
    pub distance_kind: DistanceKind,
}

impl Instance {
    pub fn new_tsp(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        distance_kind: DistanceKind,
    ) -> Result<Self> {
        let inst = Instance {
            name: name.into(),
            kind: Kind::Tsp,
            coords,
            demands: None,
            capacity: None,
            distance_kind,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn new_cvrp(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        demands: Vec<u32>,
        capacity: u32,
        distance_kind: DistanceKind,
    ) -> Result<Self> {
        let inst = Instance {
            name: name.into(),
            kind: Kind::Cvrp,
            coords,
            demands: Some(demands),
            capacity: Some(capacity),
            distance_kind,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Node count (CVRP: depot + customers).
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Customer count for CVRP; full node count for TSP.
    pub fn num_customers(&self) -> usize {
        match self.kind {
            Kind::Tsp => self.coords.len(),
            Kind::Cvrp => self.coords.len() - 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Kind::Tsp => {
                if self.coords.len() < 3 {
                    return Err(Error::domain(format!(
                        "TSP instance {:?} needs >= 3 nodes, got {}",
                        self.name,
                        self.coords.len()
                    )));
                }
                if self.demands.is_some() || self.capacity.is_some() {
                    return Err(Error::validation("TSP instance carries CVRP fields"));
                }
            }
            Kind::Cvrp => {
                if self.coords.len() < 3 {
                    return Err(Error::domain(format!(
                        "CVRP instance {:?} needs a depot plus >= 2 customers, got {} nodes",
                        self.name,
                        self.coords.len()
                    )));
                }
                let demands = self
                    .demands
                    .as_ref()
                    .ok_or_else(|| Error::validation("CVRP instance missing demands"))?;
                let capacity = self
                    .capacity
                    .ok_or_else(|| Error::validation("CVRP instance missing capacity"))?;
                if capacity == 0 {
                    return Err(Error::validation("CVRP capacity must be positive"));
                }
                if demands.len() != self.coords.len() {
                    return Err(Error::validation(format!(
                        "demand count {} != node count {}",
                        demands.len(),
                        self.coords.len()
                    )));
                }
                if demands[0] != 0 {
                    return Err(Error::validation(format!(
                        "depot demand must be 0, got {}",
                        demands[0]
                    )));
                }
                if let Some((i, &d)) = demands.iter().enumerate().find(|(_, &d)| d > capacity) {
                    return Err(Error::Infeasible(format!(
                        "customer {i} demand {d} exceeds capacity {capacity}"
                    )));
                }
            }
        }
        if let Some((i, c)) = self
            .coords
            .iter()
            .enumerate()
            .find(|(_, c)| !c.0.is_finite() || !c.1.is_finite())
        {
            return Err(Error::validation(format!("non-finite coordinate {c:?} at node {i}")));
        }
        Ok(())
    }
}

/// A cyclic tour: a permutation of 0..n-1; the last node connects to the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Tour { order }
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        validate_permutation(&self.order, inst.n())
    }
}

pub fn validate_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::validation(format!(
            "order length {} != node count {n}",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n {
            return Err(Error::Index { index: v, len: n });
        }
        if seen[v] {
            return Err(Error::validation(format!("node {v} appears more than once")));
        }
        seen[v] = true;
    }
    Ok(())
}

/// CVRP solution: customer indices per route; each route implicitly starts
/// and ends at the depot (node 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub routes: Vec<Vec<usize>>,
}

impl RoutePlan {
    pub fn new(routes: Vec<Vec<usize>>) -> Self {
        RoutePlan { routes }
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if inst.kind != Kind::Cvrp {
            return Err(Error::Kind { expected: "cvrp", got: inst.kind.as_str() });
        }
        let n = inst.n();
        let demands = inst.demands.as_ref().unwrap();
        let capacity = inst.capacity.unwrap() as u64;
        let mut seen = vec![false; n];
        seen[0] = true; // depot never appears inside a route
        for (ri, route) in self.routes.iter().enumerate() {
            if route.is_empty() {
                return Err(Error::validation(format!("route {ri} is empty")));
            }
            let mut load: u64 = 0;
            for &c in route {
                if c == 0 || c >= n {
                    return Err(Error::validation(format!(
                        "route {ri} contains invalid customer {c}"
                    )));
                }
                if seen[c] {
                    return Err(Error::validation(format!(
                        "customer {c} appears more than once"
                    )));
                }
                seen[c] = true;
                load += demands[c] as u64;
            }
            if load > capacity {
                return Err(Error::validation(format!(
                    "route {ri} load {load} exceeds capacity {capacity}"
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::validation(format!("customer {missing} not covered")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub name: String,
    pub objective: f64,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
    pub wall_time: f64,
}

/// Distance between nodes i and j under the instance's distance kind.
pub fn distance(inst: &Instance, i: usize, j: usize) -> f64 {
    debug_assert!(i < inst.n() && j < inst.n());
    let (xi, yi) = inst.coords[i];
    let (xj, yj) = inst.coords[j];
    let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
    match inst.distance_kind {
        DistanceKind::ExactEuclidean => d,
        DistanceKind::Euc2dRounded => d.round(),
        DistanceKind::Ceil2d => d.ceil(),
    }
}

/// Checked variant of [`distance`] for external callers.
pub fn distance_checked(inst: &Instance, i: usize, j: usize) -> Result<f64> {
    let n = inst.n();
    if i >= n {
        return Err(Error::Index { index: i, len: n });
    }
    if j >= n {
        return Err(Error::Index { index: j, len: n });
    }
    Ok(distance(inst, i, j))
}

/// Cyclic tour length. Validates the permutation first.
pub fn tour_length(inst: &Instance, tour: &Tour) -> Result<f64> {
    tour.validate(inst)?;
    Ok(tour_length_unchecked(inst, &tour.order))
}

/// Length of a cyclic order assumed to be a valid permutation.
pub fn tour_length_unchecked(inst: &Instance, order: &[usize]) -> f64 {
    let n = order.len();
    let mut total = 0.0;
    for i in 0..n {
        total += distance(inst, order[i], order[(i + 1) % n]);
    }
    total
}

/// Total route-plan cost: per route, depot -> first, internal legs, last -> depot.
pub fn route_cost(inst: &Instance, plan: &RoutePlan) -> Result<f64> {
    plan.validate(inst)?;
    Ok(route_cost_unchecked(inst, plan))
}

pub fn route_cost_unchecked(inst: &Instance, plan: &RoutePlan) -> f64 {
    let mut total = 0.0;
    for route in &plan.routes {
        let mut prev = 0;
        for &c in route {
            total += distance(inst, prev, c);
            prev = c;
        }
        total += distance(inst, prev, 0);
    }
    total
}

/// Optimality gap (objective - reference) / reference.
pub fn gap(objective: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::domain(format!("reference must be positive, got {reference}")));
    }
    Ok((objective - reference) / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> Instance {
        Instance::new_tsp(
            "square",
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap()
    }

    #[test]
    fn distance_kinds() {
        let exact = Instance::new_tsp(
            "t",
            vec![(0.0, 0.0), (3.0, 4.0), (1.0, 1.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        assert_eq!(distance(&exact, 0, 1), 5.0);
        assert_eq!(distance(&exact, 1, 0), 5.0);
        assert_eq!(distance(&exact, 2, 2), 0.0);

        let rounded = Instance { distance_kind: DistanceKind::Euc2dRounded, ..exact.clone() };
        assert_eq!(distance(&rounded, 0, 2), 1.0); // round(1.414..) = 1

        let ceil = Instance { distance_kind: DistanceKind::Ceil2d, ..exact };
        assert_eq!(distance(&ceil, 0, 2), 2.0); // ceil(1.414..) = 2
    }

    #[test]
    fn distance_symmetric_zero_diagonal_all_kinds() {
        for kind in [DistanceKind::ExactEuclidean, DistanceKind::Euc2dRounded, DistanceKind::Ceil2d]
        {
            let inst = Instance::new_tsp(
                "t",
                vec![(0.3, 0.9), (12.0, 4.5), (7.125, 0.25)],
                kind,
            )
            .unwrap();
            for i in 0..3 {
                assert_eq!(distance(&inst, i, i), 0.0);
                for j in 0..3 {
                    assert_eq!(distance(&inst, i, j), distance(&inst, j, i));
                }
            }
        }
    }

    #[test]
    fn tour_length_unit_square() {
        let inst = unit_square();
        let t = Tour::new(vec![0, 1, 2, 3]);
        assert_eq!(tour_length(&inst, &t).unwrap(), 4.0);
    }

    #[test]
    fn tour_length_three_nodes_any_order() {
        let inst = Instance::new_tsp(
            "tri",
            vec![(0.0, 0.0), (2.0, 0.5), (0.5, 3.0)],
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let perimeter = tour_length(&inst, &Tour::new(vec![0, 1, 2])).unwrap();
        for order in [vec![0, 2, 1], vec![1, 0, 2], vec![2, 1, 0]] {
            let len = tour_length(&inst, &Tour::new(order)).unwrap();
            assert!((len - perimeter).abs() < 1e-12);
        }
    }

    #[test]
    fn tour_length_matches_independent_loop() {
        let inst = gen_uniform(Kind::Tsp, 8, 99, &DemandConfig::default()).unwrap();
        let order = vec![3, 1, 7, 0, 5, 2, 6, 4];
        let got = tour_length(&inst, &Tour::new(order.clone())).unwrap();
        // independent pairwise re-summation
        let mut want = 0.0;
        for i in 0..order.len() {
            let (xa, ya) = inst.coords[order[i]];
            let (xb, yb) = inst.coords[order[(i + 1) % order.len()]];
            want += ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn tour_rotation_and_reversal_invariance() {
        let inst = gen_uniform(Kind::Tsp, 9, 5, &DemandConfig::default()).unwrap();
        let base: Vec<usize> = vec![4, 2, 8, 0, 6, 1, 3, 7, 5];
        let len = tour_length(&inst, &Tour::new(base.clone())).unwrap();
        let mut rotated = base.clone();
        rotated.rotate_left(3);
        let mut reversed = base.clone();
        reversed.reverse();
        assert!((tour_length(&inst, &Tour::new(rotated)).unwrap() - len).abs() < 1e-12);
        assert!((tour_length(&inst, &Tour::new(reversed)).unwrap() - len).abs() < 1e-12);
    }

    #[test]
    fn tour_rejects_bad_permutations() {
        let inst = unit_square();
        assert!(tour_length(&inst, &Tour::new(vec![0, 1, 2])).is_err());
        assert!(tour_length(&inst, &Tour::new(vec![0, 1, 2, 2])).is_err());
        assert!(tour_length(&inst, &Tour::new(vec![0, 1, 2, 4])).is_err());
    }

    fn cvrp_toy() -> Instance {
        Instance::new_cvrp(
            "toy",
            vec![(0.0, 0.0), (3.0, 4.0), (1.0, 0.0)],
            vec![0, 2, 3],
            4,
            DistanceKind::ExactEuclidean,
        )
        .unwrap()
    }

    #[test]
    fn route_cost_out_and_back() {
        let inst = Instance::new_cvrp(
            "t",
            vec![(0.0, 0.0), (3.0, 4.0), (0.0, 1.0)],
            vec![0, 1, 1],
            5,
            DistanceKind::ExactEuclidean,
        )
        .unwrap();
        let plan = RoutePlan::new(vec![vec![1], vec![2]]);
        // out-and-back to (3,4) is 10, to (0,1) is 2
        assert_eq!(route_cost(&inst, &plan).unwrap(), 12.0);
    }

    #[test]
    fn zero_customer_instance_rejected() {
        let r = Instance::new_cvrp(
            "deg",
            vec![(0.0, 0.0)],
            vec![0],
            5,
            DistanceKind::ExactEuclidean,
        );
        assert!(r.is_err());
    }

    #[test]
    fn route_cost_matches_naive_resummation() {
        let inst = gen_uniform(Kind::Cvrp, 10, 3, &DemandConfig::default()).unwrap();
        let plan = crate::baselines::sweep(&inst).unwrap();
        let got = route_cost(&inst, &plan).unwrap();
        let mut want = 0.0;
        for route in &plan.routes {
            let mut seq = vec![0usize];
            seq.extend_from_slice(route);
            seq.push(0);
            for w in seq.windows(2) {
                let (xa, ya) = inst.coords[w[0]];
                let (xb, yb) = inst.coords[w[1]];
                want += ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            }
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn plan_validation_catches_errors() {
        let inst = cvrp_toy();
        // missing customer
        assert!(RoutePlan::new(vec![vec![1]]).validate(&inst).is_err());
        // duplicate
        assert!(RoutePlan::new(vec![vec![1, 2], vec![2]]).validate(&inst).is_err());
        // capacity violation
        assert!(RoutePlan::new(vec![vec![1, 2]]).validate(&inst).is_err());
        // ok
        assert!(RoutePlan::new(vec![vec![1], vec![2]]).validate(&inst).is_ok());
    }

    #[test]
    fn gap_values() {
        assert_eq!(gap(7.763, 7.763).unwrap(), 0.0);
        // published table rounds from unrounded objectives; 0.001% band
        assert!((gap(8.513, 7.763).unwrap() - 0.09662).abs() < 1e-5);
        assert!((gap(26.11, 23.12).unwrap() - 0.1293).abs() < 5e-5);
        assert!(gap(1.0, 0.0).is_err());
        assert!(gap(1.0, -2.0).is_err());
    }

    #[test]
    fn gap_monotone_in_objective() {
        let g1 = gap(8.0, 7.0).unwrap();
        let g2 = gap(8.1, 7.0).unwrap();
        assert!(g2 > g1);
    }

    #[test]
    fn infeasible_demand_rejected_at_load() {
        let r = Instance::new_cvrp(
            "bad",
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            vec![0, 7, 1],
            5,
            DistanceKind::ExactEuclidean,
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
