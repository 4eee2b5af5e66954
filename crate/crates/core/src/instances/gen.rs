use super::{DistanceKind, Instance, Kind};
use crate::{rng, Error, Result};
use rand::Rng;

/// Synthetic CVRP demand settings. Demands are uniform integers in
/// [low, high]; capacity defaults to the benchmark ladder keyed by customer
/// count unless overridden.
#[derive(Debug, Clone)]
pub struct DemandConfig {
    pub low: u32,
    pub high: u32,
    pub capacity: Option<u32>,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig { low: 1, high: 9, capacity: None }
    }
}

impl DemandConfig {
    /// Benchmark capacity ladder; intermediate sizes use the nearest tier at
    /// or below n.
    pub fn capacity_for(&self, n_customers: usize) -> u32 {
        if let Some(c) = self.capacity {
            return c;
        }
        const LADDER: [(usize, u32); 6] =
            [(20, 30), (50, 40), (100, 50), (200, 80), (500, 100), (1000, 250)];
        let mut cap = LADDER[0].1;
        for (tier, c) in LADDER {
            if n_customers >= tier {
                cap = c;
            }
        }
        cap
    }
}

/// Generate one uniform-[0,1]^2 instance. For CVRP, `n` counts customers;
/// the depot is drawn as an extra node at index 0.
pub fn gen_uniform(kind: Kind, n: usize, seed: u64, cfg: &DemandConfig) -> Result<Instance> {
    match kind {
        Kind::Tsp => {
            if n < 3 {
                return Err(Error::domain(format!("TSP needs n >= 3, got {n}")));
            }
            let mut rng = rng::stream(seed, &[0x715]);
            let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            Instance::new_tsp(format!("tsp{n}-s{seed}"), coords, DistanceKind::ExactEuclidean)
        }
        Kind::Cvrp => {
            if n < 2 {
                return Err(Error::domain(format!("CVRP needs >= 2 customers, got {n}")));
            }
            if cfg.low == 0 || cfg.low > cfg.high {
                return Err(Error::config(format!(
                    "demand range [{}, {}] invalid",
                    cfg.low, cfg.high
                )));
            }
            let mut rng = rng::stream(seed, &[0xc47]);
            let coords: Vec<(f64, f64)> = (0..=n).map(|_| (rng.gen(), rng.gen())).collect();
            let mut demands = vec![0u32];
            demands.extend((0..n).map(|_| rng.gen_range(cfg.low..=cfg.high)));
            let capacity = cfg.capacity_for(n);
            Instance::new_cvrp(
                format!("cvrp{n}-s{seed}"),
                coords,
                demands,
                capacity,
                DistanceKind::ExactEuclidean,
            )
        }
    }
}

/// Generate a corpus with one derived generator stream per instance, so the
/// result is identical regardless of how the loop is scheduled.
pub fn gen_uniform_many(
    kind: Kind,
    n: usize,
    count: usize,
    seed: u64,
    cfg: &DemandConfig,
) -> Result<Vec<Instance>> {
    (0..count)
        .map(|i| {
            let mut inst = gen_uniform(kind, n, derived_seed(seed, i), cfg)?;
            inst.name = format!("{}{}-s{}-i{}", kind.as_str(), n, seed, i);
            Ok(inst)
        })
        .collect()
}

fn derived_seed(seed: u64, index: usize) -> u64 {
    // separate the per-instance streams without touching the user seed space
    seed ^ ((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1)
}
