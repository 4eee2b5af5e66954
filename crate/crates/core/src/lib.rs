//! drhg: a destroy-and-repair solver toolkit for routing problems.
//!
//! The toolkit reduces a partially destroyed tour to a small hyper-graph
//! (isolated nodes plus fixed segments kept as hyper-edges), repairs the
//! hyper-graph with a learned attention policy or an exact oracle, and
//! restores the repaired order to a full solution. Modules:
//!
//! - [`instances`]: problem instances, distance kernels, parsers, metrics
//! - [`baselines`]: construction heuristics and exact/near-exact labelers
//! - [`hypergraph`]: destruction, sample-size alignment, reduction, restore
//! - [`numcore`]: dense tensors with reverse-mode differentiation
//! - [`model`]: the attention repair policy
//! - [`training`]: supervised training loop and checkpoints
//! - [`search`]: the iterative destroy-and-repair loop and evaluation

pub mod baselines;
pub mod error;
pub mod hypergraph;
pub mod instances;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod search;
pub mod training;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
