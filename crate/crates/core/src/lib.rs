//! Maximum-likelihood reconstruction of epidemic cascades on contact
//! networks from pooled test results.
//!
//! An independent-cascade outbreak is observed only through group tests:
//! each pool of nodes reports whether it contains at least one infected
//! member. This crate recovers the most likely cascade behind such an
//! observation, in two regimes:
//!
//! * single seed, arbitrary depth: [`reconstruct::approx_cascade`] reduces
//!   the problem to a group Steiner tree whose weight is at most twice the
//!   optimal likelihood cost;
//! * all nodes seeded independently, one round of spread:
//!   [`onehop::one_hop_reconstruct`] solves an LP relaxation and rounds it
//!   with a logarithmic approximation guarantee.
//!
//! Supporting modules: simulation and pooling of ground truth
//! ([`sim`], [`pools`]), likelihood costs ([`cost`]), exhaustive oracles for
//! validation ([`exact`]), and a replicate experiment harness ([`eval`]).

pub mod cost;
pub mod error;
pub mod eval;
pub mod exact;
pub mod graph;
pub mod onehop;
pub mod pools;
pub mod reconstruct;
pub mod sim;
pub mod simplex;
pub mod steiner;

pub use error::{Error, Result};
pub use graph::{compute_costs, generate_ba, generate_gnq, CostModel, EdgeId, Graph, NodeId};
pub use pools::{
    apply_noise, design_random_pools, evaluate_pools, is_consistent, NoiseModel, Observation,
    PoolSet,
};
pub use reconstruct::{approx_cascade, approx_cascade_noisy, ReconstructionResult};
pub use sim::{simulate_one_hop, simulate_single_seed, time_expand, Cascade, TreeCascade};
