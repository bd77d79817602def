//! Solvers for long-term cloud portfolio allocation, modeled as a stochastic
//! temporal bin-packing problem: applications with normally distributed
//! resource demands and fixed lifespans are assigned to instances purchased
//! from reserved, on-demand and spot markets, minimizing total cost under a
//! per-slot chance constraint on capacity.
//!
//! The crate ships two solvers, a greedy four-stage heuristic ([`erich`])
//! and a grouping genetic algorithm ([`georg`]), plus a scenario generator
//! ([`datagen`]) and ground-truth utilities ([`oracle`]).

pub mod datagen;
pub mod erich;
pub mod error;
pub mod georg;
pub mod model;
pub mod oracle;

pub(crate) mod packing;

pub use error::Error;
pub use model::{
    AllocatedInstance, AppId, Application, DemandDistribution, InstanceId, InstanceType, Market,
    Portfolio, ProblemInstance, TypeId,
};
