//! Online scheduling with job rejection on restricted-assignment machines.
//!
//! The crate simulates online algorithms for load balancing and (weighted)
//! maximum flow-time that may reject a small fraction of jobs, together with
//! brute-force offline oracles, dual lower-bound certificates and adaptive
//! adversaries that probe the algorithms' worst cases.

pub mod adversary;
pub mod engine;
pub mod error;
pub mod flowtime;
pub mod gen;
pub mod loadbalance;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rational;

pub use error::{Error, Result};
pub use model::{Instance, Job, JobId, Params, ProblemKind};
pub use rational::Rational;
