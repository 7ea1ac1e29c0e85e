//! Iteratively regularized push-pull (IR-Push-Pull) for bilevel distributed
//! optimization over directed networks.
//!
//! Agents hold local pairs `(f_i, g_i)` and cooperatively seek the minimizer of
//! `Σ f_i` over `argmin Σ g_i`. Decision variables are pulled through a
//! row-stochastic matrix `R`, regularized-gradient trackers are pushed through a
//! column-stochastic matrix `C`, and the regularization weight `λ_k` decays
//! inside the iteration.
//!
//! Module map:
//! - [`digraph`]: topologies, root sets, mixing matrices and Perron vectors;
//! - [`problems`]: the local objective families and concrete instances;
//! - [`engine`]: schedules, the synchronous push-pull round and run loops;
//! - [`oracle`]: centralized reference solutions;
//! - [`metrics`]: error metrics, CSV output and rate fitting;
//! - [`harness`]: experiment configs, presets and the `irpp` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod digraph;
pub mod engine;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod problems;
pub mod rng;

pub use digraph::{Digraph, MixingPair, TopologyKind};
pub use engine::{NetworkState, PushPull, Schedule};
pub use problems::ProblemInstance;
