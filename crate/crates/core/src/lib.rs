//! Asynchronous averaging consensus on dynamic graphs where the updating
//! agent's neighborhood may only contract.
//!
//! At each step one agent, drawn from a fixed selection distribution,
//! replaces its opinion by the mean over its closed neighborhood. Each edge
//! incident to it is then removed with probability `q_shrink`, and every pair
//! not involving it toggles with probability `q_flip`.
//!
//! - [`rng`]: reproducible, splittable random streams.
//! - [`graph`]: the evolving graph, its Laplacian spectrum and Cheeger constant.
//! - [`dynamics`]: the update rule and the run loop.
//! - [`diagnostics`]: dissent drop, component deltas, spectral bounds.
//! - [`harness`]: configs, sweeps and output files.
//! - [`verify`]: the built-in property suite.

pub mod diagnostics;
pub mod dynamics;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod verify;

pub use diagnostics::CheckResult;
pub use dynamics::{AgentStates, Mode, RunOptions, SelectionDistribution, SimParams, WorldState};
pub use graph::{DynamicGraph, FlipMethod};
pub use harness::{ExperimentConfig, RunRecord, SweepSummary};
pub use rng::RngStream;
