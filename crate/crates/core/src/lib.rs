//! Gossip-based federated variational learning and unlearning.
//!
//! A single token carrying a Beta natural parameter performs a
//! Metropolis-Hastings random walk over an undirected graph of agents. Each
//! scheduled agent refines the global variational posterior with its local
//! data and keeps its own contribution as a local factor, so it can later be
//! removed by subtraction.
//!
//! - [`expfam`]: Beta family in natural coordinates, likelihood models.
//! - [`graph`]: topologies, the scheduler, cover and hitting times.
//! - [`protocol`]: the learning / unlearning engine.
//! - [`oracle`]: exact and grid reference posteriors, KL to them.
//! - [`experiment`]: seeded multi-run harness and CSV output.

pub mod error;
pub mod experiment;
pub mod expfam;
pub mod graph;
pub mod oracle;
pub mod protocol;

pub use error::{Error, Result};
pub use expfam::{LikelihoodModel, NaturalParam, Objective};
pub use graph::{Topology, TopologyKind};
pub use protocol::{AgentState, Engine, GlobalState, ProtocolConfig, RunRecord, UpdatePath};
