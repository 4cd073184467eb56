//! Deterministic discrete-event simulation of permissioned blockchains
//! running over wireless community mesh networks.
//!
//! [`topology`] models the mesh, [`placement`] decides which nodes host the
//! ledger roles, and [`hlf`] / [`poa`] drive transactions through an
//! execute-order-validate pipeline or a round-robin sealing chain on top of
//! the [`sim`] engine. [`experiment`] ties it together from a TOML config.
//!
//! Geometry and link metrics are generic over [`scalar::Scalar`] (`f32` or
//! `f64`); simulated time and balances are integers.

pub mod digest;
pub mod scalar;
pub mod topology;
pub mod placement;
pub mod sim;
pub mod compensation;
pub mod hlf;
pub mod metrics;
pub mod workload;
pub mod poa;
pub mod experiment;

/// Double-precision topology used by the CLI and the experiment runner.
pub type Mesh = topology::Topology<f64>;
/// Single-precision topology.
pub type Mesh32 = topology::Topology<f32>;
