//! swarmchain — blockchain-mediated collaboration for heterogeneous robot
//! swarms, as a deterministic protocol library and simulator.
//!
//! Robots in an ad hoc swarm differ in sensors and compute, and none of them
//! wants to publish a spec sheet. This crate implements a scheme where the
//! blockchain itself measures what matters:
//!
//! * periodic fixed-difficulty PoW puzzles (full *and* partial solutions)
//!   give every peer an online estimate of each node's available compute
//!   ([`pow`], [`estimator`]);
//! * data exchanges commit a small characterized sample — a data stamp — on
//!   chain, and peers that visit the same place cross-validate them into a
//!   per-node quality score and a validation graph that exposes collusion
//!   ([`quality`]);
//! * a replicated optimizer turns quality scores, compute estimates and link
//!   bandwidth into the epoch's exchange plan ([`allocation`]);
//! * a token ledger with demurrage prices carriage and starves free-riders
//!   ([`chain`]);
//! * a seeded discrete-event world runs the whole epoch protocol end to end
//!   ([`sim`]).
//!
//! # Where to start
//!
//! Each capability has a runnable walkthrough under `examples/`:
//!
//! ```bash
//! cargo run --example fee_schedule      # ledger, fees, demurrage
//! cargo run --example mine_and_verify   # puzzles, partial proofs
//! cargo run --example estimate_compute  # proof history -> C-hat, D_max
//! cargo run --example density_models    # lidar density calibration
//! cargo run --example stamp_validation  # comparison, Q, coalitions
//! cargo run --example plan_exchanges    # the exchange optimizer
//! cargo run --example run_epochs        # a full simulated swarm
//! ```
//!
//! The `swarmchain` binary is a thin front end over [`commands`]: `run` a
//! scenario file, `calibrate` density models from CSV, `bench` live hashing.

pub mod allocation;
pub mod chain;
pub mod commands;
pub mod estimator;
pub mod pow;
pub mod quality;
pub mod sim;
pub mod wire;

use std::fmt;

/// A node's identity on the network.
///
/// Identity is established at admission time by the join proof of work that
/// binds this identifier; there are no signatures or key material.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}
