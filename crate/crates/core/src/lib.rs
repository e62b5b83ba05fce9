//! Variational quantum policy iteration on classically simulated circuits.
//!
//! The crate builds finite MDPs, turns policy evaluation into the Bellman
//! linear system `(I − γPΠ) Q = R`, solves it either exactly or with a
//! variational statevector solver, and recovers the greedy policy from
//! sampled measurement counts. The `experiments` module drives the
//! benchmark sweeps (warm start, loss threshold, depth, condition number,
//! sparsity) and the `oracle` module cross-checks every stage against
//! brute-force references.

pub mod decomp;
pub mod envgen;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod numerics;
pub mod oracle;
pub mod qpi;
pub mod seeding;
pub mod sim;
pub mod vls;

pub use error::{Error, Result};
