//! Probabilistic exploit mitigations as games.
//!
//! Stack canaries, ASLR, PointGuard and instruction-set randomization are
//! modelled as keyed games over an abstract victim program. Attacker
//! strategies query those games (in process or over TCP), closed-form bounds
//! give the probability of a successful exploit, and the simulation harness
//! checks the one against the other.

pub mod attackers;
pub mod bounds;
pub mod countermeasures;
pub mod error;
pub mod game;
pub mod mixing;
pub mod montecarlo;
pub mod net;
pub mod numfmt;
pub mod permutation;
pub mod replica;
pub mod session;

pub use countermeasures::{compose, CountermeasureSpec, ProtectedGame};
pub use error::{ExperimentError, GameError, OracleError};
pub use game::{
    is_success, run_ideal, run_unprotected, AttackInput, Game, KeyMaterial, KeyPolicy, Observation, Overflow, ProgramModel,
};
