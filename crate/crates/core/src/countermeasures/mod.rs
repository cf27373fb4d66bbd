//! Countermeasure games and their composition.

mod compose;
mod overwrite;
mod spec;

pub use compose::{aslr_game, canary_bytes, canary_game, compose, isr_game, pointguard_game, ProtectedGame};
pub use overwrite::ow;
pub use spec::{CountermeasureSpec, Stage, StageKind, DEFAULT_CANARY_WIDTH};
