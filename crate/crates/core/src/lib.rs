//! Simulation of a two-party quantum private comparison protocol built on a
//! six-qubit entangled state, together with a sum-based repair, a passive
//! and an active key-recovery attack, and a seeded experiment engine.
//!
//! Everything is deterministic given a seed: see [`rng`].

pub mod analysis;
pub mod attacks;
pub mod canonical;
pub mod channel;
pub mod encoding;
pub mod error;
pub mod keys;
pub mod protocol;
pub mod quantum;
pub mod rng;

pub use analysis::{
    exact_false_equal, monte_carlo, EveKind, ExperimentKind, ExperimentReport, ExperimentSpec,
    Tally,
};
pub use attacks::{
    active_attack, passive_attack, passive_attack_run, AttackKind, AttackOutcome, AttackReport,
};
pub use channel::{AbortReason, EveModel, Interceptor};
pub use encoding::{bit_sum, from_groups, to_groups, BitPair, GroupSequence, SecretInput};
pub use error::{Error, Result};
pub use keys::{KeyRing, Party};
pub use protocol::{run_protocol, ProtocolConfig, Transcript, Variant, Verdict};
pub use quantum::{build_upsilon, BellCode, StateVector};
