//! Symbolic secrecy analysis under perfect cryptography.
//!
//! Hash is one-way, `senc` opens only with its key, and a scalar product
//! is built only from known scalars over a known point. The point-to-bytes
//! map and the key derivation are not modelled separately: a point is used
//! directly as an xor operand and as an encryption key.

mod knowledge;
mod scenarios;
mod term;

pub use knowledge::{derivable, saturate, verify_tree, Derivation, KnowledgeSet, Limits, Rule, Step, Verdict};
pub use scenarios::{
    run_secrecy_scenario, run_secrecy_scenario_with, DyError, LogEntry, SecrecyInfo, SecrecyReport, TargetReport,
    SCENARIOS,
};
pub use term::{normalize, AtomKind, Term};
