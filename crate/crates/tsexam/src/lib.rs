//! Benchmark-forging engine for multiple-choice time series reasoning exams.
//!
//! The crate covers three workflows:
//!
//! 1. **Built-in exams** — option-conditioned synthetic question templates
//!    ([`templates`]) over controlled generators ([`synth`]), refined with
//!    item response theory ([`irt`]).
//! 2. **Agent-built exams** — an LLM pipeline ([`agent`]) that writes
//!    declarative question templates ([`dsl`]) against a user dataset
//!    ([`datasets`]) and filters them through staged verification.
//! 3. **Administration** — presenting exams to candidate models as plots or
//!    serialized text ([`gateway`]) and scoring the replies ([`evaluation`]).
//!
//! Everything that generates data is a pure function of its inputs and a
//! 64-bit seed, so whole runs reproduce bit-for-bit.

pub mod agent;
pub mod datasets;
pub mod dsl;
pub mod error;
pub mod evaluation;
pub mod exam;
pub mod gateway;
pub mod irt;
pub mod rng;
pub mod synth;
pub mod templates;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
