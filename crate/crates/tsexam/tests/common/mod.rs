//! Shared test support: independent oracles and the per-template checks.
//!
//! Everything here is deliberately re-derived from first principles (closed
//! forms, full DP tables, textbook regressions) rather than calling into the
//! library code paths it is used to check.

#![allow(dead_code)]

pub mod fixtures;
pub mod irt_sim;
pub mod oracles;
pub mod template_checks;
