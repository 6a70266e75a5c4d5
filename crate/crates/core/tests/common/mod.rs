//! Shared machinery for integration tests: a seeded generator of valid
//! models, an independent placement-semantics oracle, and a small DOT
//! syntax checker.

pub mod dotcheck;
pub mod generator;
pub mod oracle;
