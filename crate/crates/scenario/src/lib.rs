//! Deterministic scenario runner for the hashrep watchtower market.
//!
//! Scenarios are plain-text scripts (see [`script`]); [`world::run`] plays
//! one against a fresh chain, storage nodes and market, and returns a
//! [`report::RunReport`] whose expectations decide pass or fail.

pub mod corpus;
pub mod records;
pub mod report;
pub mod script;
pub mod storesim;
pub mod sweep;
pub mod world;

pub use report::RunReport;
pub use script::{Scenario, ScriptError};
pub use world::{run, run_with_seed};
