//! Multi-agent task-oriented dialogue engine.
//!
//! A turn flows through an intent agent, a slot agent, a rule-based
//! database lookup and a response agent. Evaluation metrics and
//! preference-data generation live alongside.

pub mod backend;
pub mod datagen;
pub mod dataset;
pub mod db;
pub mod evaluation;
pub mod intent;
pub mod model;
pub mod orchestrator;
pub mod response;
pub mod slot;
pub mod template;

pub use db::{Database, Entity, Observation};
pub use model::{Action, DialogueState, Domain, Intent, Schemas, SlotMap, SlotSchema, Speaker, Turn};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
