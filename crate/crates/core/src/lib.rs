//! Synthetic function-calling query generation, validation, and evaluation.
//!
//! The crate is organized around a batch pipeline:
//!
//! * [`knowledge`] loads the domain knowledge graph and asset-metadata
//!   catalogs that seed every generation strategy.
//! * [`heuristics`] builds queries from rule templates over graph entity
//!   pairs and asset titles.
//! * [`prompts`] holds the prompt-template registry and the text/vision
//!   completion backends, including a deterministic mock for offline runs.
//! * [`router`] performs weighted route selection across all strategies
//!   and adapts the weights so generated output tracks a target
//!   distribution.
//! * [`validator`] filters candidates for length, realism, and duplicate
//!   violations.
//! * [`metrics`] computes corpus diversity analytics and distribution
//!   divergence against a reference.
//! * [`evaluator`] scores function-call predictions against a golden
//!   dataset and runs paired significance tests.

pub mod evaluator;
pub mod heuristics;
pub mod knowledge;
pub mod metrics;
pub mod prompts;
pub mod record;
pub mod rng;
pub mod router;
pub mod text;
pub mod validator;

pub use record::{ContentType, FunctionKind, GeneratorKind, Provenance, QueryRecord};
pub use rng::SeededRng;
