//! Online metric bipartite matching with t-feasible duals, plus the tooling to check it.

pub mod analysis;
pub mod bench;
pub mod engine;
pub mod model;
pub mod offline;
pub mod scalar;
pub mod verify;
pub mod wellsep;

pub use engine::{run_online, run_online_with, EngineOptions, PathClass, RmEngine, RunTrace};
pub use model::{distance, matching_cost, validate_instance, Edge, Instance, Matching, Metric, RawInstance, Weight};
pub use scalar::Scalar;
