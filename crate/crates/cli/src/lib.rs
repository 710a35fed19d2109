//! Scenario runner for the `sonoloc` pipeline: JSON configuration, the
//! end-to-end scenario, the weighting comparison and result files.

pub mod config;
pub mod output;
pub mod scenario;

pub use config::{FieldError, Geometry, Preset, ScenarioConfig, ValidationErrors};
pub use scenario::{compare_weighting, run_scenario, ScenarioResult, WeightingComparison};
