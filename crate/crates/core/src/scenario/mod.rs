//! Scenario files, presets, runs and their after-the-fact checks.

pub mod config;
pub mod convergence;
pub mod io;
pub mod presets;
pub mod run;
pub mod verify;

pub use config::{parse_config, InitialCondition, OutputSpec, ScenarioConfig};
pub use convergence::{convergence_study, ConvergenceReport};
pub use presets::{preset, preset_names, PRESETS};
pub use run::{run_scenario, RunOutput};
pub use verify::{verify, VerifyReport};
