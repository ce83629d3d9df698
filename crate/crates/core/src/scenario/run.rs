//! Executing scenarios and writing their output directories.
//!
//! A run directory holds `scenario.toml` (the resolved configuration), the
//! CSV trace, `summary.toml` and `snap_NNNNNN.bin` snapshots: the initial
//! and final states plus three consecutive steps around every multiple of
//! `output.snapshot_every`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::Observation;
use crate::error::Result;
use crate::field::WaveFunction;
use crate::propagator::{evolve, evolve_linear_damping, Status, Trajectory};
use crate::scenario::config::ScenarioConfig;
use crate::scenario::io::{snapshot_name, write_snapshot, write_trace};

/// Environment variable overriding the default output root `runs`.
pub const OUTPUT_ROOT_VAR: &str = "DNLS_OUTPUT_ROOT";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const SUMMARY_FILE: &str = "summary.toml";

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub directory: PathBuf,
}

#[derive(Serialize)]
struct Summary {
    status: String,
    final_time: f64,
    steps: usize,
    warnings: Vec<String>,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Where a scenario named `name` writes by default.
pub fn default_directory(config: &ScenarioConfig, name: &str) -> PathBuf {
    config
        .output
        .directory
        .clone()
        .unwrap_or_else(|| output_root().join(name))
}

/// Whether step `k` of `n` belongs to a snapshot window.
pub fn snapshot_step(k: usize, n: usize, every: usize) -> bool {
    if k == 0 || k == n {
        return true;
    }
    if every == 0 {
        return false;
    }
    // Window centers are the positive multiples c of `every` with c + 1 <= n.
    (k.saturating_sub(1)..=k + 1).any(|c| c > 0 && c % every == 0 && c < n)
}

pub fn status_label(status: Status) -> String {
    match status {
        Status::Completed => "completed".into(),
        Status::BlowUpDetected(t) => format!("blow-up detected at t = {t}"),
        Status::NumericalFailure(t) => format!("numerical failure at t = {t}"),
    }
}

/// Runs `config`, writing everything under `directory`. `base` resolves a
/// relative initial-state path.
pub fn run_scenario(
    config: &ScenarioConfig,
    directory: &Path,
    base: Option<&Path>,
) -> Result<RunOutput> {
    config.validate()?;
    let u0 = config.initial_state(base)?;
    fs::create_dir_all(directory)?;
    fs::write(directory.join(SCENARIO_FILE), config.to_toml())?;

    let n = config.stepper.step_count();
    let every = config.output.snapshot_every;
    let mut last_written = None;
    let mut hook = |k: usize, obs: &Observation, u: &WaveFunction| {
        if snapshot_step(k, n, every) {
            write_snapshot(&directory.join(snapshot_name(k)), u, obs.record.time)?;
            last_written = Some(k);
        }
        Ok(())
    };
    let trajectory = match config.linear_damping {
        Some(rate) => evolve_linear_damping(&u0, &config.model, rate, &config.stepper, &mut hook)?,
        None => evolve(&u0, &config.model, &config.stepper, &mut hook)?,
    };

    // An early stop leaves the last state unwritten.
    let (final_time, steps) = (trajectory.final_time, trajectory.steps);
    if trajectory.status != Status::Completed && last_written != Some(steps) {
        write_snapshot(&directory.join(snapshot_name(steps)), &trajectory.final_state, final_time)?;
    }
    write_trace(&directory.join(&config.output.csv), &trajectory.records)?;
    let summary = Summary {
        status: status_label(trajectory.status),
        final_time,
        steps,
        warnings: trajectory.warnings.clone(),
    };
    fs::write(
        directory.join(SUMMARY_FILE),
        toml::to_string(&summary).expect("summaries always serialize"),
    )?;
    Ok(RunOutput {
        trajectory,
        directory: directory.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_windows() {
        let picked: Vec<usize> = (0..=20).filter(|&k| snapshot_step(k, 20, 5)).collect();
        assert_eq!(picked, vec![0, 4, 5, 6, 9, 10, 11, 14, 15, 16, 20]);
        let sparse: Vec<usize> = (0..=7).filter(|&k| snapshot_step(k, 7, 0)).collect();
        assert_eq!(sparse, vec![0, 7]);
        // The window at 20 would need step 21.
        assert!(!snapshot_step(19, 20, 10));
    }
}
