//! Python bindings: run presets or scenario files, verify run directories,
//! read traces, and evaluate the closed-form local substep.
//!
//! Long runs release the GIL.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dnls::diagnostics::CSV_COLUMNS;
use dnls::scenario::io::read_trace as read_trace_file;
use dnls::scenario::run::status_label;
use dnls::scenario::{convergence_study, parse_config, preset, preset_names, run_scenario};
use dnls::{DiagnosticsRecord, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::UnknownPreset { .. }
        | Error::InvalidParams(_)
        | Error::InvalidGrid(_)
        | Error::Format { .. } => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Trace records as one list per CSV column.
fn columns(records: &[DiagnosticsRecord]) -> BTreeMap<&'static str, Vec<f64>> {
    let mut out: BTreeMap<&'static str, Vec<f64>> = CSV_COLUMNS
        .iter()
        .map(|c| (*c, Vec::with_capacity(records.len())))
        .collect();
    for r in records {
        let row = [
            r.time,
            r.mass,
            r.e0,
            r.ekappa,
            r.ekappa_p,
            r.elin,
            r.sigma_norm,
            r.grad_norm,
            r.lp1_norm_pow,
            r.lp1_accum,
            r.l10_accum,
            r.grad_weighted_accum,
            r.potential_weighted_accum,
        ];
        for (name, v) in CSV_COLUMNS.iter().zip(row) {
            out.get_mut(name).expect("every column is present").push(v);
        }
    }
    out
}

fn run_summary<'py>(
    py: Python<'py>,
    config: dnls::scenario::ScenarioConfig,
    directory: PathBuf,
    base: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let out = py
        .allow_threads(|| run_scenario(&config, &directory, base.as_deref()))
        .map_err(to_py)?;
    let tr = &out.trajectory;
    let d = PyDict::new_bound(py);
    d.set_item("status", status_label(tr.status))?;
    d.set_item("completed", tr.status == dnls::Status::Completed)?;
    d.set_item("final_time", tr.final_time)?;
    d.set_item("steps", tr.steps)?;
    d.set_item("directory", out.directory.display().to_string())?;
    d.set_item("warnings", tr.warnings.clone())?;
    d.set_item("trace", columns(&tr.records))?;
    Ok(d)
}

/// Names of the built-in scenarios.
#[pyfunction]
fn list_presets() -> Vec<&'static str> {
    preset_names()
}

/// Runs a preset, writing its output under `directory`.
#[pyfunction]
fn run_preset<'py>(py: Python<'py>, name: &str, directory: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let config = preset(name).map_err(to_py)?.config();
    run_summary(py, config, directory, None)
}

/// Runs a scenario given as TOML text. A relative initial-state path is
/// resolved against `base`.
#[pyfunction]
#[pyo3(signature = (text, directory, base=None))]
fn run_config<'py>(
    py: Python<'py>,
    text: &str,
    directory: PathBuf,
    base: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = parse_config(text).map_err(to_py)?;
    run_summary(py, config, directory, base)
}

/// Re-checks a run directory. Returns `(passed, rows)` where each row is a
/// dict with `name`, `value`, `tolerance`, `passed` and `note`.
#[pyfunction]
fn verify<'py>(py: Python<'py>, directory: PathBuf) -> PyResult<(bool, Vec<Bound<'py, PyDict>>)> {
    let report = py
        .allow_threads(|| dnls::scenario::verify(&directory))
        .map_err(to_py)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            d.set_item("name", &r.name)?;
            d.set_item("value", r.value)?;
            d.set_item("tolerance", r.tolerance)?;
            d.set_item("passed", r.passed)?;
            d.set_item("note", &r.note)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((report.passed(), rows))
}

/// Reads a CSV trace into a dict of columns.
#[pyfunction]
fn read_trace(path: PathBuf) -> PyResult<BTreeMap<&'static str, Vec<f64>>> {
    Ok(columns(&read_trace_file(&path).map_err(to_py)?))
}

/// Temporal self-convergence of a preset. Returns `(dts, errors, orders)`.
#[pyfunction]
fn convergence(
    py: Python<'_>,
    name: &str,
    dts: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Option<f64>>)> {
    let config = preset(name).map_err(to_py)?.config();
    let report = py
        .allow_threads(|| convergence_study(&config, &dts, None))
        .map_err(to_py)?;
    Ok((report.dts, report.errors, report.orders))
}

/// Closed-form pointwise damping substep: `(ρ(dt), ∫₀^{dt} ρ)`.
#[pyfunction]
fn local_substep(rho0: f64, sigma: f64, p: f64, dt: f64) -> (f64, f64) {
    dnls::propagator::local_density_and_phase(rho0, sigma, p, dt)
}

/// RK4 reference for the same substep.
#[pyfunction]
fn ode_substep_oracle(rho0: f64, sigma: f64, p: f64, dt: f64) -> (f64, f64) {
    dnls::oracle::ode_substep_oracle(rho0, sigma, p, dt)
}

#[pymodule]
fn dnls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CSV_COLUMNS", CSV_COLUMNS.to_vec())?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(read_trace, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(local_substep, m)?)?;
    m.add_function(wrap_pyfunction!(ode_substep_oracle, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_follow_the_csv_layout() {
        let r = DiagnosticsRecord {
            time: 0.5,
            mass: 2.0,
            potential_weighted_accum: 7.0,
            ..Default::default()
        };
        let c = columns(&[r, r]);
        assert_eq!(c.len(), CSV_COLUMNS.len());
        assert_eq!(c["time"], vec![0.5, 0.5]);
        assert_eq!(c["mass"], vec![2.0, 2.0]);
        assert_eq!(c["potential_weighted_accum"], vec![7.0, 7.0]);
        assert!(columns(&[])["e0"].is_empty());
    }
}
