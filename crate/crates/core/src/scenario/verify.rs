//! Re-checks a finished run from its files alone.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::diagnostics::{
    continuity_residual, decay_report, ekappa_balance_residual, mass_balance_residual,
    DiagnosticsRecord,
};
use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::model::{sigma_norm_bound, space_time_bounds, ModelParams};
use crate::scenario::config::{parse_config, ScenarioConfig};
use crate::scenario::io::{parse_snapshot_name, read_snapshot, read_trace};
use crate::scenario::run::SCENARIO_FILE;

pub const MASS_BALANCE_TOLERANCE: f64 = 1e-3;
pub const EKAPPA_BALANCE_TOLERANCE: f64 = 1e-2;
pub const CONTINUITY_TOLERANCE: f64 = 1e-4;
/// Relative slack on inequalities that hold exactly in the continuum.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    /// Measured value (a residual or a bound excess, depending on the row).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    fn push(&mut self, name: &str, value: f64, tolerance: f64, passed: bool, note: impl Into<String>) {
        self.rows.push(CheckRow {
            name: name.into(),
            value,
            tolerance,
            passed,
            note: note.into(),
        });
    }

    /// A residual row: passes when `value <= tolerance`.
    fn residual(&mut self, name: &str, value: f64, tolerance: f64, note: impl Into<String>) {
        self.push(name, value, tolerance, value <= tolerance, note);
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>12} {:>12}  {:<6} note", "check", "value", "tolerance", "result")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:>12.4e} {:>12.4e}  {:<6} {}",
                r.name,
                r.value,
                r.tolerance,
                if r.passed { "PASS" } else { "FAIL" },
                r.note
            )?;
        }
        Ok(())
    }
}

/// Everything `verify` reads from a run directory.
pub struct RunFiles {
    pub config: ScenarioConfig,
    pub records: Vec<DiagnosticsRecord>,
    /// Snapshots by step index, with their times.
    pub snapshots: BTreeMap<usize, (f64, WaveFunction)>,
}

pub fn load_run(dir: &Path) -> Result<RunFiles> {
    let mut problems = Vec::new();
    let config = fs::read_to_string(dir.join(SCENARIO_FILE))
        .map_err(Error::from)
        .and_then(|text| parse_config(&text));
    let config = match config {
        Ok(c) => Some(c),
        Err(e) => {
            problems.push(format!("{}: {e}", dir.join(SCENARIO_FILE).display()));
            None
        }
    };
    let csv_name = config
        .as_ref()
        .map(|c| c.output.csv.clone())
        .unwrap_or_else(|| "diagnostics.csv".into());
    let records = match read_trace(&dir.join(&csv_name)) {
        Ok(r) => Some(r),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    };
    let mut snapshots = BTreeMap::new();
    let mut names: Vec<(usize, std::path::PathBuf)> = Vec::new();
    match fs::read_dir(dir) {
        Ok(entries) => {
            for entry in entries.flatten() {
                let name = entry.file_name();
                if let Some(step) = name.to_str().and_then(parse_snapshot_name) {
                    names.push((step, entry.path()));
                }
            }
        }
        Err(e) => problems.push(format!("{}: {e}", dir.display())),
    }
    for (step, path) in names {
        match read_snapshot(&path) {
            Ok((u, t)) => {
                snapshots.insert(step, (t, u));
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    match (config, records, problems.is_empty()) {
        (Some(config), Some(records), true) => Ok(RunFiles {
            config,
            records,
            snapshots,
        }),
        _ => Err(Error::Config(problems)),
    }
}

/// Consecutive-step runs of snapshots, e.g. the windows around cadence points.
fn consecutive_groups(snapshots: &BTreeMap<usize, (f64, WaveFunction)>) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &k in snapshots.keys() {
        match groups.last_mut() {
            Some(g) if *g.last().unwrap() + 1 == k => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}

pub fn verify_run(run: &RunFiles) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let params: &ModelParams = &run.config.model;
    let records = &run.records;
    let sigma = params.sigma;
    let nonlinear = run.config.linear_damping.is_none();
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::InsufficientData("the trace has no records".into())),
    };

    let decay = decay_report(records)?;
    report.push(
        "mass_monotone",
        decay.final_fraction,
        0.0,
        decay.monotone,
        "value is M(t_end)/M(0)",
    );

    if nonlinear && records.len() >= 3 {
        let r = mass_balance_residual(records, params)?;
        report.residual("mass_balance", r, MASS_BALANCE_TOLERANCE, "dM/dt + 2 sigma |u|_{p+1}^{p+1}");
    }

    if nonlinear && sigma > 0.0 {
        let budget = (first.mass - last.mass) / (2.0 * sigma);
        let excess = last.lp1_accum / budget.max(f64::MIN_POSITIVE) - 1.0;
        report.push(
            "lp1_budget",
            excess,
            BOUND_SLACK,
            last.lp1_accum <= budget * (1.0 + BOUND_SLACK),
            "int |u|^{p+1} / ((M(0) - M)/(2 sigma)) - 1",
        );
    }

    let groups = consecutive_groups(&run.snapshots);
    if nonlinear {
        let mut worst = 0.0f64;
        let mut pairs = 0;
        for g in &groups {
            for w in g.windows(2) {
                let (t0, u0) = &run.snapshots[&w[0]];
                let (t1, u1) = &run.snapshots[&w[1]];
                worst = worst.max(continuity_residual(u0, u1, params, t1 - t0)?);
                pairs += 1;
            }
        }
        if pairs > 0 {
            report.residual("continuity", worst, CONTINUITY_TOLERANCE, format!("{pairs} snapshot pairs"));
        }
    }

    if nonlinear && sigma > 0.0 && params.p == 5.0 {
        let mut worst = 0.0f64;
        let mut windows = 0;
        for g in &groups {
            for w in g.windows(3) {
                let window: Vec<(f64, WaveFunction)> =
                    w.iter().map(|k| run.snapshots[k].clone()).collect();
                worst = worst.max(ekappa_balance_residual(&window, params)?.residual);
                windows += 1;
            }
        }
        if windows > 0 {
            report.residual("ekappa_balance", worst, EKAPPA_BALANCE_TOLERANCE, format!("{windows} windows"));
        }
    }

    if nonlinear && sigma > 0.0 && params.p == 5.0 && params.kappa_admissible() {
        let c2 = params.interpolation_constants().c2;
        let scale = first.ekappa.abs().max(1.0);
        let worst = records
            .iter()
            .map(|r| (r.ekappa - first.ekappa - c2 * r.lp1_accum) / scale)
            .fold(f64::NEG_INFINITY, f64::max);
        report.push(
            "ekappa_budget",
            worst,
            BOUND_SLACK,
            worst <= BOUND_SLACK,
            "max (E_k(t) - E_k(0) - C2 int |u|^6) / |E_k(0)|",
        );
    }

    let u0 = run.snapshots.get(&0).map(|(_, u)| u);
    if let (true, Some(u0)) = (nonlinear, u0) {
        if let Some(b) = space_time_bounds(params, u0)? {
            let checks = [
                ("bound_l10", last.l10_accum, b.l10),
                ("bound_grad_weighted", last.grad_weighted_accum, b.grad_weighted),
                ("bound_potential", last.potential_weighted_accum, b.potential_weighted),
                ("bound_lp1", last.lp1_accum, b.lp1),
            ];
            for (name, value, bound) in checks {
                let ratio = value / bound.max(f64::MIN_POSITIVE);
                report.push(name, ratio, 1.0 + BOUND_SLACK, ratio <= 1.0 + BOUND_SLACK, "accumulated / bound");
            }
        }
        if let Some(bound) = sigma_norm_bound(params, u0)? {
            let peak = records.iter().map(|r| r.sigma_norm).fold(0.0, f64::max);
            let ratio = peak / bound;
            report.push("sigma_norm_bound", ratio, 1.0 + BOUND_SLACK, ratio <= 1.0 + BOUND_SLACK, "sup ||u||_Sigma / bound");
        }
    }

    if nonlinear && params.p == 3.0 && sigma >= (-params.lambda).max(0.0) && sigma > 0.0 {
        let scale = first.elin.abs().max(f64::MIN_POSITIVE);
        let worst = records
            .iter()
            .map(|r| (r.elin - first.elin) / scale)
            .fold(f64::NEG_INFINITY, f64::max);
        report.push("elin_nonincreasing", worst, BOUND_SLACK, worst <= BOUND_SLACK, "max (E_lin(t) - E_lin(0)) / |E_lin(0)|");
    }
    Ok(report)
}

pub fn verify(dir: &Path) -> Result<VerifyReport> {
    verify_run(&load_run(dir)?)
}

/// Ratios `coarse / fine` of the residual rows present in both reports.
pub fn residual_ratios(coarse: &VerifyReport, fine: &VerifyReport) -> Vec<(String, f64)> {
    ["mass_balance", "continuity", "ekappa_balance"]
        .iter()
        .filter_map(|name| {
            let a = coarse.row(name)?;
            let b = fine.row(name)?;
            Some((name.to_string(), a.value / b.value))
        })
        .collect()
}
