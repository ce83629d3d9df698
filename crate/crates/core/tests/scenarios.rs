use std::fs;
use std::path::Path;
use std::process::Command;

use dnls::diagnostics::{read_csv, write_csv, CSV_COLUMNS};
use dnls::scenario::io::{read_snapshot, read_trace, snapshot_name, write_snapshot};
use dnls::scenario::{
    convergence_study, parse_config, preset, preset_names, run_scenario, verify, ScenarioConfig,
};
use dnls::{DiagnosticsRecord, Error, Grid, StepperConfig, WaveFunction};
use num_complex::Complex64;
use proptest::prelude::*;

const SHORT_DAMPED: &str = r#"
[grid]
dim = 1
points = [128]
half_width = [8.0]

[model]
lambda = -1.0
sigma = 0.2
p = 5.0
omega = [1.0]

[stepper]
dt = 1e-3
t_end = 0.2
output_every = 1

[initial]
kind = "gaussian"
center = [0.3]
width = [1.0]
momentum = [0.7]
amplitude = 1.5

[output]
snapshot_every = 50
"#;

fn short_config() -> ScenarioConfig {
    parse_config(SHORT_DAMPED).unwrap()
}

fn record_strategy() -> impl Strategy<Value = DiagnosticsRecord> {
    prop::array::uniform13(prop::num::f64::NORMAL | prop::num::f64::ZERO).prop_map(|f| {
        DiagnosticsRecord {
            time: f[0],
            mass: f[1],
            e0: f[2],
            ekappa: f[3],
            ekappa_p: f[4],
            elin: f[5],
            sigma_norm: f[6],
            grad_norm: f[7],
            lp1_norm_pow: f[8],
            lp1_accum: f[9],
            l10_accum: f[10],
            grad_weighted_accum: f[11],
            potential_weighted_accum: f[12],
        }
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(records in prop::collection::vec(record_strategy(), 0..8)) {
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &records).unwrap();
        let back = read_csv(bytes.as_slice(), "mem").unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn snapshot_round_trip_is_bit_identical(
        re in prop::collection::vec(-1e3f64..1e3, 16),
        im in prop::collection::vec(-1e3f64..1e3, 16),
        time in 0.0f64..100.0,
    ) {
        let grid = Grid::new(2, &[8, 16], &[2.0, 3.0]).unwrap();
        let values: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new(re[i % 16] * (i as f64 + 1.0), im[i % 16]))
            .collect();
        let u = WaveFunction::new(grid, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &u, time).unwrap();
        let (back, t) = read_snapshot(&path).unwrap();
        prop_assert_eq!(t.to_bits(), time.to_bits());
        prop_assert_eq!(back.grid(), u.grid());
        for (a, b) in back.values().iter().zip(u.values()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }
}

#[test]
fn config_errors_are_itemized() {
    let bad = SHORT_DAMPED
        .replace("points = [128]", "points = [100]")
        .replace("sigma = 0.2", "sigma = -0.2")
        .replace("dt = 1e-3", "dt = 0.0");
    match parse_config(&bad) {
        Err(Error::Config(items)) => assert!(items.len() >= 3, "{items:?}"),
        other => panic!("expected config errors, got {other:?}"),
    }
    let unknown = SHORT_DAMPED.replace("lambda = -1.0", "lambda = -1.0\nlamda = 2.0");
    assert!(matches!(parse_config(&unknown), Err(Error::Config(_))));
    let linear = SHORT_DAMPED.replace("omega = [1.0]", "omega = [1.0]\nlinear_damping = 0.3");
    match parse_config(&linear) {
        Err(Error::Config(items)) => assert!(items.iter().any(|i| i.contains("sigma = 0"))),
        other => panic!("linear damping with sigma > 0 accepted: {other:?}"),
    }
}

#[test]
fn configs_survive_serialization() {
    let config = short_config();
    assert_eq!(parse_config(&config.to_toml()).unwrap(), config);
    for name in preset_names() {
        let p = preset(name).unwrap().config();
        p.validate().unwrap();
        assert_eq!(parse_config(&p.to_toml()).unwrap(), p, "{name}");
    }
    assert!(matches!(preset("nope"), Err(Error::UnknownPreset { .. })));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config();
    let a = run_scenario(&config, &dir.path().join("a"), None).unwrap();
    let b = run_scenario(&config, &dir.path().join("b"), None).unwrap();
    let csv = &config.output.csv;
    let bytes_a = fs::read(a.directory.join(csv)).unwrap();
    assert_eq!(bytes_a, fs::read(b.directory.join(csv)).unwrap());
    assert_eq!(read_trace(&a.directory.join(csv)).unwrap(), a.trajectory.records);
}

#[test]
fn run_directory_layout_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config();
    let out = run_scenario(&config, dir.path(), None).unwrap();
    for step in [0, 49, 50, 51, 99, 100, 101, 149, 150, 151, 200] {
        assert!(dir.path().join(snapshot_name(step)).exists(), "step {step}");
    }
    let (last, t) = read_snapshot(&dir.path().join(snapshot_name(200))).unwrap();
    assert_eq!(last, out.trajectory.final_state);
    assert_eq!(t, out.trajectory.final_time);
    let report = verify(dir.path()).unwrap();
    assert!(report.passed(), "{report}");
    for row in ["mass_monotone", "mass_balance", "lp1_budget", "continuity", "ekappa_balance"] {
        assert!(report.row(row).is_some(), "missing {row}\n{report}");
    }
}

#[test]
fn ground_state_run_verifies() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&preset("ground_state_check").unwrap().config(), dir.path(), None).unwrap();
    let report = verify(dir.path()).unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn truncated_trace_names_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config();
    run_scenario(&config, dir.path(), None).unwrap();
    let path = dir.path().join(&config.output.csv);
    let text = fs::read_to_string(&path).unwrap();
    let header = CSV_COLUMNS[..11].join(",");
    let rest: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(&path, format!("{header}\n{rest}")).unwrap();
    let message = verify(dir.path()).unwrap_err().to_string();
    assert!(
        message.contains("grad_weighted_accum") && message.contains("potential_weighted_accum"),
        "{message}"
    );
}

#[test]
fn strang_convergence_on_cubic_data() {
    let mut config = preset("cubic_balance").unwrap().config();
    config.stepper = StepperConfig::new(1e-3, 1.0);
    let report = convergence_study(&config, &[4e-3, 2e-3, 1e-3, 5e-4], None).unwrap();
    let order = report.finest_order().unwrap();
    assert!((1.8..=2.2).contains(&order), "{report}");
    assert!(matches!(
        convergence_study(&config, &[4e-3, 2e-3, 1e-3], None),
        Err(Error::InvalidParams(_))
    ));
    assert!(convergence_study(&config, &[4e-3, 3e-3, 2e-3, 1e-3], None).is_err());
}

fn dnls(args: &[&str], root: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dnls"))
        .args(args)
        .env("DNLS_OUTPUT_ROOT", root)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned()
        + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn cli_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let (code, text) = dnls(&["list-presets"], r);
    assert_eq!(code, 0);
    assert!(text.contains("damped_gaussian"));
    assert_eq!(dnls(&["run", "no_such_preset"], r).0, 2);
    assert_eq!(dnls(&["frobnicate"], r).0, 2);
    assert_eq!(dnls(&["--help"], r).0, 0);

    let bad = r.join("bad.toml");
    fs::write(&bad, SHORT_DAMPED.replace("dt = 1e-3", "dt = -1.0")).unwrap();
    let (code, text) = dnls(&["run", bad.to_str().unwrap()], r);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("dt"), "{text}");

    let good = r.join("short.toml");
    fs::write(&good, SHORT_DAMPED).unwrap();
    let (code, text) = dnls(&["run", good.to_str().unwrap()], r);
    assert_eq!(code, 0, "{text}");
    let run_dir = r.join("short");
    let (code, text) = dnls(&["verify", run_dir.to_str().unwrap()], r);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("PASS") && !text.contains("FAIL"), "{text}");

    let (code, _) = dnls(&["verify", r.join("missing").to_str().unwrap()], r);
    assert_eq!(code, 2);
    let (code, text) = dnls(&["convergence", good.to_str().unwrap(), "--dts", "8e-3,4e-3,2e-3,1e-3", "--expect-order", "2"], r);
    assert_eq!(code, 0, "{text}");
    let (code, _) = dnls(&["convergence", good.to_str().unwrap(), "--dts", "8e-3,4e-3,2e-3,1e-3", "--expect-order", "1"], r);
    assert_eq!(code, 1);
}
