use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};

use dnls::scenario::run::{default_directory, status_label};
use dnls::scenario::verify::{load_run, residual_ratios, verify_run};
use dnls::scenario::{
    convergence_study, parse_config, preset, run_scenario, ScenarioConfig, PRESETS,
};
use dnls::Error;

/// Damped trapped NLS simulations.
///
/// Output goes under `runs/` unless DNLS_OUTPUT_ROOT or a scenario's
/// `output.directory` says otherwise.
#[derive(Parser)]
#[command(name = "dnls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files or presets; several targets run in parallel.
    Run {
        #[arg(required = true)]
        targets: Vec<String>,
        /// Output directory (single target only).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Re-check run directories. With two directories whose steps differ by
    /// a factor of two, residual ratios are reported as well.
    Verify {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Temporal self-convergence over halving step sizes.
    Convergence {
        target: String,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        /// Fail unless the finest observed order is within 0.2 of this.
        #[arg(long)]
        expect_order: Option<f64>,
    },
    /// List the built-in presets.
    ListPresets,
}

const USAGE_ERROR: u8 = 2;
const CHECK_FAILURE: u8 = 1;

struct Target {
    name: String,
    config: ScenarioConfig,
    base: Option<PathBuf>,
}

fn resolve(target: &str) -> Result<Target, Error> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let config = parse_config(&text).map_err(|e| match e {
            Error::Config(items) => Error::Config(
                items.into_iter().map(|i| format!("{target}: {i}")).collect(),
            ),
            other => other,
        })?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario")
            .to_string();
        return Ok(Target {
            name,
            config,
            base: path.parent().map(Path::to_path_buf),
        });
    }
    let p = preset(target)?;
    Ok(Target {
        name: p.name.into(),
        config: p.config(),
        base: None,
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownPreset { .. } | Error::InvalidParams(_) | Error::InvalidGrid(_) => {
            USAGE_ERROR
        }
        _ => CHECK_FAILURE,
    }
}

fn run(targets: &[String], output: Option<PathBuf>) -> u8 {
    if output.is_some() && targets.len() > 1 {
        eprintln!("error: --output needs exactly one target");
        return USAGE_ERROR;
    }
    let mut resolved = Vec::new();
    for t in targets {
        match resolve(t) {
            Ok(r) => resolved.push(r),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
        }
    }
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = resolved
            .iter()
            .map(|t| {
                let dir = output
                    .clone()
                    .unwrap_or_else(|| default_directory(&t.config, &t.name));
                s.spawn(move || (t, run_scenario(&t.config, &dir, t.base.as_deref())))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut code = 0;
    for (t, result) in results {
        match result {
            Ok(out) => {
                let tr = &out.trajectory;
                println!(
                    "{}: {} after {} steps (t = {}), output in {}",
                    t.name,
                    status_label(tr.status),
                    tr.steps,
                    tr.final_time,
                    out.directory.display()
                );
                for w in &tr.warnings {
                    println!("  warning: {w}");
                }
            }
            Err(e) => {
                eprintln!("{}: error: {e}", t.name);
                code = code.max(exit_code(&e));
            }
        }
    }
    code
}

fn verify(dirs: &[PathBuf]) -> u8 {
    let mut code = 0;
    let mut loaded = Vec::new();
    for dir in dirs {
        let report = load_run(dir).and_then(|run| {
            let report = verify_run(&run)?;
            Ok((run.config.stepper.dt, report))
        });
        match report {
            Ok((dt, report)) => {
                println!("{} (dt = {dt}):\n{report}", dir.display());
                if !report.passed() {
                    code = code.max(CHECK_FAILURE);
                }
                loaded.push((dt, report));
            }
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                code = USAGE_ERROR;
            }
        }
    }
    if let [(dt_a, a), (dt_b, b)] = loaded.as_slice() {
        let (coarse, fine, ratio) = if dt_a > dt_b {
            (a, b, dt_a / dt_b)
        } else {
            (b, a, dt_b / dt_a)
        };
        if (ratio - 2.0).abs() < 1e-9 {
            println!("residual ratios (dt / (dt/2)):");
            for (name, r) in residual_ratios(coarse, fine) {
                println!("  {name:<18} {r:.3}");
            }
        }
    }
    code
}

fn convergence(target: &str, dts: &[f64], expect_order: Option<f64>) -> u8 {
    let report = resolve(target)
        .and_then(|t| convergence_study(&t.config, dts, t.base.as_deref()));
    match report {
        Ok(report) => {
            print!("{report}");
            match (expect_order, report.finest_order()) {
                (Some(want), Some(got)) if (got - want).abs() > 0.2 => {
                    println!("observed order {got:.3} outside {want} ± 0.2");
                    CHECK_FAILURE
                }
                (Some(_), None) => {
                    println!("all errors below the measurement floor; order not measured");
                    0
                }
                _ => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { targets, output } => run(&targets, output),
        Command::Verify { dirs } => verify(&dirs),
        Command::Convergence {
            target,
            dts,
            expect_order,
        } => convergence(&target, &dts, expect_order),
        Command::ListPresets => {
            for p in PRESETS {
                println!("{:<28} {}", p.name, p.summary);
            }
            0
        }
    };
    ExitCode::from(code)
}
