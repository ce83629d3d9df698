//! Scenario files.
//!
//! ```toml
//! [grid]
//! dim = 1
//! points = [256]
//! half_width = [8.0]
//!
//! [model]
//! lambda = -1.0
//! sigma = 0.2
//! p = 5.0
//! omega = [1.0]
//! # kappa = 0.0167          (default sigma / 12)
//! # linear_damping = 0.3    (replaces the nonlinear damping; needs sigma = 0)
//!
//! [stepper]
//! dt = 1e-3
//! t_end = 1.0
//! # scheme = "strang"
//! # output_every = 1
//! # blowup_gradient_threshold = 1e6
//! # blowup_amplitude_threshold = 1e6
//!
//! [initial]
//! kind = "gaussian"          # or "ground_state", "file"
//! # center = [0.0]
//! # width = [1.0]
//! # momentum = [0.0]
//! # amplitude = 1.0
//! # path = "start.bin"       (kind = "file")
//!
//! [output]                   # optional section
//! # directory = "runs/demo"
//! # csv = "diagnostics.csv"
//! # snapshot_every = 0
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::grid::Grid;
use crate::model::{default_kappa, ModelParams};
use crate::oracle::hermite_ground_state;
use crate::propagator::{Scheme, StepperConfig};
use crate::scenario::io::read_snapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub points: Vec<usize>,
    pub half_width: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.points, &self.half_width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `A ∏ exp(−(x_j − c_j)²/(2w_j²)) e^{i k·x}`, rescaled on the grid to
    /// its continuum mass `A² ∏ √π w_j`.
    Gaussian {
        center: Vec<f64>,
        width: Vec<f64>,
        momentum: Vec<f64>,
        amplitude: f64,
    },
    /// Ground state of the trap.
    GroundState,
    /// A snapshot file; relative paths resolve against the scenario file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub directory: Option<PathBuf>,
    pub csv: String,
    /// Snapshot windows (three consecutive steps) are written around every
    /// multiple of this many steps; 0 keeps only the first and last state.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: None,
            csv: "diagnostics.csv".into(),
            snapshot_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    /// Rate of a linear damping `−iγu` used instead of the nonlinear one.
    pub linear_damping: Option<f64>,
    pub stepper: StepperConfig,
    pub initial: InitialCondition,
    pub output: OutputSpec,
}

// On-disk layout. Optional keys are `Option` so that defaults stay visible
// in one place (`resolve`).

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: GridSpec,
    model: RawModel,
    stepper: RawStepper,
    initial: RawInitial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    lambda: f64,
    sigma: f64,
    p: f64,
    omega: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    linear_damping: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepper {
    dt: f64,
    t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blowup_gradient_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blowup_amplitude_threshold: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    momentum: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    directory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_every: Option<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Float,
    Str,
    IntArray,
    FloatArray,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Int => "a nonnegative integer",
            Kind::Float => "a number",
            Kind::Str => "a string",
            Kind::IntArray => "an array of nonnegative integers",
            Kind::FloatArray => "an array of numbers",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        let is_int = |v: &Value| matches!(v, Value::Integer(i) if *i >= 0);
        let is_num = |v: &Value| matches!(v, Value::Integer(_) | Value::Float(_));
        match self {
            Kind::Int => is_int(v),
            Kind::Float => is_num(v),
            Kind::Str => v.is_str(),
            Kind::IntArray => v.as_array().is_some_and(|a| a.iter().all(is_int)),
            Kind::FloatArray => v.as_array().is_some_and(|a| a.iter().all(is_num)),
        }
    }
}

type Schema = &'static [(&'static str, Kind, bool)];

const SECTIONS: &[(&str, bool, Schema)] = &[
    (
        "grid",
        true,
        &[
            ("dim", Kind::Int, true),
            ("points", Kind::IntArray, true),
            ("half_width", Kind::FloatArray, true),
        ],
    ),
    (
        "model",
        true,
        &[
            ("lambda", Kind::Float, true),
            ("sigma", Kind::Float, true),
            ("p", Kind::Float, true),
            ("omega", Kind::FloatArray, true),
            ("kappa", Kind::Float, false),
            ("linear_damping", Kind::Float, false),
        ],
    ),
    (
        "stepper",
        true,
        &[
            ("dt", Kind::Float, true),
            ("t_end", Kind::Float, true),
            ("scheme", Kind::Str, false),
            ("output_every", Kind::Int, false),
            ("blowup_gradient_threshold", Kind::Float, false),
            ("blowup_amplitude_threshold", Kind::Float, false),
        ],
    ),
    (
        "initial",
        true,
        &[
            ("kind", Kind::Str, true),
            ("center", Kind::FloatArray, false),
            ("width", Kind::FloatArray, false),
            ("momentum", Kind::FloatArray, false),
            ("amplitude", Kind::Float, false),
            ("path", Kind::Str, false),
        ],
    ),
    (
        "output",
        false,
        &[
            ("directory", Kind::Str, false),
            ("csv", Kind::Str, false),
            ("snapshot_every", Kind::Int, false),
        ],
    ),
];

const INITIAL_KINDS: &[&str] = &["gaussian", "ground_state", "file"];

/// Structural pass over the parsed table: unknown sections and keys,
/// missing required keys, wrong value types.
fn check_structure(table: &Table) -> Vec<String> {
    let mut errors = Vec::new();
    for key in table.keys() {
        if !SECTIONS.iter().any(|(name, _, _)| name == key) {
            errors.push(format!("unknown section [{key}]"));
        }
    }
    for (name, required, schema) in SECTIONS {
        let section = match table.get(*name) {
            None => {
                if *required {
                    errors.push(format!("missing section [{name}]"));
                }
                continue;
            }
            Some(Value::Table(t)) => t,
            Some(_) => {
                errors.push(format!("`{name}` must be a section"));
                continue;
            }
        };
        for key in section.keys() {
            if !schema.iter().any(|(k, _, _)| k == key) {
                errors.push(format!("unknown key `{name}.{key}`"));
            }
        }
        for (key, kind, key_required) in schema.iter() {
            match section.get(*key) {
                None if *key_required => errors.push(format!("missing key `{name}.{key}`")),
                Some(v) if !kind.accepts(v) => {
                    errors.push(format!("`{name}.{key}` must be {}", kind.name()))
                }
                _ => {}
            }
        }
    }
    if let Some(Value::Table(initial)) = table.get("initial") {
        if let Some(kind) = initial.get("kind").and_then(Value::as_str) {
            let gaussian_keys = ["center", "width", "momentum", "amplitude"];
            match kind {
                "gaussian" => {
                    if initial.contains_key("path") {
                        errors.push("`initial.path` only applies to kind = \"file\"".into());
                    }
                }
                "ground_state" | "file" => {
                    for k in gaussian_keys {
                        if initial.contains_key(k) {
                            errors.push(format!(
                                "`initial.{k}` only applies to kind = \"gaussian\""
                            ));
                        }
                    }
                    if kind == "ground_state" && initial.contains_key("path") {
                        errors.push("`initial.path` only applies to kind = \"file\"".into());
                    }
                    if kind == "file" && !initial.contains_key("path") {
                        errors.push("missing key `initial.path` (required for kind = \"file\")".into());
                    }
                }
                other => errors.push(format!(
                    "unknown initial kind \"{other}\" (expected one of {})",
                    INITIAL_KINDS.join(", ")
                )),
            }
        }
    }
    if let Some(Value::Table(stepper)) = table.get("stepper") {
        if let Some(s) = stepper.get("scheme").and_then(Value::as_str) {
            if s != "strang" && s != "lie" {
                errors.push(format!("unknown scheme \"{s}\" (expected strang or lie)"));
            }
        }
    }
    errors
}

fn check_axis_vector(errors: &mut Vec<String>, name: &str, v: &[f64], dim: usize) {
    if v.len() != dim {
        errors.push(format!("`{name}` has {} entries, expected {dim}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        errors.push(format!("`{name}` must be finite"));
    }
}

impl ScenarioConfig {
    /// Every violated invariant, across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let dim = self.grid.dim;
        if let Err(e) = self.grid.build() {
            errors.push(e.to_string());
        }
        errors.extend(self.model.violations(dim));
        if let Some(rate) = self.linear_damping {
            if !(rate.is_finite() && rate >= 0.0) {
                errors.push(format!("linear_damping must be nonnegative, got {rate}"));
            }
            if self.model.sigma != 0.0 {
                errors.push("linear_damping requires sigma = 0".into());
            }
        }
        errors.extend(self.stepper.violations());
        match &self.initial {
            InitialCondition::Gaussian {
                center,
                width,
                momentum,
                amplitude,
            } => {
                check_axis_vector(&mut errors, "initial.center", center, dim);
                check_axis_vector(&mut errors, "initial.width", width, dim);
                check_axis_vector(&mut errors, "initial.momentum", momentum, dim);
                if width.iter().any(|w| !(*w > 0.0)) {
                    errors.push("`initial.width` entries must be positive".into());
                }
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    errors.push(format!("`initial.amplitude` must be positive, got {amplitude}"));
                }
            }
            InitialCondition::GroundState => {
                if self.model.omega.iter().any(|w| !(*w > 0.0)) {
                    errors.push("kind = \"ground_state\" needs every omega positive".into());
                }
            }
            InitialCondition::File { path } => {
                if path.as_os_str().is_empty() {
                    errors.push("`initial.path` is empty".into());
                }
            }
        }
        if self.output.csv.is_empty() {
            errors.push("`output.csv` is empty".into());
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Serializes with every default written out.
    pub fn to_toml(&self) -> String {
        let (kind, center, width, momentum, amplitude, path) = match &self.initial {
            InitialCondition::Gaussian {
                center,
                width,
                momentum,
                amplitude,
            } => (
                "gaussian",
                Some(center.clone()),
                Some(width.clone()),
                Some(momentum.clone()),
                Some(*amplitude),
                None,
            ),
            InitialCondition::GroundState => ("ground_state", None, None, None, None, None),
            InitialCondition::File { path } => (
                "file",
                None,
                None,
                None,
                None,
                Some(path.display().to_string()),
            ),
        };
        let raw = RawConfig {
            grid: self.grid.clone(),
            model: RawModel {
                lambda: self.model.lambda,
                sigma: self.model.sigma,
                p: self.model.p,
                omega: self.model.omega.clone(),
                kappa: Some(self.model.kappa),
                linear_damping: self.linear_damping,
            },
            stepper: RawStepper {
                dt: self.stepper.dt,
                t_end: self.stepper.t_end,
                scheme: Some(self.stepper.scheme),
                output_every: Some(self.stepper.output_every),
                blowup_gradient_threshold: Some(self.stepper.blowup_gradient_threshold),
                blowup_amplitude_threshold: Some(self.stepper.blowup_amplitude_threshold),
            },
            initial: RawInitial {
                kind: kind.into(),
                center,
                width,
                momentum,
                amplitude,
                path,
            },
            output: Some(RawOutput {
                directory: self.output.directory.as_ref().map(|d| d.display().to_string()),
                csv: Some(self.output.csv.clone()),
                snapshot_every: Some(self.output.snapshot_every),
            }),
        };
        toml::to_string(&raw).expect("scenario configs always serialize")
    }

    /// Builds the initial state on the configured grid. `base` resolves
    /// relative snapshot paths.
    pub fn initial_state(&self, base: Option<&Path>) -> Result<WaveFunction> {
        let grid = self.grid.build()?;
        match &self.initial {
            InitialCondition::Gaussian {
                center,
                width,
                momentum,
                amplitude,
            } => gaussian(&grid, center, width, momentum, *amplitude),
            InitialCondition::GroundState => hermite_ground_state(&grid, &self.model.omega),
            InitialCondition::File { path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let (u, _) = read_snapshot(&full)?;
                if u.grid() != &grid {
                    return Err(Error::InvalidGrid(format!(
                        "snapshot {} does not match the configured grid",
                        full.display()
                    )));
                }
                Ok(u)
            }
        }
    }
}

/// Gaussian initial data rescaled so that the grid mass equals the
/// continuum mass `A² ∏ √π w_j`.
pub fn gaussian(
    grid: &Grid,
    center: &[f64],
    width: &[f64],
    momentum: &[f64],
    amplitude: f64,
) -> Result<WaveFunction> {
    let dim = grid.dim();
    for v in [center, width, momentum] {
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let u = WaveFunction::from_fn(grid.clone(), |x| {
        let mut exponent = 0.0;
        let mut phase = 0.0;
        for j in 0..dim {
            let d = x[j] - center[j];
            exponent -= d * d / (2.0 * width[j] * width[j]);
            phase += momentum[j] * x[j];
        }
        Complex64::from_polar(amplitude * exponent.exp(), phase)
    })?;
    let target: f64 = amplitude * amplitude * width.iter().map(|w| PI.sqrt() * w).product::<f64>();
    let mass = u.mass();
    if mass == 0.0 {
        return Err(Error::InvalidParams(
            "the Gaussian vanishes on every grid point".into(),
        ));
    }
    Ok(u.scaled(Complex64::new((target / mass).sqrt(), 0.0)))
}

/// Parses and validates a scenario file, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string().trim().to_string()]))?;
    let structural = check_structure(&table);
    if !structural.is_empty() {
        return Err(Error::Config(structural));
    }
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))?;
    let config = resolve(raw);
    config.validate()?;
    Ok(config)
}

fn resolve(raw: RawConfig) -> ScenarioConfig {
    let dim = raw.grid.dim;
    let model = ModelParams {
        lambda: raw.model.lambda,
        sigma: raw.model.sigma,
        p: raw.model.p,
        omega: raw.model.omega,
        kappa: raw.model.kappa.unwrap_or(default_kappa(raw.model.sigma)),
    };
    let defaults = StepperConfig::new(raw.stepper.dt, raw.stepper.t_end);
    let stepper = StepperConfig {
        scheme: raw.stepper.scheme.unwrap_or(defaults.scheme),
        output_every: raw.stepper.output_every.unwrap_or(defaults.output_every),
        blowup_gradient_threshold: raw
            .stepper
            .blowup_gradient_threshold
            .unwrap_or(defaults.blowup_gradient_threshold),
        blowup_amplitude_threshold: raw
            .stepper
            .blowup_amplitude_threshold
            .unwrap_or(defaults.blowup_amplitude_threshold),
        ..defaults
    };
    let initial = match raw.initial.kind.as_str() {
        "gaussian" => InitialCondition::Gaussian {
            center: raw.initial.center.unwrap_or_else(|| vec![0.0; dim]),
            width: raw.initial.width.unwrap_or_else(|| vec![1.0; dim]),
            momentum: raw.initial.momentum.unwrap_or_else(|| vec![0.0; dim]),
            amplitude: raw.initial.amplitude.unwrap_or(1.0),
        },
        "ground_state" => InitialCondition::GroundState,
        _ => InitialCondition::File {
            path: PathBuf::from(raw.initial.path.unwrap_or_default()),
        },
    };
    let out = raw.output.unwrap_or(RawOutput {
        directory: None,
        csv: None,
        snapshot_every: None,
    });
    let defaults = OutputSpec::default();
    ScenarioConfig {
        grid: raw.grid,
        model,
        linear_damping: raw.model.linear_damping,
        stepper,
        initial,
        output: OutputSpec {
            directory: out.directory.map(PathBuf::from),
            csv: out.csv.unwrap_or(defaults.csv),
            snapshot_every: out.snapshot_every.unwrap_or(defaults.snapshot_every),
        },
    }
}
