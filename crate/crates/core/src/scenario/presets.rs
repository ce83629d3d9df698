//! Named scenarios for the regimes of interest.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::propagator::StepperConfig;
use crate::scenario::config::{GridSpec, InitialCondition, OutputSpec, ScenarioConfig};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn() -> ScenarioConfig,
}

impl Preset {
    pub fn config(&self) -> ScenarioConfig {
        (self.build)()
    }
}

/// Focused 3D data with negative energy: `E₀ ≈ −30.9` for
/// `A = 4.6`, `w = 1/√2`, `ω = 2`. The box and trap are chosen so that a
/// 64³ grid keeps the damped collapse core resolved.
pub const COLLAPSE_AMPLITUDE: f64 = 4.6;
pub const COLLAPSE_WIDTH: f64 = FRAC_1_SQRT_2;
pub const COLLAPSE_OMEGA: f64 = 2.0;
pub const COLLAPSE_HALF_WIDTH: f64 = 3.5;
/// About four times the initial `‖∇u‖ ≈ 11.2` and a quarter of what the
/// 64³ grid can represent for this mass.
pub const COLLAPSE_GRADIENT_THRESHOLD: f64 = 45.0;
pub const COLLAPSE_AMPLITUDE_THRESHOLD: f64 = 20.0;

fn grid(dim: usize, n: usize, l: f64) -> GridSpec {
    GridSpec {
        dim,
        points: vec![n; dim],
        half_width: vec![l; dim],
    }
}

fn centered_gaussian(dim: usize, width: f64, amplitude: f64) -> InitialCondition {
    InitialCondition::Gaussian {
        center: vec![0.0; dim],
        width: vec![width; dim],
        momentum: vec![0.0; dim],
        amplitude,
    }
}

fn output(snapshot_every: usize) -> OutputSpec {
    OutputSpec {
        snapshot_every,
        ..OutputSpec::default()
    }
}

fn collapse_data(sigma: f64, t_end: f64) -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(3, 64, COLLAPSE_HALF_WIDTH),
        model: ModelParams::new(-1.0, sigma, 5.0, vec![COLLAPSE_OMEGA; 3]),
        linear_damping: None,
        stepper: StepperConfig::new(1e-3, t_end)
            .with_output_every(10)
            .with_thresholds(COLLAPSE_GRADIENT_THRESHOLD, COLLAPSE_AMPLITUDE_THRESHOLD),
        initial: centered_gaussian(3, COLLAPSE_WIDTH, COLLAPSE_AMPLITUDE),
        output: output(500),
    }
}

fn collapse_recombination() -> ScenarioConfig {
    collapse_data(0.1, 5.0)
}

fn undamped_collapse() -> ScenarioConfig {
    collapse_data(0.0, 2.0)
}

fn collapse_recombination_1d() -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(1, 512, 16.0),
        model: ModelParams::new(-1.0, 0.1, 5.0, vec![0.5]),
        linear_damping: None,
        stepper: StepperConfig::new(1e-3, 50.0).with_output_every(10),
        initial: centered_gaussian(1, 1.0, 2.0),
        output: output(5000),
    }
}

fn damped_gaussian() -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(1, 256, 8.0),
        model: ModelParams::new(-1.0, 0.2, 5.0, vec![1.0]),
        linear_damping: None,
        stepper: StepperConfig::new(1e-3, 1.0).with_output_every(10),
        initial: centered_gaussian(1, 1.0, 1.5),
        output: output(100),
    }
}

fn cubic_balance(dim: usize, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(dim, n, 8.0),
        model: ModelParams::new(-1.0, 1.0, 3.0, vec![1.0; dim]),
        linear_damping: None,
        stepper: StepperConfig::new(1e-3, 10.0),
        initial: centered_gaussian(dim, 1.0, 2.0),
        output: output(0),
    }
}

fn cubic_balance_1d() -> ScenarioConfig {
    cubic_balance(1, 256)
}

fn cubic_balance_2d() -> ScenarioConfig {
    cubic_balance(2, 128)
}

fn ground_state_check() -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(1, 256, 8.0),
        model: ModelParams::new(0.0, 0.0, 3.0, vec![1.0]),
        linear_damping: None,
        stepper: StepperConfig::new(1e-3, 1.0).with_output_every(100),
        initial: InitialCondition::GroundState,
        output: output(0),
    }
}

fn linear_damping_equiv() -> ScenarioConfig {
    ScenarioConfig {
        grid: grid(1, 256, 8.0),
        model: ModelParams::new(1.0, 0.0, 3.0, vec![1.0]),
        linear_damping: Some(0.3),
        stepper: StepperConfig::new(1e-4, 1.0).with_output_every(1000),
        initial: InitialCondition::Gaussian {
            center: vec![0.5],
            width: vec![1.0],
            momentum: vec![1.0],
            amplitude: 1.5,
        },
        output: output(0),
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "collapse_recombination",
        summary: "3D focusing collapse arrested by quintic damping (64^3, t_end = 5)",
        build: collapse_recombination,
    },
    Preset {
        name: "collapse_recombination_1d",
        summary: "1D analog of the damped collapse run to t_end = 50",
        build: collapse_recombination_1d,
    },
    Preset {
        name: "undamped_collapse",
        summary: "the 3D collapse data without damping; ends in blow-up",
        build: undamped_collapse,
    },
    Preset {
        name: "cubic_balance",
        summary: "p = 3 with sigma = |lambda| in 1D (t_end = 10)",
        build: cubic_balance_1d,
    },
    Preset {
        name: "cubic_balance_2d",
        summary: "p = 3 with sigma = |lambda| in 2D (t_end = 10)",
        build: cubic_balance_2d,
    },
    Preset {
        name: "damped_gaussian",
        summary: "1D quintic-damped focusing Gaussian, the balance-law benchmark",
        build: damped_gaussian,
    },
    Preset {
        name: "ground_state_check",
        summary: "linear trap eigenstate; must only rotate in phase",
        build: ground_state_check,
    },
    Preset {
        name: "linear_damping_equiv",
        summary: "linearly damped cubic run, checked against its phase transform",
        build: linear_damping_equiv,
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.into(),
            available: preset_names(),
        })
}
