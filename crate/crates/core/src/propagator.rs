//! Split-step time integration.
//!
//! The kinetic flow `i∂_t u = −½Δu` is solved exactly in Fourier space. The
//! local flow `i∂_t u = Vu + λ|u|²u − iσ|u|^{p−1}u` is solved exactly at
//! every point: the density obeys `ρ' = −2σ ρ^{(p+1)/2}` and the phase
//! advances by `−V t − λ ∫ρ`, both in closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsRecord, Evaluator, Observation};
use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::grid::{Grid, BOUNDARY_DENSITY_TOLERANCE};
use crate::model::{potential, ModelParams};

/// Below this value of `σ(p−1)ρ₀^{(p−1)/2}dt` the integrated density uses a
/// three-term series.
pub const SERIES_SWITCH: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Lie,
    Strang,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub blowup_gradient_threshold: f64,
    pub blowup_amplitude_threshold: f64,
    pub output_every: usize,
}

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::Strang,
            blowup_gradient_threshold: 1e6,
            blowup_amplitude_threshold: 1e6,
            output_every: 1,
        }
    }

    pub fn with_output_every(mut self, every: usize) -> Self {
        self.output_every = every;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_thresholds(mut self, gradient: f64, amplitude: f64) -> Self {
        self.blowup_gradient_threshold = gradient;
        self.blowup_amplitude_threshold = amplitude;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            out.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            out.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.dt >= self.t_end {
            out.push(format!(
                "dt ({}) must be smaller than t_end ({})",
                self.dt, self.t_end
            ));
        }
        if !(self.blowup_gradient_threshold > 0.0) {
            out.push("blowup_gradient_threshold must be positive".into());
        }
        if !(self.blowup_amplitude_threshold > 0.0) {
            out.push("blowup_amplitude_threshold must be positive".into());
        }
        if self.output_every == 0 {
            out.push("output_every must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn step_count(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() < 1e-9 * ratio.max(1.0) {
            n as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Completed,
    BlowUpDetected(f64),
    NumericalFailure(f64),
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: WaveFunction,
    /// Time of `final_state` and the number of steps that produced it.
    pub final_time: f64,
    pub steps: usize,
    pub status: Status,
    /// Boundary-density and similar advisories raised during the run.
    pub warnings: Vec<String>,
}

/// Closed-form solution of the pointwise density ODE
/// `ρ' = −2σ ρ^{(p+1)/2}` over `dt`, returning `(ρ(dt), ∫₀^{dt} ρ)`.
pub fn local_density_and_phase(rho0: f64, sigma: f64, p: f64, dt: f64) -> (f64, f64) {
    let (rho, phi, _) = local_point(rho0, sigma, p, dt);
    (rho, phi)
}

/// `∫₀^{dt} ρ(τ)^{(p+1)/2} dτ` along the same density ODE, i.e. the
/// damping loss `(ρ₀ − ρ(dt))/(2σ)` written without cancellation.
pub fn local_damping_integral(rho0: f64, sigma: f64, p: f64, dt: f64) -> f64 {
    local_point(rho0, sigma, p, dt).2
}

/// `(ρ(dt), ∫ρ, ∫ρ^{(p+1)/2})` sharing one evaluation of
/// `z = σ(p−1)ρ₀^{(p−1)/2}dt`.
fn local_point(rho0: f64, sigma: f64, p: f64, dt: f64) -> (f64, f64, f64) {
    if rho0 <= 0.0 || dt == 0.0 {
        return (rho0.max(0.0), 0.0, 0.0);
    }
    if sigma == 0.0 {
        return (rho0, rho0 * dt, rho0.powf((p + 1.0) / 2.0) * dt);
    }
    if p == 5.0 {
        // b = a = 1/2: every power of 1 + z is a square root.
        let z = 4.0 * sigma * rho0 * rho0 * dt;
        let s = (1.0 + z).sqrt();
        let rho = rho0 / s;
        return (rho, 2.0 * rho0 * dt / (s + 1.0), rho0 * z / (s * (s + 1.0)) / (2.0 * sigma));
    }
    if p == 3.0 {
        let z = 2.0 * sigma * rho0 * dt;
        let phi = if z < SERIES_SWITCH {
            rho0 * dt * (1.0 - 0.5 * z + z * z / 3.0)
        } else {
            rho0 * dt * z.ln_1p() / z
        };
        return (rho0 / (1.0 + z), phi, rho0 * z / (1.0 + z) / (2.0 * sigma));
    }
    let z = sigma * (p - 1.0) * rho0.powf((p - 1.0) / 2.0) * dt;
    let log1p_z = z.ln_1p();
    let a = (p - 3.0) / (p - 1.0);
    let b = 2.0 / (p - 1.0);
    let rho = rho0 * (-b * log1p_z).exp();
    let phi = if z < SERIES_SWITCH {
        rho0 * dt * (1.0 - 0.5 * b * z + b * (b + 1.0) * z * z / 6.0)
    } else {
        rho0.powf(-(p - 3.0) / 2.0) / (sigma * (p - 3.0)) * (a * log1p_z).exp_m1()
    };
    (rho, phi, -rho0 * (-b * log1p_z).exp_m1() / (2.0 * sigma))
}

/// The pointwise flow the local substep integrates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum LocalFlow {
    /// `V u + λ|u|²u − iσ|u|^{p−1}u`
    NonlinearDamping,
    /// `V u + λ|u|²u − iγ u`
    LinearDamping { rate: f64 },
    /// `V u + λ e^{−2γt}|u|²u`
    DecayingCoupling { rate: f64 },
}

/// Advances one field through repeated steps with cached phase tables.
pub(crate) struct Stepper {
    grid: Grid,
    params: ModelParams,
    flow: LocalFlow,
    potential: Vec<f64>,
    dt: f64,
    scheme: Scheme,
    kinetic: Vec<Complex64>,
}

fn kinetic_phases(grid: &Grid, tau: f64) -> Vec<Complex64> {
    let norm = 1.0 / grid.len() as f64;
    grid.laplacian_symbol()
        .iter()
        .map(|&k2| Complex64::from_polar(norm, -0.5 * k2 * tau))
        .collect()
}

fn apply_kinetic(grid: &Grid, u: &mut [Complex64], phases: &[Complex64]) {
    grid.fft_forward(u);
    u.iter_mut().zip(phases).for_each(|(c, p)| *c *= p);
    grid.fft_inverse(u);
}

impl Stepper {
    pub(crate) fn new(
        grid: &Grid,
        params: &ModelParams,
        flow: LocalFlow,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        let potential = potential(params, grid)?;
        let tau = match scheme {
            Scheme::Strang => 0.5 * dt,
            Scheme::Lie => dt,
        };
        Ok(Self {
            grid: grid.clone(),
            params: params.clone(),
            flow,
            potential,
            dt,
            scheme,
            kinetic: kinetic_phases(grid, tau),
        })
    }

    fn local(&self, u: &mut [Complex64], t: f64, dt: f64) -> Result<Option<f64>> {
        let loss = local_inplace(u, &self.params, &self.potential, self.flow, t, dt)?;
        Ok(loss.map(|l| l * self.grid.cell_volume()))
    }

    /// One step from time `t`. For the nonlinear damping flow, also returns
    /// `∫ ‖u‖_{L^{p+1}}^{p+1} dt` over the step, integrated exactly along the
    /// local substep (the only part of the step that changes the density).
    pub(crate) fn step(&self, u: &mut [Complex64], t: f64) -> Result<Option<f64>> {
        match self.scheme {
            Scheme::Strang => {
                apply_kinetic(&self.grid, u, &self.kinetic);
                let loss = self.local(u, t, self.dt)?;
                apply_kinetic(&self.grid, u, &self.kinetic);
                Ok(loss)
            }
            Scheme::Lie => {
                let loss = self.local(u, t, self.dt)?;
                apply_kinetic(&self.grid, u, &self.kinetic);
                Ok(loss)
            }
        }
    }

    /// A step of arbitrary length (used for a shortened final step).
    pub(crate) fn step_with(&self, u: &mut [Complex64], t: f64, dt: f64) -> Result<Option<f64>> {
        if dt == self.dt {
            return self.step(u, t);
        }
        Stepper::new(&self.grid, &self.params, self.flow, dt, self.scheme)?.step(u, t)
    }
}

fn local_inplace(
    u: &mut [Complex64],
    params: &ModelParams,
    potential: &[f64],
    flow: LocalFlow,
    t: f64,
    dt: f64,
) -> Result<Option<f64>> {
    let lambda = params.lambda;
    let mut loss = None;
    match flow {
        LocalFlow::NonlinearDamping => {
            if dt < 0.0 && params.sigma > 0.0 {
                return Err(Error::InvalidParams(
                    "the damped local flow cannot be run backwards in time".into(),
                ));
            }
            let mut integral = 0.0;
            for (c, &v) in u.iter_mut().zip(potential) {
                let rho0 = c.norm_sqr();
                if rho0 == 0.0 {
                    continue;
                }
                let (rho, phi, lp1) = local_point(rho0, params.sigma, params.p, dt);
                integral += lp1;
                let factor = (rho / rho0).sqrt();
                *c *= Complex64::from_polar(factor, -(v * dt + lambda * phi));
            }
            loss = Some(integral);
        }
        LocalFlow::LinearDamping { rate } => {
            let decay = (-rate * dt).exp();
            // ∫₀^{dt} e^{−2γs} ds
            let weight = if rate == 0.0 {
                dt
            } else {
                -(-2.0 * rate * dt).exp_m1() / (2.0 * rate)
            };
            for (c, &v) in u.iter_mut().zip(potential) {
                let rho0 = c.norm_sqr();
                *c *= Complex64::from_polar(decay, -(v * dt + lambda * rho0 * weight));
            }
        }
        LocalFlow::DecayingCoupling { rate } => {
            // ∫_t^{t+dt} e^{−2γs} ds
            let weight = if rate == 0.0 {
                dt
            } else {
                (-2.0 * rate * t).exp() * -(-2.0 * rate * dt).exp_m1() / (2.0 * rate)
            };
            for (c, &v) in u.iter_mut().zip(potential) {
                let rho0 = c.norm_sqr();
                *c *= Complex64::from_polar(1.0, -(v * dt + lambda * rho0 * weight));
            }
        }
    }
    if u.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("local substep"));
    }
    Ok(loss)
}

/// Free evolution `û(k) ← e^{−i|k|²dt/2} û(k)`.
pub fn kinetic_substep(u: &WaveFunction, dt: f64) -> WaveFunction {
    let grid = u.grid();
    let mut values = u.values().to_vec();
    apply_kinetic(grid, &mut values, &kinetic_phases(grid, dt));
    WaveFunction::from_parts_unchecked(grid.clone(), values)
}

/// Exact pointwise potential, cubic and damping flow over `dt`.
pub fn local_substep(
    u: &WaveFunction,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<WaveFunction> {
    if u.grid() != grid {
        return Err(Error::InvalidGrid("field does not live on the given grid".into()));
    }
    let v = potential(params, grid)?;
    let mut values = u.values().to_vec();
    local_inplace(&mut values, params, &v, LocalFlow::NonlinearDamping, 0.0, dt)?;
    Ok(WaveFunction::from_parts_unchecked(grid.clone(), values))
}

/// `K(dt/2) ∘ L(dt) ∘ K(dt/2)`.
pub fn strang_step(
    u: &WaveFunction,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<WaveFunction> {
    let half = kinetic_substep(u, 0.5 * dt);
    let local = local_substep(&half, params, grid, dt)?;
    Ok(kinetic_substep(&local, 0.5 * dt))
}

/// Evolves `u0` with fixed steps and no diagnostics; returns the final state.
pub fn propagate(
    u0: &WaveFunction,
    params: &ModelParams,
    dt: f64,
    t_end: f64,
    scheme: Scheme,
) -> Result<WaveFunction> {
    params.validate(u0.grid().dim())?;
    propagate_flow(u0, params, LocalFlow::NonlinearDamping, dt, t_end, scheme)
}

pub(crate) fn propagate_flow(
    u0: &WaveFunction,
    params: &ModelParams,
    flow: LocalFlow,
    dt: f64,
    t_end: f64,
    scheme: Scheme,
) -> Result<WaveFunction> {
    let config = StepperConfig {
        scheme,
        ..StepperConfig::new(dt, t_end)
    };
    config.validate()?;
    let grid = u0.grid();
    let stepper = Stepper::new(grid, params, flow, dt, scheme)?;
    let mut values = u0.values().to_vec();
    let n = config.step_count();
    for k in 0..n {
        let t = k as f64 * dt;
        let h = (t_end - t).min(dt);
        stepper.step_with(&mut values, t, h)?;
    }
    Ok(WaveFunction::from_parts_unchecked(grid.clone(), values))
}

/// Runs the full simulation, recording diagnostics after every step and
/// keeping one record per `output_every` steps. `hook` is called after
/// every step (and once for the initial state) with the step index, the
/// observation and the state it was measured on.
///
/// Blow-up and numerical failure end the run early and are reported in
/// [`Trajectory::status`], not as errors.
pub fn evolve(
    u0: &WaveFunction,
    params: &ModelParams,
    config: &StepperConfig,
    hook: &mut dyn FnMut(usize, &Observation, &WaveFunction) -> Result<()>,
) -> Result<Trajectory> {
    evolve_flow(u0, params, LocalFlow::NonlinearDamping, config, hook)
}

pub(crate) fn evolve_flow(
    u0: &WaveFunction,
    params: &ModelParams,
    flow: LocalFlow,
    config: &StepperConfig,
    hook: &mut dyn FnMut(usize, &Observation, &WaveFunction) -> Result<()>,
) -> Result<Trajectory> {
    let grid = u0.grid().clone();
    params.validate(grid.dim())?;
    config.validate()?;
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }

    let evaluator = Evaluator::new(params, &grid)?;
    let stepper = Stepper::new(&grid, params, flow, config.dt, config.scheme)?;
    let mut warnings = Vec::new();
    let boundary = grid.boundary_fraction(&u0.density());
    if boundary > BOUNDARY_DENSITY_TOLERANCE {
        warnings.push(format!(
            "initial density at the box edge is {boundary:.3e} of the peak; enlarge the box"
        ));
    }

    let mut state = u0.clone();
    let mut obs = evaluator.observe(state.values(), 0.0, None);
    let mut times = vec![0.0];
    let mut records = vec![obs.record];
    hook(0, &obs, &state)?;

    let n = config.step_count();
    let mut status = Status::Completed;
    let mut previous = state.values().to_vec();
    let mut steps = 0;
    let mut final_time = 0.0;
    for k in 1..=n {
        let t_prev = (k - 1) as f64 * config.dt;
        let t = if k == n { config.t_end } else { k as f64 * config.dt };
        previous.copy_from_slice(state.values());
        let lp1_increment = match stepper.step_with(state.values_mut(), t_prev, t - t_prev) {
            Ok(increment) if state.is_finite() => increment,
            _ => {
                state.values_mut().copy_from_slice(&previous);
                status = Status::NumericalFailure(t);
                break;
            }
        };
        steps = k;
        final_time = t;
        obs = evaluator.observe_step(state.values(), t, &obs, lp1_increment);
        let blown = obs.record.grad_norm > config.blowup_gradient_threshold
            || obs.max_amplitude > config.blowup_amplitude_threshold
            || !obs.record.grad_norm.is_finite();
        if blown || k % config.output_every == 0 || k == n {
            times.push(t);
            records.push(obs.record);
        }
        hook(k, &obs, &state)?;
        if blown {
            status = Status::BlowUpDetected(t);
            break;
        }
    }

    let boundary = grid.boundary_fraction(&state.density());
    if boundary > BOUNDARY_DENSITY_TOLERANCE {
        warnings.push(format!(
            "final density at the box edge is {boundary:.3e} of the peak; the periodic box is felt"
        ));
    }
    Ok(Trajectory {
        times,
        records,
        final_state: state,
        final_time,
        steps,
        status,
        warnings,
    })
}

/// Evolves the linearly damped equation
/// `i∂_t u + ½Δu = Vu + λ|u|²u − iγu` and, independently, the undamped
/// equation with coupling `λe^{−2γt}` satisfied by `w = e^{γt}u`. Returns
/// the L² distance between `e^{γT}u(T)` and `w(T)`.
pub fn linear_damping_transform_check(
    u0: &WaveFunction,
    params: &ModelParams,
    damping_rate: f64,
    dt: f64,
    t_end: f64,
) -> Result<f64> {
    let damped = propagate_flow(
        u0,
        params,
        LocalFlow::LinearDamping { rate: damping_rate },
        dt,
        t_end,
        Scheme::Strang,
    )?;
    let transformed = propagate_flow(
        u0,
        params,
        LocalFlow::DecayingCoupling { rate: damping_rate },
        dt,
        t_end,
        Scheme::Strang,
    )?;
    let undone = damped.scaled(Complex64::new((damping_rate * t_end).exp(), 0.0));
    undone.distance(&transformed)
}

/// Runs the linearly damped equation with full diagnostics.
pub fn evolve_linear_damping(
    u0: &WaveFunction,
    params: &ModelParams,
    damping_rate: f64,
    config: &StepperConfig,
    hook: &mut dyn FnMut(usize, &Observation, &WaveFunction) -> Result<()>,
) -> Result<Trajectory> {
    evolve_flow(
        u0,
        params,
        LocalFlow::LinearDamping { rate: damping_rate },
        config,
        hook,
    )
}
