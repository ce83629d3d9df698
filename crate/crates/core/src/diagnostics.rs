//! Per-step measurement of every monitored functional, space-time
//! accumulators, and residual checks of the continuum balance laws.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{current_from_gradient, WaveFunction};
use crate::grid::Grid;
use crate::model::{ekappa_rhs_terms, potential, EkappaRhsTerms, EnergyParts, ModelParams};

/// Column order of the CSV trace.
pub const CSV_COLUMNS: [&str; 13] = [
    "time",
    "mass",
    "e0",
    "ekappa",
    "ekappa_p",
    "elin",
    "sigma_norm",
    "grad_norm",
    "lp1_norm_pow",
    "lp1_accum",
    "l10_accum",
    "grad_weighted_accum",
    "potential_weighted_accum",
];

/// Denominator floor shared by the relative residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Slack allowed when checking that the mass never increases.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// One time slice of every monitored functional.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    pub e0: f64,
    pub ekappa: f64,
    pub ekappa_p: f64,
    pub elin: f64,
    pub sigma_norm: f64,
    pub grad_norm: f64,
    /// `‖u‖_{L^{p+1}}^{p+1}`
    pub lp1_norm_pow: f64,
    /// `∫₀ᵗ ‖u‖_{L^{p+1}}^{p+1}`; exact along the local substeps when
    /// produced by the propagator, trapezoidal otherwise.
    pub lp1_accum: f64,
    /// `∫₀ᵗ ∫ |u|¹⁰`
    pub l10_accum: f64,
    /// `∫₀ᵗ ∫ ρ² |∇u|²`
    pub grad_weighted_accum: f64,
    /// `∫₀ᵗ ∫ V ρ³`
    pub potential_weighted_accum: f64,
}

impl DiagnosticsRecord {
    fn fields(&self) -> [f64; 13] {
        [
            self.time,
            self.mass,
            self.e0,
            self.ekappa,
            self.ekappa_p,
            self.elin,
            self.sigma_norm,
            self.grad_norm,
            self.lp1_norm_pow,
            self.lp1_accum,
            self.l10_accum,
            self.grad_weighted_accum,
            self.potential_weighted_accum,
        ]
    }

    fn from_fields(f: [f64; 13]) -> Self {
        Self {
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
    }

    /// One CSV row, 17 significant digits per value.
    pub fn csv_row(&self) -> String {
        self.fields()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Instantaneous integrands of the space-time accumulators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integrands {
    pub lp1: f64,
    pub l10: f64,
    pub grad_weighted: f64,
    pub potential_weighted: f64,
}

/// A record plus the data needed to advance the accumulators from it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observation {
    pub record: DiagnosticsRecord,
    pub integrands: Integrands,
    pub max_amplitude: f64,
}

/// Precomputed tables for repeated measurements on one grid.
pub struct Evaluator {
    params: ModelParams,
    grid: Grid,
    potential: Vec<f64>,
    radius_sq: Vec<f64>,
}

impl Evaluator {
    pub fn new(params: &ModelParams, grid: &Grid) -> Result<Self> {
        let potential = potential(params, grid)?;
        let radius_sq = grid.map_points(|x| x.iter().map(|v| v * v).sum());
        Ok(Self {
            params: params.clone(),
            grid: grid.clone(),
            potential,
            radius_sq,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Measures `u` at time `t`; accumulators advance from `previous` by the
    /// trapezoidal rule.
    pub fn observe(&self, u: &[Complex64], t: f64, previous: Option<&Observation>) -> Observation {
        let grid = &self.grid;
        let mut spectrum = u.to_vec();
        grid.fft_forward(&mut spectrum);
        let grad = grid.gradient_from_raw_spectrum(&spectrum);
        self.observe_with_gradient(u, &grad, t, previous, None)
    }

    /// Like [`Evaluator::observe`] after one propagator step, with the
    /// `lp1_accum` increment supplied by the step when it has one.
    pub(crate) fn observe_step(
        &self,
        u: &[Complex64],
        t: f64,
        previous: &Observation,
        lp1_increment: Option<f64>,
    ) -> Observation {
        let mut spectrum = u.to_vec();
        self.grid.fft_forward(&mut spectrum);
        let grad = self.grid.gradient_from_raw_spectrum(&spectrum);
        self.observe_with_gradient(u, &grad, t, Some(previous), lp1_increment)
    }

    pub(crate) fn observe_with_gradient(
        &self,
        u: &[Complex64],
        grad: &[Vec<Complex64>],
        t: f64,
        previous: Option<&Observation>,
        lp1_increment: Option<f64>,
    ) -> Observation {
        let params = &self.params;
        let parts = EnergyParts::assemble(params, &self.grid, u, grad, &self.potential);
        let mut mass = 0.0;
        let mut pos = 0.0;
        let mut l10 = 0.0;
        let mut gw = 0.0;
        let mut pw = 0.0;
        let mut max_amp2 = 0.0f64;
        for (i, c) in u.iter().enumerate() {
            let rho = c.norm_sqr();
            let rho2 = rho * rho;
            let mut g2 = 0.0;
            for g in grad {
                g2 += g[i].norm_sqr();
            }
            mass += rho;
            pos += rho * self.radius_sq[i];
            l10 += rho2 * rho2 * rho;
            gw += rho2 * g2;
            pw += self.potential[i] * rho2 * rho;
            max_amp2 = max_amp2.max(rho);
        }
        let w = self.grid.cell_volume();
        let mass = mass * w;
        let grad_norm = (2.0 * parts.kinetic).sqrt();
        let integrands = Integrands {
            lp1: parts.damping_power,
            l10: l10 * w,
            grad_weighted: gw * w,
            potential_weighted: pw * w,
        };
        let (lp1_accum, l10_accum, grad_weighted_accum, potential_weighted_accum) = match previous {
            None => (0.0, 0.0, 0.0, 0.0),
            Some(prev) => {
                let h = 0.5 * (t - prev.record.time);
                let pi = &prev.integrands;
                let r = &prev.record;
                (
                    r.lp1_accum + lp1_increment.unwrap_or(h * (pi.lp1 + integrands.lp1)),
                    r.l10_accum + h * (pi.l10 + integrands.l10),
                    r.grad_weighted_accum + h * (pi.grad_weighted + integrands.grad_weighted),
                    r.potential_weighted_accum
                        + h * (pi.potential_weighted + integrands.potential_weighted),
                )
            }
        };
        Observation {
            record: DiagnosticsRecord {
                time: t,
                mass,
                e0: parts.e0(),
                ekappa: parts.ekappa(params.kappa),
                ekappa_p: parts.ekappa_p(params.kappa),
                elin: parts.elin(),
                sigma_norm: mass.sqrt() + grad_norm + (pos * w).sqrt(),
                grad_norm,
                lp1_norm_pow: parts.damping_power,
                lp1_accum,
                l10_accum,
                grad_weighted_accum,
                potential_weighted_accum,
            },
            integrands,
            max_amplitude: max_amp2.sqrt(),
        }
    }
}

/// Measures every functional of `u` at time `t`.
pub fn record(
    u: &WaveFunction,
    params: &ModelParams,
    t: f64,
    previous: Option<&Observation>,
) -> Result<Observation> {
    let eval = Evaluator::new(params, u.grid())?;
    Ok(eval.observe(u.values(), t, previous))
}

/// Three-point derivative at `t1` from samples at `t0 < t1 < t2`; second
/// order on non-uniform spacing, the centered difference on uniform spacing.
fn three_point_derivative(t: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    (h1 * h1 * f[2] - h2 * h2 * f[0] - (h1 * h1 - h2 * h2) * f[1]) / (h1 * h2 * (h1 + h2))
}

/// Largest relative violation of `dM/dt = −2σ ‖u‖_{L^{p+1}}^{p+1}` over the
/// interior records of a window.
pub fn mass_balance_residual(records: &[DiagnosticsRecord], params: &ModelParams) -> Result<f64> {
    if records.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "mass balance needs at least 3 records, got {}",
            records.len()
        )));
    }
    let mut worst = 0.0f64;
    for w in records.windows(3) {
        let dmdt = three_point_derivative(
            [w[0].time, w[1].time, w[2].time],
            [w[0].mass, w[1].mass, w[2].mass],
        );
        let sink = 2.0 * params.sigma * w[1].lp1_norm_pow;
        let r = (dmdt + sink).abs() / w[1].lp1_norm_pow.max(RESIDUAL_FLOOR);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Both sides of a balance law and their relative discrepancy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceCheck {
    /// Finite-difference time derivative.
    pub lhs: f64,
    /// Evaluated right-hand side.
    pub rhs: f64,
    /// `|lhs − rhs|` over the size of the right-hand side (see the
    /// individual residual functions for the scale used).
    pub residual: f64,
}

/// Compares the centered difference of `E_κ` over three snapshots with the
/// six-term right-hand side at the middle snapshot.
///
/// The discrepancy is divided by `Σ|T_i|` rather than by `|Σ T_i|`:
/// `dE_κ/dt` changes sign during a run, and a relative error measured
/// against a vanishing sum says nothing about the identity.
pub fn ekappa_balance_residual(
    window: &[(f64, WaveFunction)],
    params: &ModelParams,
) -> Result<BalanceCheck> {
    ekappa_balance_with(window, params, |u| ekappa_rhs_terms(params, u))
}

/// Same as [`ekappa_balance_residual`] with a caller-supplied right-hand side.
pub fn ekappa_balance_with(
    window: &[(f64, WaveFunction)],
    params: &ModelParams,
    rhs: impl Fn(&WaveFunction) -> Result<EkappaRhsTerms>,
) -> Result<BalanceCheck> {
    if params.p != 5.0 {
        return Err(Error::InvalidParams(format!(
            "E_kappa balance requires p = 5, got {}",
            params.p
        )));
    }
    if window.len() != 3 {
        return Err(Error::InsufficientData(format!(
            "E_kappa balance needs 3 snapshots, got {}",
            window.len()
        )));
    }
    let eval = Evaluator::new(params, window[0].1.grid())?;
    let e: Vec<f64> = window
        .iter()
        .map(|(t, u)| eval.observe(u.values(), *t, None).record.ekappa)
        .collect();
    let lhs = three_point_derivative(
        [window[0].0, window[1].0, window[2].0],
        [e[0], e[1], e[2]],
    );
    let terms = rhs(&window[1].1)?;
    let rhs = terms.sum();
    Ok(BalanceCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / terms.magnitude().max(RESIDUAL_FLOOR),
    })
}

fn l2_norm(grid: &Grid, values: impl Iterator<Item = f64>) -> f64 {
    grid.sum_quadrature(values.map(|v| v * v)).sqrt()
}

fn check_pair(u_prev: &WaveFunction, u_next: &WaveFunction, dt: f64) -> Result<()> {
    if u_prev.grid() != u_next.grid() {
        return Err(Error::InvalidGrid("snapshots live on different grids".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("snapshot spacing must be positive, got {dt}")));
    }
    Ok(())
}

/// Relative L² residual of `∂_t ρ + div J = −2σ ρ^{(p+1)/2}` between two
/// snapshots `dt` apart, with midpoint values taken as endpoint averages.
/// Normalized by `‖ρ_mid‖_{L²}`; zero fields give zero.
pub fn continuity_residual(
    u_prev: &WaveFunction,
    u_next: &WaveFunction,
    params: &ModelParams,
    dt: f64,
) -> Result<f64> {
    check_pair(u_prev, u_next, dt)?;
    let grid = u_prev.grid();
    let half_exp = (params.p + 1.0) / 2.0;
    let mut rho_dot = Vec::with_capacity(grid.len());
    let mut rho_mid = Vec::with_capacity(grid.len());
    let mut sink = Vec::with_capacity(grid.len());
    for (a, b) in u_prev.values().iter().zip(u_next.values()) {
        let (ra, rb) = (a.norm_sqr(), b.norm_sqr());
        rho_dot.push((rb - ra) / dt);
        rho_mid.push(0.5 * (ra + rb));
        sink.push(params.sigma * (ra.powf(half_exp) + rb.powf(half_exp)));
    }
    let j_prev = u_prev.current_density()?;
    let j_next = u_next.current_density()?;
    let j_mid: Vec<Vec<f64>> = j_prev
        .iter()
        .zip(&j_next)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    let div_j = grid.spectral_divergence(&j_mid)?;
    let norm = l2_norm(grid, rho_mid.iter().cloned());
    if norm == 0.0 {
        return Ok(0.0);
    }
    let res = l2_norm(
        grid,
        (0..grid.len()).map(|i| rho_dot[i] + div_j[i] + sink[i]),
    );
    Ok(res / norm)
}

/// Spatial part of the momentum equation, evaluated at one snapshot:
/// `div Re(∇ū⊗∇u) − ¼∇Δρ + ρ∇V + (λ/2)∇ρ² + 2σρ^{(p−1)/2} J`.
///
/// The convective and Bohm terms enter through the identity
/// `div(J⊗J/ρ) − ½ρ∇(Δ√ρ/√ρ) = div Re(∇ū⊗∇u) − ¼∇Δρ`,
/// which avoids dividing by the density.
fn momentum_flux_terms(
    u: &WaveFunction,
    params: &ModelParams,
    potential_gradient: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let grid = u.grid();
    let dim = grid.dim();
    let values = u.values();
    let grad = u.gradient()?;
    let current = current_from_gradient(values, &grad);
    let rho: Vec<f64> = values.iter().map(|c| c.norm_sqr()).collect();
    let lap_rho = grid.real_laplacian(&rho)?;
    let rho_sq: Vec<f64> = rho.iter().map(|r| r * r).collect();
    let damp_exp = (params.p - 1.0) / 2.0;

    let mut terms = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut total = vec![0.0; grid.len()];
        for j in 0..dim {
            let t_ij: Vec<f64> = grad[i]
                .iter()
                .zip(&grad[j])
                .map(|(a, b)| (a.conj() * b).re)
                .collect();
            let d = grid.real_derivative(&t_ij, j)?;
            total.iter_mut().zip(d).for_each(|(t, v)| *t += v);
        }
        let d_lap = grid.real_derivative(&lap_rho, i)?;
        let d_v = &potential_gradient[i];
        let d_rho_sq = grid.real_derivative(&rho_sq, i)?;
        for k in 0..grid.len() {
            total[k] += -0.25 * d_lap[k]
                + rho[k] * d_v[k]
                + 0.5 * params.lambda * d_rho_sq[k]
                + 2.0 * params.sigma * rho[k].powf(damp_exp) * current[i][k];
        }
        terms.push(total);
    }
    Ok((terms, current))
}

/// Relative L² residual of the momentum equation of the hydrodynamic
/// system, restricted to `{ρ_mid > 1e−10 · max ρ_mid}` and normalized by
/// `‖ρ_mid‖_{L²}` over the same set.
pub fn qhd_momentum_residual(
    u_prev: &WaveFunction,
    u_next: &WaveFunction,
    params: &ModelParams,
    dt: f64,
) -> Result<f64> {
    check_pair(u_prev, u_next, dt)?;
    let grid = u_prev.grid();
    // ∇V analytically; V itself is not periodic.
    let grad_v: Vec<Vec<f64>> = (0..grid.dim())
        .map(|i| {
            let w2 = params.omega[i] * params.omega[i];
            grid.coordinate_field(i).into_iter().map(|x| w2 * x).collect()
        })
        .collect();
    let (f_prev, j_prev) = momentum_flux_terms(u_prev, params, &grad_v)?;
    let (f_next, j_next) = momentum_flux_terms(u_next, params, &grad_v)?;
    let rho_mid: Vec<f64> = u_prev
        .values()
        .iter()
        .zip(u_next.values())
        .map(|(a, b)| 0.5 * (a.norm_sqr() + b.norm_sqr()))
        .collect();
    let peak = rho_mid.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-10 * peak;
    let mask: Vec<usize> = (0..grid.len()).filter(|&k| rho_mid[k] > floor).collect();
    if peak <= 0.0 || mask.is_empty() {
        return Err(Error::InsufficientData(
            "momentum residual mask is empty (vacuum state)".into(),
        ));
    }
    let mut res = 0.0;
    for axis in 0..grid.dim() {
        for &k in &mask {
            let r = (j_next[axis][k] - j_prev[axis][k]) / dt
                + 0.5 * (f_prev[axis][k] + f_next[axis][k]);
            res += r * r;
        }
    }
    let norm: f64 = mask.iter().map(|&k| rho_mid[k] * rho_mid[k]).sum();
    Ok((res / norm).sqrt())
}

/// `Δ√ρ/√ρ` with `√ρ` floored at `√floor`.
pub fn bohm_potential(u: &WaveFunction, floor: f64) -> Result<Vec<f64>> {
    let amp: Vec<f64> = u.values().iter().map(|c| c.norm()).collect();
    let lap = u.grid().real_laplacian(&amp)?;
    let f = floor.sqrt();
    Ok(lap.iter().zip(&amp).map(|(l, a)| l / a.max(f)).collect())
}

/// Mass decay summary of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayReport {
    pub monotone: bool,
    /// `M(t_end) / M(0)`; defined as 1 for a zero initial mass.
    pub final_fraction: f64,
}

pub fn decay_report(records: &[DiagnosticsRecord]) -> Result<DecayReport> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InsufficientData("empty trajectory".into())),
    };
    let monotone = records
        .windows(2)
        .all(|w| w[1].mass <= w[0].mass * (1.0 + MONOTONE_SLACK) + f64::MIN_POSITIVE);
    let final_fraction = if first.mass == 0.0 {
        1.0
    } else {
        last.mass / first.mass
    };
    Ok(DecayReport {
        monotone,
        final_fraction,
    })
}

/// Whether the mass decreases strictly between every pair of records.
pub fn strictly_decreasing_mass(records: &[DiagnosticsRecord]) -> bool {
    records.windows(2).all(|w| w[1].mass < w[0].mass)
}

/// Writes the header and one row per record.
pub fn write_csv<W: Write>(mut out: W, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Parses a CSV trace. Columns are located by header name; every missing
/// column and every malformed row is reported.
pub fn read_csv<R: BufRead>(input: R, path: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Format {
                path: path.into(),
                reason: "empty file, no header".into(),
            })
        }
    };
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let positions: Vec<Option<usize>> = CSV_COLUMNS
        .iter()
        .map(|c| names.iter().position(|n| n == c))
        .collect();
    let missing: Vec<&str> = CSV_COLUMNS
        .iter()
        .zip(&positions)
        .filter(|(_, p)| p.is_none())
        .map(|(c, _)| *c)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("missing columns: {}", missing.join(", ")),
        });
    }
    let positions: Vec<usize> = positions.into_iter().flatten().collect();
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let mut fields = [0.0; 13];
        let mut ok = true;
        for (slot, &pos) in positions.iter().enumerate() {
            match cells.get(pos).map(|c| c.parse::<f64>()) {
                Some(Ok(v)) => fields[slot] = v,
                _ => {
                    problems.push(format!(
                        "row {}: column `{}` missing or not a number",
                        lineno + 2,
                        CSV_COLUMNS[slot]
                    ));
                    ok = false;
                }
            }
        }
        if ok {
            records.push(DiagnosticsRecord::from_fields(fields));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            reason: problems.join("; "),
        });
    }
    Ok(records)
}
