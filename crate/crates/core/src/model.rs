//! Physical parameters, the trap potential and the energy functionals of the
//! damped cubic NLS
//!
//! ```text
//! i ∂_t u + ½ Δu = V u + λ |u|² u − i σ |u|^{p−1} u,   V = ½ Σ ω_j² x_j².
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{density_gradient, gradient_sq, current_from_gradient, WaveFunction};
use crate::grid::Grid;

/// Coefficient `c_V` of the `−c_V σ ∫ V ρ³` term in `dE_κ/dt`.
///
/// Fixed by the finite-difference energy balance (see
/// `tests/energy_balance.rs`): `c_V = 2` closes the balance to O(dt²),
/// while `c_V = 1` leaves an O(1) discrepancy whenever `V ρ³` is non-zero.
pub const V_TERM_COEFFICIENT: f64 = 2.0;

/// Parameters `λ`, `σ`, `p`, `ω_j` and the auxiliary weight `κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub sigma: f64,
    pub p: f64,
    pub omega: Vec<f64>,
    pub kappa: f64,
}

impl ModelParams {
    /// Parameters with the default weight `κ = σ/12`.
    pub fn new(lambda: f64, sigma: f64, p: f64, omega: Vec<f64>) -> Self {
        Self {
            lambda,
            sigma,
            p,
            omega,
            kappa: default_kappa(sigma),
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Every violated constraint for a `dim`-dimensional run.
    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !self.lambda.is_finite() {
            out.push(format!("lambda must be finite, got {}", self.lambda));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            out.push(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.p.is_finite() && self.p >= 3.0) {
            out.push(format!("p must be >= 3, got {}", self.p));
        }
        if dim == 3 && self.p > 5.0 {
            out.push(format!(
                "p must satisfy 3 <= p <= 5 in three dimensions, got {}",
                self.p
            ));
        }
        if self.omega.len() != dim {
            out.push(format!(
                "omega must have {dim} entries, got {}",
                self.omega.len()
            ));
        }
        if let Some(w) = self.omega.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            out.push(format!(
                "trap frequencies must be finite and >= 0 (repulsive traps are not supported), got {w}"
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            out.push(format!("kappa must be >= 0, got {}", self.kappa));
        }
        out
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let v = self.violations(dim);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }

    /// Whether `0 < κ < σ/6`, the range in which `E_κ` is controlled.
    pub fn kappa_admissible(&self) -> bool {
        self.kappa > 0.0 && self.kappa < self.sigma / 6.0
    }

    /// Interpolation constants for the `∫ρ⁴` term.
    pub fn interpolation_constants(&self) -> InterpolationConstants {
        InterpolationConstants::for_params(self)
    }
}

/// `κ = σ/12`, the midpoint of `(0, σ/6)`.
pub fn default_kappa(sigma: f64) -> f64 {
    sigma / 12.0
}

/// Splitting `2σ|λ| ∫ρ⁴ ≤ C₂ ∫ρ³ + (6σκ − C₁) ∫ρ⁵` through
/// `‖ρ‖_{L⁴} ≤ ‖ρ‖_{L³}^{3/8} ‖ρ‖_{L⁵}^{5/8}` and Young's inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationConstants {
    pub epsilon: f64,
    /// Net coefficient of `−∫ρ⁵`.
    pub c1: f64,
    /// Coefficient of the positive `∫ρ³` remainder.
    pub c2: f64,
}

impl InterpolationConstants {
    /// `ε = 3κ/|λ|` for focusing coupling. For `λ ≥ 0` the quartic term is
    /// already non-positive and no split is needed (`C₂ = 0`).
    pub fn for_params(params: &ModelParams) -> Self {
        let sigma = params.sigma;
        let kappa = params.kappa;
        if params.lambda < 0.0 {
            let lam = params.lambda.abs();
            let epsilon = 3.0 * kappa / lam;
            Self {
                epsilon,
                c1: 6.0 * sigma * kappa - lam * sigma * epsilon,
                c2: lam * sigma / epsilon,
            }
        } else {
            Self {
                epsilon: f64::INFINITY,
                c1: 6.0 * sigma * kappa,
                c2: 0.0,
            }
        }
    }
}

/// `V(x) = ½ Σ ω_j² x_j²` on the grid.
pub fn potential(params: &ModelParams, grid: &Grid) -> Result<Vec<f64>> {
    if params.omega.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: params.omega.len(),
        });
    }
    Ok(grid.map_points(|x| {
        0.5 * x
            .iter()
            .zip(&params.omega)
            .map(|(xj, wj)| wj * wj * xj * xj)
            .sum::<f64>()
    }))
}

/// The integrals every energy functional is assembled from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyParts {
    /// `½ ∫ |∇u|²`
    pub kinetic: f64,
    /// `∫ V |u|²`
    pub potential: f64,
    /// `(λ/2) ∫ |u|⁴`
    pub interaction: f64,
    /// `∫ |u|⁶`
    pub sextic: f64,
    /// `∫ |u|^{p+1}`
    pub damping_power: f64,
}

impl EnergyParts {
    pub(crate) fn assemble(
        params: &ModelParams,
        grid: &Grid,
        u: &[Complex64],
        grad: &[Vec<Complex64>],
        v: &[f64],
    ) -> Self {
        let half_exp = (params.p + 1.0) / 2.0;
        let mut kinetic = 0.0;
        let mut pot = 0.0;
        let mut quartic = 0.0;
        let mut sextic = 0.0;
        let mut damping = 0.0;
        for (i, c) in u.iter().enumerate() {
            let rho = c.norm_sqr();
            let mut g2 = 0.0;
            for g in grad {
                g2 += g[i].norm_sqr();
            }
            kinetic += g2;
            pot += v[i] * rho;
            let rho2 = rho * rho;
            quartic += rho2;
            sextic += rho2 * rho;
            // The common exponents skip powf.
            damping += if half_exp == 3.0 {
                rho2 * rho
            } else if half_exp == 2.0 {
                rho2
            } else {
                rho.powf(half_exp)
            };
        }
        let w = grid.cell_volume();
        Self {
            kinetic: 0.5 * kinetic * w,
            potential: pot * w,
            interaction: 0.5 * params.lambda * quartic * w,
            sextic: sextic * w,
            damping_power: damping * w,
        }
    }

    pub fn compute(params: &ModelParams, u: &WaveFunction) -> Result<Self> {
        let v = potential(params, u.grid())?;
        let grad = u.gradient()?;
        Ok(Self::assemble(params, u.grid(), u.values(), &grad, &v))
    }

    pub fn e0(&self) -> f64 {
        self.kinetic + self.potential + self.interaction
    }

    pub fn ekappa(&self, kappa: f64) -> f64 {
        self.e0() + kappa * self.sextic
    }

    pub fn ekappa_p(&self, kappa: f64) -> f64 {
        self.e0() + kappa * self.damping_power
    }

    pub fn elin(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// `E₀ = ∫ ½|∇u|² + V|u|² + (λ/2)|u|⁴`.
pub fn energy_e0(params: &ModelParams, u: &WaveFunction) -> Result<f64> {
    Ok(EnergyParts::compute(params, u)?.e0())
}

/// `E_κ = E₀ + κ ∫ |u|⁶`.
pub fn energy_ekappa(params: &ModelParams, u: &WaveFunction) -> Result<f64> {
    Ok(EnergyParts::compute(params, u)?.ekappa(params.kappa))
}

/// `E_{κ,p} = E₀ + κ ∫ |u|^{p+1}`.
pub fn energy_ekappa_p(params: &ModelParams, u: &WaveFunction) -> Result<f64> {
    Ok(EnergyParts::compute(params, u)?.ekappa_p(params.kappa))
}

/// `E_lin = ∫ ½|∇u|² + V|u|²`.
pub fn energy_elin(params: &ModelParams, u: &WaveFunction) -> Result<f64> {
    Ok(EnergyParts::compute(params, u)?.elin())
}

/// The six signed terms of `dE_κ/dt` for quintic damping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EkappaRhsTerms {
    /// `−σ ∫ ρ |∇ρ|²`
    pub t1: f64,
    /// `−(σ − 6κ) ∫ ρ² |∇u|²`
    pub t2: f64,
    /// `−2σλ ∫ ρ⁴`
    pub t3: f64,
    /// `−6κ ∫ ρ |½∇ρ − J|²`
    pub t4: f64,
    /// `−6σκ ∫ ρ⁵`
    pub t5: f64,
    /// `−c_V σ ∫ V ρ³`
    pub t6: f64,
}

impl EkappaRhsTerms {
    pub fn sum(&self) -> f64 {
        self.t1 + self.t2 + self.t3 + self.t4 + self.t5 + self.t6
    }

    /// `Σ|T_i|`, the scale against which the balance is judged.
    pub fn magnitude(&self) -> f64 {
        self.labeled().iter().map(|(_, t)| t.abs()).sum()
    }

    pub fn labeled(&self) -> [(&'static str, f64); 6] {
        [
            ("rho_grad_rho", self.t1),
            ("rho2_grad_u", self.t2),
            ("rho4", self.t3),
            ("rho_half_grad_rho_minus_j", self.t4),
            ("rho5", self.t5),
            ("v_rho3", self.t6),
        ]
    }

    /// Evaluates the terms with an explicit `∫Vρ³` coefficient.
    pub fn with_v_coefficient(params: &ModelParams, u: &WaveFunction, c_v: f64) -> Result<Self> {
        if params.p != 5.0 {
            return Err(Error::InvalidParams(format!(
                "the E_kappa balance is defined for quintic damping (p = 5), got p = {}",
                params.p
            )));
        }
        let grid = u.grid();
        let v = potential(params, grid)?;
        let grad = u.gradient()?;
        let values = u.values();
        let grad_rho = density_gradient(values, &grad);
        let current = current_from_gradient(values, &grad);
        let g2 = gradient_sq(&grad);

        let (sigma, kappa, lambda) = (params.sigma, params.kappa, params.lambda);
        let mut s_rho_grad_rho = 0.0;
        let mut s_rho2_grad_u = 0.0;
        let mut s_rho4 = 0.0;
        let mut s_mixed = 0.0;
        let mut s_rho5 = 0.0;
        let mut s_v_rho3 = 0.0;
        for i in 0..values.len() {
            let rho = values[i].norm_sqr();
            let mut grad_rho_sq = 0.0;
            let mut mixed_sq = 0.0;
            for axis in 0..grid.dim() {
                let gr = grad_rho[axis][i];
                grad_rho_sq += gr * gr;
                let m = 0.5 * gr - current[axis][i];
                mixed_sq += m * m;
            }
            let rho2 = rho * rho;
            s_rho_grad_rho += rho * grad_rho_sq;
            s_rho2_grad_u += rho2 * g2[i];
            s_rho4 += rho2 * rho2;
            s_mixed += rho * mixed_sq;
            s_rho5 += rho2 * rho2 * rho;
            s_v_rho3 += v[i] * rho2 * rho;
        }
        let w = grid.cell_volume();
        Ok(Self {
            t1: -sigma * s_rho_grad_rho * w,
            t2: -(sigma - 6.0 * kappa) * s_rho2_grad_u * w,
            t3: -2.0 * sigma * lambda * s_rho4 * w,
            t4: -6.0 * kappa * s_mixed * w,
            t5: -6.0 * sigma * kappa * s_rho5 * w,
            t6: -c_v * sigma * s_v_rho3 * w,
        })
    }
}

/// The right-hand side of `dE_κ/dt` with the validated `∫Vρ³` coefficient.
pub fn ekappa_rhs_terms(params: &ModelParams, u: &WaveFunction) -> Result<EkappaRhsTerms> {
    EkappaRhsTerms::with_v_coefficient(params, u, V_TERM_COEFFICIENT)
}

/// A-priori ceilings on the space-time accumulators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimeBounds {
    /// Ceiling for `∫₀ᵗ∫ ρ⁵`.
    pub l10: f64,
    /// Ceiling for `∫₀ᵗ∫ ρ² |∇u|²`.
    pub grad_weighted: f64,
    /// Ceiling for `∫₀ᵗ∫ V ρ³` (infinite when `V ≡ 0` would make it vacuous).
    pub potential_weighted: f64,
    /// Ceiling for `∫₀ᵗ ‖u‖_{L^{p+1}}^{p+1}`, i.e. `M(0)/(2σ)`.
    pub lp1: f64,
}

/// Integrating the `E_κ` inequality in time, with `E_κ(t)` bounded below by
/// `−λ²M(0)/(16κ)` (Hölder plus Young) and `∫₀^∞‖u‖⁶₆ ≤ M(0)/(2σ)`.
///
/// Defined for `p = 5`, `σ > 0` and `0 < κ < σ/6`.
pub fn space_time_bounds(params: &ModelParams, u0: &WaveFunction) -> Result<Option<SpaceTimeBounds>> {
    if params.p != 5.0 || params.sigma <= 0.0 || !params.kappa_admissible() {
        return Ok(None);
    }
    let m0 = u0.mass();
    let ek0 = energy_ekappa(params, u0)?;
    let consts = params.interpolation_constants();
    let budget = m0 / (2.0 * params.sigma);
    let lower = if params.lambda < 0.0 {
        params.lambda * params.lambda * m0 / (16.0 * params.kappa)
    } else {
        0.0
    };
    let reservoir = ek0 + consts.c2 * budget + lower;
    Ok(Some(SpaceTimeBounds {
        l10: reservoir / consts.c1,
        grad_weighted: reservoir / (params.sigma - 6.0 * params.kappa),
        potential_weighted: reservoir / (V_TERM_COEFFICIENT * params.sigma),
        lp1: budget,
    }))
}

/// Uniform ceiling on `‖u(t)‖_Σ` assembled from the initial data.
///
/// With `K = ‖∇u‖² + 2∫Vρ` the chain is
/// * `p = 5`, `λ < 0`: `K ≤ 2E_κ(0) + 2C₂ M(0)/(2σ) + (2λ²/κ) M(0)`;
/// * `p = 5`, `λ ≥ 0`: `K ≤ 2E_κ(0)`;
/// * `p = 3`, `σ ≥ max(0, −λ)`: `K ≤ 2E_lin(0)` (`λ < 0`) or `2E₀(0)`;
///
/// and then `‖∇u‖ + ‖xu‖ ≤ √((1 + 1/ω_min²) K)`. Returns `None` outside
/// these regimes or without confinement on every axis.
pub fn sigma_norm_bound(params: &ModelParams, u0: &WaveFunction) -> Result<Option<f64>> {
    let omega_min = params.omega.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(omega_min > 0.0) {
        return Ok(None);
    }
    let m0 = u0.mass();
    let parts = EnergyParts::compute(params, u0)?;
    let k_bound = if params.p == 5.0 && params.sigma > 0.0 && params.kappa_admissible() {
        let ek0 = parts.ekappa(params.kappa);
        if params.lambda < 0.0 {
            let c2 = params.interpolation_constants().c2;
            2.0 * ek0
                + 2.0 * c2 * m0 / (2.0 * params.sigma)
                + 2.0 * params.lambda * params.lambda / params.kappa * m0
        } else {
            2.0 * ek0
        }
    } else if params.p == 3.0 && params.sigma >= (-params.lambda).max(0.0) {
        if params.lambda < 0.0 {
            2.0 * parts.elin()
        } else {
            2.0 * parts.e0()
        }
    } else {
        return Ok(None);
    };
    let factor = 1.0 + 1.0 / (omega_min * omega_min);
    Ok(Some(m0.sqrt() + (factor * k_bound.max(0.0)).sqrt()))
}

/// Variance comparison for undamped focusing data.
///
/// For `σ = 0`, an isotropic trap and `d ≥ 2`, the variance `X = ∫|x|²ρ`
/// obeys `X'' = 4E₀ − 4ω²X + (d − 2)λ∫ρ²`, so for `λ < 0`
/// `X'' + 4ω²X ≤ 4E₀` (with equality in 2D). Sturm comparison with the
/// solution `Y` of the equality, started from `X(0)` and `X'(0) = 2∫x·J`,
/// gives `X ≤ Y` up to a quarter trap period; a positive `X` cannot reach
/// zero, so the first zero of `Y` bounds the collapse time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirialBound {
    pub omega: f64,
    pub e0: f64,
    pub x0: f64,
    pub dx0: f64,
}

impl VirialBound {
    /// `None` unless `σ = 0`, `λ < 0`, `d ≥ 2` and the trap is isotropic.
    pub fn new(params: &ModelParams, u0: &WaveFunction) -> Result<Option<Self>> {
        let grid = u0.grid();
        let omega = params.omega[0];
        let isotropic = params.omega.iter().all(|&w| w == omega);
        if params.sigma != 0.0 || params.lambda >= 0.0 || grid.dim() < 2 || !isotropic {
            return Ok(None);
        }
        let current = u0.current_density()?;
        let mut xj = 0.0;
        for (axis, j) in current.iter().enumerate() {
            let x = grid.coordinate_field(axis);
            xj += x.iter().zip(j).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(Some(Self {
            omega,
            e0: energy_e0(params, u0)?,
            x0: u0.position_norm().powi(2),
            dx0: 2.0 * xj * grid.cell_volume(),
        }))
    }

    /// The comparison function `Y(t)`.
    pub fn variance(&self, t: f64) -> f64 {
        let w = self.omega;
        if w == 0.0 {
            return self.x0 + self.dx0 * t + 2.0 * self.e0 * t * t;
        }
        let c = self.e0 / (w * w);
        (self.x0 - c) * (2.0 * w * t).cos() + self.dx0 / (2.0 * w) * (2.0 * w * t).sin() + c
    }

    /// First zero of `Y` within the range where the comparison holds.
    pub fn collapse_time(&self) -> Option<f64> {
        let horizon = if self.omega == 0.0 {
            if self.e0 >= 0.0 {
                return None;
            }
            // Past the larger root of the parabola.
            (self.dx0.abs() + (self.dx0 * self.dx0 - 8.0 * self.e0 * self.x0).sqrt())
                / (-4.0 * self.e0)
                * 1.01
        } else {
            std::f64::consts::PI / (2.0 * self.omega)
        };
        const SCAN: usize = 4096;
        let mut lo = 0.0;
        for i in 1..=SCAN {
            let t = horizon * i as f64 / SCAN as f64;
            if self.variance(t) <= 0.0 {
                let mut hi = t;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if self.variance(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(hi);
            }
            lo = t;
        }
        None
    }
}
