//! Independent reference solutions for cross-checking the propagator.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::grid::Grid;
use crate::model::{potential, ModelParams};

pub const CN_MAX_POINTS: usize = 2048;
pub const CN_MAX_ITERATIONS: usize = 50;
pub const CN_TOLERANCE: f64 = 1e-12;
pub const ODE_SUBSTEPS: usize = 10_000;

/// Factorization of a cyclic tridiagonal system with constant off-diagonal.
struct CyclicSystem {
    off: Complex64,
    /// Thomas elimination of the corner-corrected matrix.
    c_prime: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
    gamma: Complex64,
    /// Solution of the correction system.
    z: Vec<Complex64>,
    z_factor: Complex64,
}

impl CyclicSystem {
    fn new(diag: &[Complex64], off: Complex64) -> Self {
        let n = diag.len();
        let gamma = -diag[0];
        let mut b = diag.to_vec();
        b[0] -= gamma;
        b[n - 1] -= off * off / gamma;

        let mut c_prime = vec![Complex64::default(); n];
        let mut inv_denom = vec![Complex64::default(); n];
        inv_denom[0] = 1.0 / b[0];
        c_prime[0] = off * inv_denom[0];
        for i in 1..n {
            let denom = b[i] - off * c_prime[i - 1];
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = off * inv_denom[i];
        }
        let mut sys = Self {
            off,
            c_prime,
            inv_denom,
            gamma,
            z: Vec::new(),
            z_factor: Complex64::default(),
        };
        let mut corr = vec![Complex64::default(); n];
        corr[0] = gamma;
        corr[n - 1] = off;
        sys.thomas(&mut corr);
        sys.z_factor = 1.0 + corr[0] + off * corr[n - 1] / gamma;
        sys.z = corr;
        sys
    }

    fn thomas(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.c_prime[i] * rhs[i + 1];
        }
    }

    fn solve(&self, rhs: &mut [Complex64]) {
        self.thomas(rhs);
        let n = rhs.len();
        let f = (rhs[0] + self.off * rhs[n - 1] / self.gamma) / self.z_factor;
        for (x, z) in rhs.iter_mut().zip(&self.z) {
            *x -= f * z;
        }
    }
}

fn nonlinear_term(params: &ModelParams, u: Complex64) -> Complex64 {
    let rho = u.norm_sqr();
    let damping = if params.sigma == 0.0 || rho == 0.0 {
        0.0
    } else {
        params.sigma * rho.powf((params.p - 1.0) / 2.0)
    };
    u * Complex64::new(params.lambda * rho, -damping)
}

/// One Crank–Nicolson step of size `dt` with the kinetic and trap terms
/// implicit and the nonlinear terms at the midpoint.
struct CrankNicolson<'a> {
    params: &'a ModelParams,
    system: CyclicSystem,
    explicit_diag: Vec<Complex64>,
    explicit_off: Complex64,
    dt: f64,
}

impl<'a> CrankNicolson<'a> {
    fn new(params: &'a ModelParams, grid: &Grid, v: &[f64], dt: f64) -> Self {
        let h = grid.spacing()[0];
        let off_h = -0.5 / (h * h);
        let half = Complex64::new(0.0, 0.5 * dt);
        let diag: Vec<Complex64> = v
            .iter()
            .map(|&vj| 1.0 + half * (1.0 / (h * h) + vj))
            .collect();
        let explicit_diag = v
            .iter()
            .map(|&vj| 1.0 - half * (1.0 / (h * h) + vj))
            .collect();
        Self {
            params,
            system: CyclicSystem::new(&diag, half * off_h),
            explicit_diag,
            explicit_off: -half * off_h,
            dt,
        }
    }

    fn step(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = u.len();
        let base: Vec<Complex64> = (0..n)
            .map(|j| {
                let left = u[(j + n - 1) % n];
                let right = u[(j + 1) % n];
                self.explicit_diag[j] * u[j] + self.explicit_off * (left + right)
            })
            .collect();
        let idt = Complex64::new(0.0, self.dt);
        let mut next = u.to_vec();
        let mut last_update = f64::INFINITY;
        for _ in 0..CN_MAX_ITERATIONS {
            let mut rhs: Vec<Complex64> = base
                .iter()
                .zip(u.iter().zip(&next))
                .map(|(b, (a, c))| b - idt * nonlinear_term(self.params, 0.5 * (a + c)))
                .collect();
            self.system.solve(&mut rhs);
            let scale = rhs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
            last_update = rhs
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                / scale;
            next = rhs;
            if last_update <= CN_TOLERANCE {
                return Ok(next);
            }
        }
        Err(Error::FixedPointDivergence {
            iterations: CN_MAX_ITERATIONS,
            last_update,
            tolerance: CN_TOLERANCE,
        })
    }
}

/// Second-order finite-difference, Crank–Nicolson reference solver for the
/// full 1D equation on the same periodic box as the spectral grid.
pub fn crank_nicolson_evolve(
    u0: &WaveFunction,
    params: &ModelParams,
    dt: f64,
    t_end: f64,
) -> Result<WaveFunction> {
    let grid = u0.grid();
    if grid.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: grid.dim(),
        });
    }
    if grid.len() > CN_MAX_POINTS {
        return Err(Error::InvalidGrid(format!(
            "the finite-difference reference is limited to {CN_MAX_POINTS} points, got {}",
            grid.len()
        )));
    }
    params.validate(1)?;
    if !(dt.is_finite() && dt >= 0.0 && t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "dt and t_end must be finite and nonnegative, got {dt} and {t_end}"
        )));
    }
    if dt == 0.0 || t_end == 0.0 {
        return Ok(u0.clone());
    }
    let v = potential(params, grid)?;
    let full = CrankNicolson::new(params, grid, &v, dt);
    let mut u = u0.values().to_vec();
    let steps = (t_end / dt).floor() as usize;
    for _ in 0..steps {
        u = full.step(&u)?;
    }
    let rest = t_end - steps as f64 * dt;
    if rest > 1e-12 * dt {
        u = CrankNicolson::new(params, grid, &v, rest).step(&u)?;
    }
    WaveFunction::new(grid.clone(), u)
}

/// Classical RK4 for `ρ' = −2σρ^{(p+1)/2}`, `Φ' = ρ` over `dt`.
pub fn ode_substep_oracle(rho0: f64, sigma: f64, p: f64, dt: f64) -> (f64, f64) {
    if rho0 <= 0.0 {
        return (0.0, 0.0);
    }
    if sigma == 0.0 {
        return (rho0, rho0 * dt);
    }
    let f = |rho: f64| -2.0 * sigma * rho.max(0.0).powf((p + 1.0) / 2.0);
    let h = dt / ODE_SUBSTEPS as f64;
    let mut rho = rho0;
    let mut phi = 0.0;
    for _ in 0..ODE_SUBSTEPS {
        let k1 = f(rho);
        let r2 = rho + 0.5 * h * k1;
        let k2 = f(r2);
        let r3 = rho + 0.5 * h * k2;
        let k3 = f(r3);
        let r4 = rho + h * k3;
        let k4 = f(r4);
        phi += h / 6.0 * (rho + 2.0 * r2 + 2.0 * r3 + r4);
        rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    (rho, phi)
}

/// Ground state of the (anisotropic) harmonic oscillator `−½Δ + V`.
pub fn hermite_ground_state(grid: &Grid, omega: &[f64]) -> Result<WaveFunction> {
    if omega.len() != grid.dim() {
        return Err(Error::LengthMismatch {
            expected: grid.dim(),
            found: omega.len(),
        });
    }
    if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "trap frequencies must be positive, got {w}"
        )));
    }
    let norm: f64 = omega.iter().map(|w| (w / PI).powf(0.25)).product();
    WaveFunction::from_fn(grid.clone(), |x| {
        let exponent: f64 = x.iter().zip(omega).map(|(xj, w)| -0.5 * w * xj * xj).sum();
        Complex64::new(norm * exponent.exp(), 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::energy_elin;

    #[test]
    fn cyclic_solver_inverts_its_matrix() {
        let n = 16;
        let diag: Vec<Complex64> = (0..n).map(|j| Complex64::new(3.0 + j as f64 * 0.1, 0.5)).collect();
        let off = Complex64::new(-0.4, 0.7);
        let x: Vec<Complex64> = (0..n).map(|j| Complex64::new((j as f64).sin(), (j as f64).cos())).collect();
        let mut rhs: Vec<Complex64> = (0..n)
            .map(|j| diag[j] * x[j] + off * (x[(j + n - 1) % n] + x[(j + 1) % n]))
            .collect();
        CyclicSystem::new(&diag, off).solve(&mut rhs);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn ode_oracle_examples() {
        assert_eq!(ode_substep_oracle(0.7, 0.0, 5.0, 2.0).0, 0.7);
        assert!((ode_substep_oracle(0.7, 0.0, 5.0, 2.0).1 - 1.4).abs() < 1e-13);
        assert_eq!(ode_substep_oracle(0.0, 0.3, 5.0, 1.0), (0.0, 0.0));
        let (rho, _) = ode_substep_oracle(1.0, 0.1, 5.0, 1.0);
        assert!((rho - 0.845_154_3).abs() < 1e-7);
        assert!((rho - 1.4f64.powf(-0.5)).abs() < 1e-10);
    }

    #[test]
    fn ode_oracle_mass_decrease_is_monotone_in_dt() {
        let mut last = 1.0;
        for k in 1..20 {
            let (rho, _) = ode_substep_oracle(1.0, 0.3, 4.0, 0.1 * k as f64);
            assert!(rho < last);
            last = rho;
        }
    }

    #[test]
    fn hermite_examples() {
        let g = Grid::new(1, &[256], &[10.0]).unwrap();
        let phi = hermite_ground_state(&g, &[1.0]).unwrap();
        assert!((phi.mass() - 1.0).abs() < 1e-10);
        assert!((phi.values()[128].re - PI.powf(-0.25)).abs() < 1e-12);
        assert!((phi.values()[128].re - 0.751_125_5).abs() < 1e-7);
        let params = ModelParams::new(0.0, 0.0, 3.0, vec![1.0]);
        assert!((energy_elin(&params, &phi).unwrap() - 0.5).abs() < 1e-8);

        let g3 = Grid::new(3, &[32, 32, 32], &[8.0, 6.0, 5.0]).unwrap();
        let omega = vec![1.0, 2.0, 3.0];
        let phi3 = hermite_ground_state(&g3, &omega).unwrap();
        assert!((phi3.mass() - 1.0).abs() < 1e-10);
        let params3 = ModelParams::new(0.0, 0.0, 3.0, omega);
        assert!((energy_elin(&params3, &phi3).unwrap() - 3.0).abs() < 1e-8);

        assert!(hermite_ground_state(&g, &[0.0]).is_err());
        assert!(hermite_ground_state(&g, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn crank_nicolson_rejects_other_dimensions() {
        let g = Grid::new(2, &[16, 16], &[4.0, 4.0]).unwrap();
        let u = WaveFunction::zeros(g);
        let p = ModelParams::new(0.0, 0.0, 3.0, vec![1.0, 1.0]);
        assert!(matches!(
            crank_nicolson_evolve(&u, &p, 1e-3, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let big = Grid::new(1, &[4096], &[8.0]).unwrap();
        let p1 = ModelParams::new(0.0, 0.0, 3.0, vec![1.0]);
        assert!(crank_nicolson_evolve(&WaveFunction::zeros(big), &p1, 1e-3, 1.0).is_err());
    }

    #[test]
    fn crank_nicolson_zero_dt_is_identity() {
        let g = Grid::new(1, &[64], &[8.0]).unwrap();
        let u = hermite_ground_state(&g, &[1.0]).unwrap();
        let p = ModelParams::new(-1.0, 0.2, 5.0, vec![1.0]);
        assert_eq!(crank_nicolson_evolve(&u, &p, 0.0, 1.0).unwrap(), u);
    }

    #[test]
    fn crank_nicolson_keeps_eigenstate() {
        let g = Grid::new(1, &[1024], &[8.0]).unwrap();
        let phi = hermite_ground_state(&g, &[1.0]).unwrap();
        let p = ModelParams::new(0.0, 0.0, 3.0, vec![1.0]);
        let out = crank_nicolson_evolve(&phi, &p, 1e-3, 1.0).unwrap();
        let exact = phi.scaled(Complex64::from_polar(1.0, -0.5));
        assert!(out.distance(&exact).unwrap() < 1e-4);
    }
}
