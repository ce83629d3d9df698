//! The wave function container and its norms and observables.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A complex field sampled on a [`Grid`]. All values are finite.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl PartialEq for WaveFunction {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if values.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("wave function"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![Complex64::default(); grid.len()];
        Self { grid, values }
    }

    /// Samples `f(x)` on every grid point.
    pub fn from_fn(grid: Grid, f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        let values = grid.map_points(f);
        Self::new(grid, values)
    }

    /// Wraps values that the caller guarantees are finite and correctly sized.
    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|c| c.is_finite())
    }

    /// `c · u`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self::from_parts_unchecked(self.grid.clone(), self.values.iter().map(|v| v * c).collect())
    }

    /// Pointwise `|u|²`.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn gradient(&self) -> Result<Vec<Vec<Complex64>>> {
        self.grid.spectral_gradient(&self.values)
    }

    /// Current density `J_j = Im(ū ∂_j u)`.
    pub fn current_density(&self) -> Result<Vec<Vec<f64>>> {
        let grad = self.gradient()?;
        Ok(current_from_gradient(&self.values, &grad))
    }

    /// `‖u‖_{L^r}` for `r ≥ 1`.
    pub fn lp_norm(&self, r: f64) -> Result<f64> {
        check_exponent(r)?;
        Ok(self
            .grid
            .sum_quadrature(self.values.iter().map(|c| c.norm().powf(r)))
            .powf(1.0 / r))
    }

    /// `‖u‖_{L^r}^r`, avoiding the root when only the integral is wanted.
    pub fn lp_norm_pow(&self, r: f64) -> Result<f64> {
        check_exponent(r)?;
        Ok(self
            .grid
            .sum_quadrature(self.values.iter().map(|c| c.norm().powf(r))))
    }

    /// Total mass `‖u‖²_{L²}`.
    pub fn mass(&self) -> f64 {
        self.grid
            .sum_quadrature(self.values.iter().map(|c| c.norm_sqr()))
    }

    /// `‖∇u‖_{L²}`.
    pub fn gradient_norm(&self) -> Result<f64> {
        let grad = self.gradient()?;
        Ok(gradient_norm_sq(&self.grid, &grad).sqrt())
    }

    /// `‖x u‖_{L²}` with `x` the box coordinate.
    pub fn position_norm(&self) -> f64 {
        position_norm_sq(&self.grid, &self.values).sqrt()
    }

    /// `‖u‖_Σ = ‖u‖_{L²} + ‖∇u‖_{L²} + ‖x u‖_{L²}`.
    pub fn sigma_norm(&self) -> Result<f64> {
        Ok(self.mass().sqrt() + self.gradient_norm()? + self.position_norm())
    }

    /// L² distance to another field on the same grid.
    pub fn distance(&self, other: &WaveFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("fields live on different grids".into()));
        }
        Ok(self
            .grid
            .sum_quadrature(
                self.values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| (a - b).norm_sqr()),
            )
            .sqrt())
    }

    /// Spectral interpolation onto a grid with twice the points per axis
    /// and the same box.
    pub fn refined(&self) -> Result<WaveFunction> {
        let grid = &self.grid;
        let fine_points: Vec<usize> = grid.points().iter().map(|n| 2 * n).collect();
        let fine = Grid::new(grid.dim(), &fine_points, grid.half_width())?;
        let mut coarse = self.values.clone();
        grid.fft_forward(&mut coarse);
        let mut spectrum = vec![Complex64::default(); fine.len()];
        let dim = grid.dim();
        for (flat, &c) in coarse.iter().enumerate() {
            let idx = grid.multi_index(flat);
            let mut fine_flat = 0;
            let mut nyquist_axes = 0;
            for axis in 0..dim {
                let n = grid.points()[axis];
                let m = idx[axis];
                if m == n / 2 {
                    nyquist_axes += 1;
                }
                let fm = if m < n / 2 { m } else { m + n };
                fine_flat = fine_flat * fine_points[axis] + fm;
            }
            // Nyquist modes are ambiguous on the coarse grid; keep them out.
            if nyquist_axes == 0 {
                spectrum[fine_flat] = c;
            }
        }
        fine.fft_inverse(&mut spectrum);
        let scale = 1.0 / grid.len() as f64;
        spectrum.iter_mut().for_each(|c| *c *= scale);
        WaveFunction::new(fine, spectrum)
    }

    /// Relative change of `‖u‖_{L^r}^r` when the field is re-sampled on a
    /// twice-finer grid. Large values flag aliasing in pointwise powers.
    pub fn resolution_check(&self, r: f64) -> Result<f64> {
        let coarse = self.lp_norm_pow(r)?;
        let fine = self.refined()?.lp_norm_pow(r)?;
        if coarse == 0.0 && fine == 0.0 {
            return Ok(0.0);
        }
        Ok((fine - coarse).abs() / coarse.abs().max(fine.abs()))
    }
}

fn check_exponent(r: f64) -> Result<()> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "norm exponent must be finite and at least 1, got {r}"
        )));
    }
    Ok(())
}

/// `‖f‖_{L^r}` of a real field.
pub fn real_lp_norm(grid: &Grid, values: &[f64], r: f64) -> Result<f64> {
    check_exponent(r)?;
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powf(r)).collect();
    Ok(grid.integrate(&powered)?.powf(1.0 / r))
}

pub(crate) fn current_from_gradient(u: &[Complex64], grad: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    grad.iter()
        .map(|g| u.iter().zip(g).map(|(a, b)| (a.conj() * b).im).collect())
        .collect()
}

/// `∇ρ = 2 Re(ū ∇u)`.
pub(crate) fn density_gradient(u: &[Complex64], grad: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    grad.iter()
        .map(|g| u.iter().zip(g).map(|(a, b)| 2.0 * (a.conj() * b).re).collect())
        .collect()
}

/// Pointwise `|∇u|²`.
pub(crate) fn gradient_sq(grad: &[Vec<Complex64>]) -> Vec<f64> {
    let mut out = vec![0.0; grad[0].len()];
    for g in grad {
        out.iter_mut().zip(g).for_each(|(o, c)| *o += c.norm_sqr());
    }
    out
}

pub(crate) fn gradient_norm_sq(grid: &Grid, grad: &[Vec<Complex64>]) -> f64 {
    grid.sum_quadrature(grad.iter().flat_map(|g| g.iter().map(|c| c.norm_sqr())))
}

pub(crate) fn position_norm_sq(grid: &Grid, u: &[Complex64]) -> f64 {
    let r2 = grid.map_points(|x| x.iter().map(|v| v * v).sum::<f64>());
    grid.sum_quadrature(u.iter().zip(&r2).map(|(c, r)| c.norm_sqr() * r))
}
