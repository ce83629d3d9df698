//! Uniform periodic tensor grids, FFT plans, spectral derivatives and quadrature.
//!
//! Fields are stored row-major (last axis fastest). Axis `j` covers
//! `[-L_j, L_j)` with `n_j` points, spacing `h_j = 2 L_j / n_j`, and the
//! wavenumbers are kept in FFT-native order (`0, Δk, ..., -Δk`) with
//! `Δk_j = π / L_j`.
//!
//! The physical transform pair is normalized so that it approximates the
//! continuous unitary Fourier transform:
//!
//! ```text
//! û(k) = (∏ h_j) / (2π)^{d/2} · Σ_x u(x) e^{-i k·(x + L)}
//! ```
//!
//! With this choice Parseval reads `(∏ h_j) Σ |u|² = (∏ Δk_j) Σ |û|²`. The
//! constant phase `e^{-i k·L}` from the shifted origin is dropped; it has no
//! effect on multipliers or on any quadratic quantity.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Columns transformed together along a strided axis.
const COLUMN_BATCH: usize = 16;

/// Density fraction at the box edge above which a run is flagged as
/// feeling the periodic boundary.
pub const BOUNDARY_DENSITY_TOLERANCE: f64 = 1e-12;

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct GridInner {
    points: Vec<usize>,
    half_width: Vec<f64>,
    spacing: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
    /// Same as `wavenumbers` with the Nyquist entry zeroed; used for odd derivatives.
    derivative_wavenumbers: Vec<Vec<f64>>,
    coordinates: Vec<Vec<f64>>,
    k_squared: Vec<f64>,
    plans: Vec<AxisPlan>,
    len: usize,
}

/// A uniform periodic tensor grid in one to three dimensions.
///
/// Cloning is cheap; all tables and FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("points", &self.inner.points)
            .field("half_width", &self.inner.half_width)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.points == other.inner.points
                && self.inner.half_width == other.inner.half_width)
    }
}

/// FFT-native wavenumber ordering for `n` points with spacing `dk`.
fn native_wavenumbers(n: usize, dk: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            if m < n / 2 {
                m as f64 * dk
            } else {
                (m as f64 - n as f64) * dk
            }
        })
        .collect()
}

impl Grid {
    /// Builds a grid with `points[j]` samples on `[-half_width[j], half_width[j])`.
    pub fn new(dim: usize, points: &[usize], half_width: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if points.len() != dim || half_width.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} entries per axis list, got {} point counts and {} half widths",
                points.len(),
                half_width.len()
            )));
        }
        for (axis, &n) in points.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: point count {n} must be a power of two and at least 8"
                )));
            }
        }
        for (axis, &l) in half_width.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: half width {l} must be positive and finite"
                )));
            }
        }
        let len = points
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&len| len <= isize::MAX as usize / std::mem::size_of::<Complex64>())
            .ok_or_else(|| Error::InvalidGrid("total point count overflows".into()))?;

        let spacing: Vec<f64> = points
            .iter()
            .zip(half_width)
            .map(|(&n, &l)| 2.0 * l / n as f64)
            .collect();
        let wavenumbers: Vec<Vec<f64>> = points
            .iter()
            .zip(half_width)
            .map(|(&n, &l)| native_wavenumbers(n, PI / l))
            .collect();
        let derivative_wavenumbers = wavenumbers
            .iter()
            .map(|k| {
                let mut k = k.clone();
                let nyquist = k.len() / 2;
                k[nyquist] = 0.0;
                k
            })
            .collect();
        let coordinates = points
            .iter()
            .zip(half_width)
            .zip(&spacing)
            .map(|((&n, &l), &h)| (0..n).map(|m| -l + m as f64 * h).collect())
            .collect();

        let mut planner = FftPlanner::new();
        let plans = points
            .iter()
            .map(|&n| AxisPlan {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
            .collect();

        let mut inner = GridInner {
            points: points.to_vec(),
            half_width: half_width.to_vec(),
            spacing,
            wavenumbers,
            derivative_wavenumbers,
            coordinates,
            k_squared: Vec::new(),
            plans,
            len,
        };
        inner.k_squared = tensor_sum(&inner.points, |axis, m| {
            let k = inner.wavenumbers[axis][m];
            k * k
        });
        Ok(Grid {
            inner: Arc::new(inner),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.inner.points
    }

    pub fn half_width(&self) -> &[f64] {
        &self.inner.half_width
    }

    pub fn spacing(&self) -> &[f64] {
        &self.inner.spacing
    }

    /// Wavenumbers of one axis in FFT-native order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.inner.wavenumbers[axis]
    }

    /// Sample positions of one axis, starting at `-L`.
    pub fn coordinates(&self, axis: usize) -> &[f64] {
        &self.inner.coordinates[axis]
    }

    /// The coordinate `x_axis` at every point, flattened like a field.
    pub fn coordinate_field(&self, axis: usize) -> Vec<f64> {
        self.map_points(|x| x[axis])
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    /// Volume of one cell, `∏ h_j`.
    pub fn cell_volume(&self) -> f64 {
        self.inner.spacing.iter().product()
    }

    /// Volume of one wavenumber cell, `∏ Δk_j`.
    pub fn spectral_cell_volume(&self) -> f64 {
        self.inner.half_width.iter().map(|l| PI / l).product()
    }

    /// Side lengths of the periodic box, `2 L_j`.
    pub fn box_volume(&self) -> f64 {
        self.inner.half_width.iter().map(|l| 2.0 * l).product()
    }

    /// Row-major multi-index of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for axis in (0..self.dim()).rev() {
            let n = self.inner.points[axis];
            idx[axis] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Evaluates `f(x)` at every grid point; `x` has `dim` entries.
    pub fn map_points<T>(&self, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.len());
        let mut x = [0.0; 3];
        for flat in 0..self.len() {
            let idx = self.multi_index(flat);
            for axis in 0..dim {
                x[axis] = self.inner.coordinates[axis][idx[axis]];
            }
            out.push(f(&x[..dim]));
        }
        out
    }

    /// `|k|²` at every point of wavenumber space.
    pub fn laplacian_symbol(&self) -> &[f64] {
        &self.inner.k_squared
    }

    /// `(∏ h_j) Σ values`. Rejects non-finite input.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        let mut sum = 0.0;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("integrand"));
            }
            sum += v;
        }
        Ok(sum * self.cell_volume())
    }

    /// Quadrature without the finiteness check, for hot loops over values
    /// already known to be finite.
    pub(crate) fn sum_quadrature(&self, values: impl Iterator<Item = f64>) -> f64 {
        values.sum::<f64>() * self.cell_volume()
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }

    fn transform_scale(&self) -> f64 {
        self.cell_volume() / (2.0 * PI).powf(self.dim() as f64 / 2.0)
    }

    /// Physical forward transform (see module docs for the normalization).
    pub fn forward(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(values.len())?;
        let mut out = values.to_vec();
        self.fft_forward(&mut out);
        let scale = self.transform_scale();
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }

    /// Inverse of [`Grid::forward`].
    pub fn inverse(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(spectrum.len())?;
        let mut out = spectrum.to_vec();
        self.fft_inverse(&mut out);
        let scale = 1.0 / (self.transform_scale() * self.len() as f64);
        out.iter_mut().for_each(|c| *c *= scale);
        Ok(out)
    }

    /// `(∏ Δk_j) Σ |û|²`, the transform-side counterpart of the L² quadrature.
    pub fn spectral_quadrature(&self, spectrum: &[Complex64]) -> f64 {
        spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.spectral_cell_volume()
    }

    /// Spectral gradient: component `j` is `F⁻¹[i k_j F u]`.
    ///
    /// The Nyquist mode is dropped from odd derivatives so that real input
    /// gives real output.
    pub fn spectral_gradient(&self, u: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_len(u.len())?;
        if u.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spectral_gradient input"));
        }
        let mut spectrum = u.to_vec();
        self.fft_forward(&mut spectrum);
        Ok(self.gradient_from_raw_spectrum(&spectrum))
    }

    /// Gradient from an unnormalized forward FFT of the field.
    pub(crate) fn gradient_from_raw_spectrum(&self, spectrum: &[Complex64]) -> Vec<Vec<Complex64>> {
        let norm = 1.0 / self.len() as f64;
        (0..self.dim())
            .map(|axis| {
                let k = &self.inner.derivative_wavenumbers[axis];
                let mut component = spectrum.to_vec();
                self.for_each_axis_index(axis, |flat, m| {
                    component[flat] *= Complex64::new(0.0, k[m] * norm);
                });
                self.fft_inverse(&mut component);
                component
            })
            .collect()
    }

    /// Spectral divergence of a real vector field.
    pub fn spectral_divergence(&self, field: &[Vec<f64>]) -> Result<Vec<f64>> {
        if field.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: field.len(),
            });
        }
        let mut total = vec![0.0; self.len()];
        for (axis, component) in field.iter().enumerate() {
            let d = self.real_derivative(component, axis)?;
            total.iter_mut().zip(d).for_each(|(t, v)| *t += v);
        }
        Ok(total)
    }

    /// Spectral partial derivative of a real field along `axis`.
    pub fn real_derivative(&self, values: &[f64], axis: usize) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        let mut spectrum: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_forward(&mut spectrum);
        let k = &self.inner.derivative_wavenumbers[axis];
        let norm = 1.0 / self.len() as f64;
        self.for_each_axis_index(axis, |flat, m| {
            spectrum[flat] *= Complex64::new(0.0, k[m] * norm);
        });
        self.fft_inverse(&mut spectrum);
        Ok(spectrum.into_iter().map(|c| c.re).collect())
    }

    /// Spectral Laplacian of a real field.
    pub fn real_laplacian(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        let mut spectrum: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_forward(&mut spectrum);
        let norm = 1.0 / self.len() as f64;
        spectrum
            .iter_mut()
            .zip(&self.inner.k_squared)
            .for_each(|(c, &k2)| *c *= -k2 * norm);
        self.fft_inverse(&mut spectrum);
        Ok(spectrum.into_iter().map(|c| c.re).collect())
    }

    /// Largest density on the outermost layer of cells divided by the peak
    /// density. Zero fields report zero.
    pub fn boundary_fraction(&self, density: &[f64]) -> f64 {
        let peak = density.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return 0.0;
        }
        let dim = self.dim();
        let mut edge = 0.0f64;
        for (flat, &rho) in density.iter().enumerate() {
            let idx = self.multi_index(flat);
            let on_edge =
                (0..dim).any(|axis| idx[axis] == 0 || idx[axis] == self.inner.points[axis] - 1);
            if on_edge {
                edge = edge.max(rho);
            }
        }
        edge / peak
    }

    /// Calls `f(flat, m)` for every point, where `m` is the index along `axis`.
    fn for_each_axis_index(&self, axis: usize, mut f: impl FnMut(usize, usize)) {
        let n = self.inner.points[axis];
        let stride: usize = self.inner.points[axis + 1..].iter().product();
        let mut m = 0;
        for start in (0..self.len()).step_by(stride) {
            for flat in start..start + stride {
                f(flat, m);
            }
            m = if m + 1 == n { 0 } else { m + 1 };
        }
    }

    /// Unnormalized in-place forward FFT over every axis.
    pub(crate) fn fft_forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.dim() {
            let plan = self.inner.plans[axis].forward.clone();
            self.fft_axis(data, axis, plan.as_ref());
        }
    }

    /// Unnormalized in-place inverse FFT over every axis (no `1/N`).
    pub(crate) fn fft_inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.dim() {
            let plan = self.inner.plans[axis].inverse.clone();
            self.fft_axis(data, axis, plan.as_ref());
        }
    }

    fn fft_axis(&self, data: &mut [Complex64], axis: usize, plan: &dyn Fft<f64>) {
        let n = self.inner.points[axis];
        let stride: usize = self.inner.points[axis + 1..].iter().product();
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        // Gather a few columns at a time so both the strided reads and the
        // contiguous lines stay in cache.
        let batch = COLUMN_BATCH.min(stride);
        let mut lines = vec![Complex64::default(); batch * n];
        for chunk in data.chunks_exact_mut(n * stride) {
            for s0 in (0..stride).step_by(batch) {
                let width = batch.min(stride - s0);
                for m in 0..n {
                    let row = &chunk[m * stride + s0..m * stride + s0 + width];
                    for (b, &c) in row.iter().enumerate() {
                        lines[b * n + m] = c;
                    }
                }
                plan.process_with_scratch(&mut lines[..width * n], &mut scratch);
                for m in 0..n {
                    let row = &mut chunk[m * stride + s0..m * stride + s0 + width];
                    for (b, c) in row.iter_mut().enumerate() {
                        *c = lines[b * n + m];
                    }
                }
            }
        }
    }
}

/// Builds `Σ_j g(j, m_j)` over the full tensor grid.
fn tensor_sum(points: &[usize], g: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let len: usize = points.iter().product();
    let dim = points.len();
    let mut out = Vec::with_capacity(len);
    for flat in 0..len {
        let mut rest = flat;
        let mut total = 0.0;
        for axis in (0..dim).rev() {
            let n = points[axis];
            total += g(axis, rest % n);
            rest /= n;
        }
        out.push(total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Direct `O(n)`-per-point DFT along one axis.
    fn naive_axis_dft(points: &[usize], data: &[Complex64], axis: usize) -> Vec<Complex64> {
        let n = points[axis];
        let stride: usize = points[axis + 1..].iter().product();
        let mut out = vec![Complex64::default(); data.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let m = (flat / stride) % n;
            let base = flat - m * stride;
            for j in 0..n {
                let angle = -2.0 * std::f64::consts::PI * (m * j) as f64 / n as f64;
                *o += data[base + j * stride] * Complex64::from_polar(1.0, angle);
            }
        }
        out
    }

    #[test]
    fn batched_axis_transforms_match_a_direct_dft() {
        // Strides above and below the column batch, and a ragged last axis.
        let points = [8, 32, 64];
        let grid = Grid::new(3, &points, &[1.0, 2.0, 3.0]).unwrap();
        let data: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new(((i * 7919) % 113) as f64 - 56.0, ((i * 104729) % 97) as f64))
            .collect();
        let mut fast = data.clone();
        grid.fft_forward(&mut fast);
        let mut slow = data;
        for axis in 0..3 {
            slow = naive_axis_dft(&points, &slow, axis);
        }
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max_abs_diff(&fast, &slow) < 1e-12 * scale);
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn make_grid_basic_1d() {
        let g = Grid::new(1, &[256], &[8.0]).unwrap();
        assert_eq!(g.spacing()[0], 0.0625);
        assert_relative_eq!(g.wavenumbers(0)[1], PI / 8.0);
        assert_eq!(g.len(), 256);
    }

    #[test]
    fn make_grid_3d_point_count() {
        let g = Grid::new(3, &[64, 64, 64], &[8.0, 8.0, 8.0]).unwrap();
        assert_eq!(g.len(), 262_144);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(Grid::new(1, &[100], &[8.0]).is_err());
        assert!(Grid::new(1, &[4], &[8.0]).is_err());
        assert!(Grid::new(1, &[64], &[0.0]).is_err());
        assert!(Grid::new(1, &[64], &[-1.0]).is_err());
        assert!(Grid::new(4, &[8, 8, 8, 8], &[1.0; 4]).is_err());
        assert!(Grid::new(0, &[], &[]).is_err());
        assert!(Grid::new(2, &[64], &[8.0]).is_err());
    }

    #[test]
    fn wavenumber_invariants() {
        let g = Grid::new(2, &[32, 16], &[3.0, 5.0]).unwrap();
        for axis in 0..2 {
            let k = g.wavenumbers(axis);
            assert_eq!(k.len(), g.points()[axis]);
            let kmax = k.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert_relative_eq!(kmax, PI / g.spacing()[axis], max_relative = 1e-14);
            assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
            assert_relative_eq!(
                g.spacing()[axis],
                2.0 * g.half_width()[axis] / g.points()[axis] as f64
            );
        }
    }

    #[test]
    fn integrate_constant_and_zero() {
        let g = Grid::new(1, &[256], &[8.0]).unwrap();
        assert_relative_eq!(g.integrate(&vec![1.0; 256]).unwrap(), 16.0);
        assert_eq!(g.integrate(&vec![0.0; 256]).unwrap(), 0.0);
        let mut bad = vec![0.0; 256];
        bad[3] = f64::NAN;
        assert!(g.integrate(&bad).is_err());
    }

    #[test]
    fn integrate_gaussian() {
        let g = Grid::new(1, &[512], &[16.0]).unwrap();
        let f = g.map_points(|x| (-x[0] * x[0]).exp());
        assert!((g.integrate(&f).unwrap() - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn laplacian_symbol_values() {
        let g = Grid::new(1, &[64], &[4.0]).unwrap();
        let sym = g.laplacian_symbol();
        assert_eq!(sym[0], 0.0);
        let nyq = PI / g.spacing()[0];
        assert_relative_eq!(sym[32], nyq * nyq, max_relative = 1e-14);
        assert!(sym.iter().skip(1).all(|&v| v > 0.0));

        // Δk = 1 on [-π, π); index (1, 1) carries k = (1, 1).
        let g2 = Grid::new(2, &[16, 16], &[PI, PI]).unwrap();
        assert_relative_eq!(g2.laplacian_symbol()[16 + 1], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn gradient_of_fourier_modes() {
        let g = Grid::new(1, &[256], &[PI]).unwrap();
        let u = g.map_points(|x| Complex64::new(0.0, x[0]).exp());
        let du = g.spectral_gradient(&u).unwrap();
        let expect: Vec<_> = u.iter().map(|c| c * Complex64::i()).collect();
        assert!(max_abs_diff(&du[0], &expect) < 1e-12);

        let s = g.map_points(|x| Complex64::new((2.0 * x[0]).sin(), 0.0));
        let ds = g.spectral_gradient(&s).unwrap();
        let expect = g.map_points(|x| Complex64::new(2.0 * (2.0 * x[0]).cos(), 0.0));
        assert!(max_abs_diff(&ds[0], &expect) < 1e-12);

        let c = vec![Complex64::new(3.0, -1.0); 256];
        let dc = g.spectral_gradient(&c).unwrap();
        assert!(dc[0].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn gradient_3d_matches_analytic() {
        let g = Grid::new(3, &[16, 32, 8], &[PI, PI, PI]).unwrap();
        let u = g.map_points(|x| {
            Complex64::new(x[0].sin() * (2.0 * x[1]).cos(), (3.0 * x[2]).sin())
        });
        let du = g.spectral_gradient(&u).unwrap();
        let ex = g.map_points(|x| Complex64::new(x[0].cos() * (2.0 * x[1]).cos(), 0.0));
        let ey = g.map_points(|x| Complex64::new(-2.0 * x[0].sin() * (2.0 * x[1]).sin(), 0.0));
        let ez = g.map_points(|x| Complex64::new(0.0, 3.0 * (3.0 * x[2]).cos()));
        assert!(max_abs_diff(&du[0], &ex) < 1e-12);
        assert!(max_abs_diff(&du[1], &ey) < 1e-12);
        assert!(max_abs_diff(&du[2], &ez) < 1e-12);
    }

    #[test]
    fn boundary_fraction_detects_wide_fields() {
        let g = Grid::new(1, &[128], &[8.0]).unwrap();
        let narrow = g.map_points(|x| (-x[0] * x[0]).exp());
        assert!(g.boundary_fraction(&narrow) < BOUNDARY_DENSITY_TOLERANCE);
        let wide = g.map_points(|x| (-x[0] * x[0] / 50.0).exp());
        assert!(g.boundary_fraction(&wide) > BOUNDARY_DENSITY_TOLERANCE);
    }
}
