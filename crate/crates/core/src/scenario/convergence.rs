//! Temporal self-convergence of a scenario.
//!
//! The run is repeated with halving steps. The reference state is the
//! Richardson combination `(4u_{h_min} − u_{2h_min})/3` of the two finest
//! runs, which is fourth order accurate for a second order scheme with an
//! even error expansion. Errors of the remaining runs are relative L²
//! distances to it, and observed orders come from consecutive pairs.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::propagator::{propagate_flow, LocalFlow};
use crate::scenario::config::ScenarioConfig;

/// Errors below this are rounding noise and produce no order estimate.
pub const ERROR_FLOOR: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    /// Step sizes, coarsest first.
    pub dts: Vec<f64>,
    /// Relative errors of all but the two finest runs.
    pub errors: Vec<f64>,
    /// `log₂(e_i / e_{i+1})`, `None` where either error is below the floor.
    pub orders: Vec<Option<f64>>,
}

impl ConvergenceReport {
    /// The order estimate from the finest usable pair.
    pub fn finest_order(&self) -> Option<f64> {
        self.orders.iter().rev().find_map(|o| *o)
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>12} {:>14} {:>8}", "dt", "error", "order")?;
        for (i, (dt, e)) in self.dts.iter().zip(&self.errors).enumerate() {
            let order = match i.checked_sub(1).and_then(|j| self.orders[j]) {
                Some(o) => format!("{o:.3}"),
                None => "-".into(),
            };
            writeln!(f, "{dt:>12.4e} {e:>14.6e} {order:>8}")?;
        }
        for dt in &self.dts[self.errors.len()..] {
            writeln!(f, "{dt:>12.4e} {:>14} {:>8}", "(reference)", "")?;
        }
        Ok(())
    }
}

fn check_dts(dts: &[f64]) -> Result<Vec<f64>> {
    // Two runs form the reference and an order needs two more errors.
    if dts.len() < 4 {
        return Err(Error::InvalidParams(format!(
            "a convergence study needs at least 4 step sizes, got {}",
            dts.len()
        )));
    }
    let mut sorted = dts.to_vec();
    if sorted.iter().any(|dt| !(dt.is_finite() && *dt > 0.0)) {
        return Err(Error::InvalidParams(format!("step sizes must be positive, got {dts:?}")));
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    for w in sorted.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "step sizes must halve successively, got {sorted:?}"
            )));
        }
    }
    Ok(sorted)
}

fn relative_distance(u: &WaveFunction, reference: &WaveFunction) -> Result<f64> {
    let scale = reference.mass().sqrt();
    let d = u.distance(reference)?;
    Ok(if scale > 0.0 { d / scale } else { d })
}

/// Runs `config` once per step size, up to `config.stepper.t_end`.
pub fn convergence_study(
    config: &ScenarioConfig,
    dts: &[f64],
    base: Option<&Path>,
) -> Result<ConvergenceReport> {
    let dts = check_dts(dts)?;
    config.validate()?;
    let u0 = config.initial_state(base)?;
    let flow = match config.linear_damping {
        Some(rate) => LocalFlow::LinearDamping { rate },
        None => LocalFlow::NonlinearDamping,
    };
    let finals = dts
        .iter()
        .map(|&dt| {
            propagate_flow(&u0, &config.model, flow, dt, config.stepper.t_end, config.stepper.scheme)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = finals.len();
    let (coarse, fine) = (&finals[n - 2], &finals[n - 1]);
    let values: Vec<Complex64> = fine
        .values()
        .iter()
        .zip(coarse.values())
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect();
    let reference = WaveFunction::new(fine.grid().clone(), values)?;

    let errors = finals[..n - 2]
        .iter()
        .map(|u| relative_distance(u, &reference))
        .collect::<Result<Vec<_>>>()?;
    let orders = errors
        .windows(2)
        .map(|w| (w[0] > ERROR_FLOOR && w[1] > ERROR_FLOOR).then(|| (w[0] / w[1]).log2()))
        .collect();
    Ok(ConvergenceReport { dts, errors, orders })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sizes_must_halve() {
        assert!(check_dts(&[0.1, 0.05]).is_err());
        assert!(check_dts(&[0.1, 0.05, 0.025]).is_err());
        assert!(check_dts(&[0.1, 0.05, 0.02, 0.01]).is_err());
        assert!(check_dts(&[0.1, -0.05, 0.025, 0.0125]).is_err());
        assert_eq!(
            check_dts(&[0.025, 0.1, 0.0125, 0.05]).unwrap(),
            vec![0.1, 0.05, 0.025, 0.0125]
        );
    }
}
