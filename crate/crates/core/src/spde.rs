//! Schemes for the discretized large-basket SPDE
//! `dv = B v dt + A v dM` between two resettlement dates.
//!
//! * Euler–Maruyama on a uniform grid of `L` points per period.
//! * Itô–Magnus of order 1 or 2 with constant coefficients, applied through
//!   one exponential action per path and period:
//!   `Y1 = B t + A M_t`,
//!   `Y2 = Y1 - A^2 t / 2 + [B, A] (int_0^t M_s ds - t M_t / 2)`.

use crate::discretization::{DensityEnsemble, Operators};
use crate::driver::CommonFactorDriver;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{expm_action, BandedMatrix, TridiagOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnusOrder {
    One,
    Two,
}

impl MagnusOrder {
    pub fn from_u8(m: u8) -> Result<Self> {
        match m {
            1 => Ok(MagnusOrder::One),
            2 => Ok(MagnusOrder::Two),
            _ => Err(Error::invalid(format!("Magnus order must be 1 or 2, got {m}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpdeScheme {
    /// `points` grid points per period (`points - 1` steps).
    EulerMaruyama { points: usize },
    Magnus { order: MagnusOrder },
}

/// `v + B v dt + A v dM`, written to `out`.
pub fn step_euler_maruyama(v: &[f64], a: &TridiagOperator, b: &TridiagOperator, dt: f64, dm: f64, out: &mut [f64]) {
    out.copy_from_slice(v);
    let step = b.scale(dt).add(&a.scale(dm));
    step.apply_add(1.0, v, out);
}

/// Runs `increments.len()` Euler–Maruyama steps of size `dt` in place.
pub fn evolve_path_euler(v: &mut [f64], ops: &Operators, dt: f64, increments: &[f64], scratch: &mut [f64]) {
    for &dm in increments {
        let step = ops.b.scale(dt).add(&ops.a.scale(dm));
        scratch.copy_from_slice(v);
        step.apply_add(1.0, scratch, v);
    }
}

/// Constant generators of the Magnus logarithm, all stored with half-band 2.
#[derive(Debug, Clone)]
pub struct MagnusGenerators {
    a: BandedMatrix,
    b: BandedMatrix,
    a_sq: BandedMatrix,
    comm_ba: BandedMatrix,
}

impl MagnusGenerators {
    pub fn new(ops: &Operators) -> Self {
        let a = ops.a.to_banded();
        let b = ops.b.to_banded();
        let a_sq = a.mul(&a).widen(2);
        let comm_ba = b.commutator(&a).widen(2);
        MagnusGenerators {
            a: a.widen(2),
            b: b.widen(2),
            a_sq,
            comm_ba,
        }
    }

    /// `[B, A]`.
    pub fn commutator(&self) -> &BandedMatrix {
        &self.comm_ba
    }

    /// Magnus logarithm over a period of length `t` with `M_t` and
    /// `int_0^t M_s ds` relative to the period start.
    pub fn log(&self, order: MagnusOrder, t: f64, m_t: f64, int_m: f64) -> BandedMatrix {
        let mut y = self.b.scale(t);
        y.axpy(m_t, &self.a);
        if order == MagnusOrder::Two {
            y.axpy(-0.5 * t, &self.a_sq);
            y.axpy(int_m - 0.5 * t * m_t, &self.comm_ba);
        }
        y
    }
}

/// Second-order (or first-order) Magnus logarithm for the given generators.
pub fn magnus_log(ops: &Operators, order: MagnusOrder, t: f64, m_t: f64, int_m: f64) -> Result<BandedMatrix> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("Magnus time must be positive, got {t}")));
    }
    Ok(MagnusGenerators::new(ops).log(order, t, m_t, int_m))
}

/// One SPDE period for every path of `ensemble`, using `driver` period
/// `period`. The ensemble must already be truncated at the barrier.
pub fn evolve_quarter_spde(
    ensemble: &mut DensityEnsemble,
    scheme: SpdeScheme,
    driver: &CommonFactorDriver,
    period: usize,
    ops: &Operators,
    exec: Execution,
) -> Result<()> {
    let d = ensemble.dim();
    if ensemble.paths() != driver.paths() {
        return Err(Error::invalid("ensemble and driver path counts differ"));
    }
    let alpha = driver.period_length();
    match scheme {
        SpdeScheme::EulerMaruyama { points } => {
            let steps = points.checked_sub(1).filter(|s| *s > 0).ok_or_else(|| Error::invalid("Euler–Maruyama needs at least 2 points"))?;
            let dt = alpha / steps as f64;
            exec.try_for_each_chunk_mut(ensemble.as_mut_slice(), d, |m, v| {
                let mut incs = vec![0.0; steps];
                driver.aggregated(m, period, steps, &mut incs)?;
                let mut scratch = vec![0.0; d];
                evolve_path_euler(v, ops, dt, &incs, &mut scratch);
                Ok(())
            })
        }
        SpdeScheme::Magnus { order } => {
            let gens = MagnusGenerators::new(ops);
            exec.try_for_each_chunk_mut(ensemble.as_mut_slice(), d, |m, v| {
                let y = gens.log(order, alpha, driver.period_increment(m, period), driver.period_integral(m, period));
                expm_action(&y, v).map(|_| ())
            })
        }
    }
}
