//! Common-factor Brownian paths shared by all large-basket schemes.
//!
//! Each path is sampled on `substeps` equal steps per resettlement period.
//! Schemes that need coarser grids aggregate the increments, so every scheme
//! sees the same Brownian path for a given seed.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{self, Purpose};

/// How `int_0^t M_s ds` over a period is computed from the sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralRule {
    /// Trapezoid on the substep grid.
    #[default]
    Trapezoid,
    /// Exact conditional sampling: trapezoid plus an independent
    /// `N(0, h^3/12)` Brownian-bridge term per substep.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonFactorDriver {
    paths: usize,
    periods: usize,
    substeps: usize,
    period_length: f64,
    // [path][period][substep]
    increments: Vec<f64>,
    // [path][period], integral of M restarted at zero at each period start
    integrals: Vec<f64>,
}

impl CommonFactorDriver {
    pub fn generate(
        seed: u64,
        paths: usize,
        periods: usize,
        substeps: usize,
        period_length: f64,
        rule: IntegralRule,
        exec: Execution,
    ) -> Result<Self> {
        if paths == 0 {
            return Err(Error::invalid("driver needs at least one path"));
        }
        if periods == 0 || substeps == 0 {
            return Err(Error::invalid("driver needs at least one period and substep"));
        }
        if !(period_length > 0.0) {
            return Err(Error::invalid(format!("period length must be positive, got {period_length}")));
        }
        let h = period_length / substeps as f64;
        let sqrt_h = h.sqrt();
        let bridge_sd = (h * h * h / 12.0).sqrt();
        let per_path = periods * substeps;
        let mut increments = vec![0.0; paths * per_path];
        exec.for_each_chunk_mut(&mut increments, per_path, |m, out| {
            let mut rng = rng::stream(seed, Purpose::CommonFactor, 0, m as u64);
            rng::fill_normal(&mut rng, out);
            for x in out.iter_mut() {
                *x *= sqrt_h;
            }
        });
        let mut integrals = vec![0.0; paths * periods];
        let incs = &increments;
        exec.for_each_chunk_mut(&mut integrals, periods, |m, out| {
            let path = &incs[m * per_path..(m + 1) * per_path];
            let mut bridge = vec![0.0; per_path];
            if rule == IntegralRule::Exact {
                let mut rng = rng::stream(seed, Purpose::CommonFactorIntegral, 0, m as u64);
                rng::fill_normal(&mut rng, &mut bridge);
            }
            for (q, slot) in out.iter_mut().enumerate() {
                let mut level = 0.0;
                let mut acc = 0.0;
                for l in 0..substeps {
                    let dm = path[q * substeps + l];
                    acc += h * (level + 0.5 * dm);
                    if rule == IntegralRule::Exact {
                        acc += bridge_sd * bridge[q * substeps + l];
                    }
                    level += dm;
                }
                *slot = acc;
            }
        });
        Ok(CommonFactorDriver {
            paths,
            periods,
            substeps,
            period_length,
            increments,
            integrals,
        })
    }

    /// A driver with all increments set to zero.
    pub fn zero(paths: usize, periods: usize, substeps: usize, period_length: f64) -> Self {
        CommonFactorDriver {
            paths,
            periods,
            substeps,
            period_length,
            increments: vec![0.0; paths * periods * substeps],
            integrals: vec![0.0; paths * periods],
        }
    }

    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn periods(&self) -> usize {
        self.periods
    }
    pub fn substeps(&self) -> usize {
        self.substeps
    }
    pub fn period_length(&self) -> f64 {
        self.period_length
    }

    /// Substep increments of one period.
    pub fn increments(&self, path: usize, period: usize) -> &[f64] {
        let start = (path * self.periods + period) * self.substeps;
        &self.increments[start..start + self.substeps]
    }

    /// `M_{T_{n+1}} - M_{T_n}`.
    pub fn period_increment(&self, path: usize, period: usize) -> f64 {
        self.increments(path, period).iter().sum()
    }

    /// `int_0^alpha (M_{T_n + s} - M_{T_n}) ds`.
    pub fn period_integral(&self, path: usize, period: usize) -> f64 {
        self.integrals[path * self.periods + period]
    }

    /// Overwrites one period of one path, e.g. to build stress scenarios.
    pub fn set_period(&mut self, path: usize, period: usize, increments: &[f64], integral: f64) {
        assert_eq!(increments.len(), self.substeps, "wrong number of substep increments");
        let start = (path * self.periods + period) * self.substeps;
        self.increments[start..start + self.substeps].copy_from_slice(increments);
        self.integrals[path * self.periods + period] = integral;
    }

    /// Increments aggregated onto `steps` equal steps per period.
    pub fn aggregated(&self, path: usize, period: usize, steps: usize, out: &mut [f64]) -> Result<()> {
        if steps == 0 || !self.substeps.is_multiple_of(steps) {
            return Err(Error::invalid(format!(
                "{steps} steps per period do not divide the driver's {} substeps",
                self.substeps
            )));
        }
        let group = self.substeps / steps;
        for (o, chunk) in out.iter_mut().zip(self.increments(path, period).chunks(group)) {
            *o = chunk.iter().sum();
        }
        Ok(())
    }
}
