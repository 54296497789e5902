//! Loss paths, tranche and index spreads.
//!
//! Pricing consumes only a [`LossSurface`], so every scheme shares the same
//! code from this point on. Expectations are plain averages over
//! common-factor paths.

use crate::error::{Error, Result};
use crate::exec::ordered_sum;
use crate::params::{to_bps, Schedule, TrancheSpec};

/// Tolerance on surviving mass above one.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// Which outstanding notional enters the premium leg of period `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumConvention {
    /// Tranches pay on the notional at the start of the period, the index
    /// on the notional at its end.
    #[default]
    Published,
    /// Both pay on the start-of-period notional.
    PeriodStart,
    /// Both pay on the end-of-period notional.
    PeriodEnd,
}

impl PremiumConvention {
    fn tranche_uses_start(self) -> bool {
        matches!(self, PremiumConvention::Published | PremiumConvention::PeriodStart)
    }

    fn index_uses_start(self) -> bool {
        self == PremiumConvention::PeriodStart
    }
}

/// Per-path surviving mass and loss at `T_0 = 0, T_1, ..., T_N`, stored
/// path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    paths: usize,
    dates: usize,
    lgd: f64,
    survivor: Vec<f64>,
    loss: Vec<f64>,
    repairs: usize,
    max_repair: f64,
}

impl LossSurface {
    /// Builds the surface from surviving masses (`dates` values per path,
    /// the first at `t = 0`). Negative masses are clipped to zero and any
    /// increase along a path is flattened by a running minimum; both are
    /// counted in [`repairs`](Self::repairs).
    pub fn from_survivor(survivor: Vec<f64>, dates: usize, lgd: f64) -> Result<Self> {
        if dates < 2 || survivor.is_empty() || !survivor.len().is_multiple_of(dates) {
            return Err(Error::invalid(format!(
                "survivor matrix of {} values is not a whole number of {dates}-date paths",
                survivor.len()
            )));
        }
        if !(lgd > 0.0 && lgd <= 1.0) {
            return Err(Error::invalid(format!("LGD must lie in (0, 1], got {lgd}")));
        }
        let mut survivor = survivor;
        let mut repairs = 0;
        let mut max_repair = 0.0f64;
        for path in survivor.chunks_mut(dates) {
            let mut floor = f64::INFINITY;
            for s in path.iter_mut() {
                if !s.is_finite() {
                    return Err(Error::numeric("non-finite surviving mass"));
                }
                if *s > 1.0 + MASS_TOLERANCE {
                    return Err(Error::numeric(format!("surviving mass {s} exceeds one")));
                }
                let clipped = s.clamp(0.0, 1.0).min(floor);
                if clipped != s.min(1.0) {
                    repairs += 1;
                    max_repair = max_repair.max((clipped - *s).abs());
                }
                *s = clipped;
                floor = clipped;
            }
        }
        let loss = survivor.iter().map(|s| lgd * (1.0 - s)).collect();
        Ok(LossSurface {
            paths: survivor.len() / dates,
            dates,
            lgd,
            survivor,
            loss,
            repairs,
            max_repair,
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Number of dates including `t = 0`.
    pub fn dates(&self) -> usize {
        self.dates
    }

    pub fn lgd(&self) -> f64 {
        self.lgd
    }

    pub fn survivor(&self, path: usize) -> &[f64] {
        &self.survivor[path * self.dates..(path + 1) * self.dates]
    }

    pub fn loss(&self, path: usize) -> &[f64] {
        &self.loss[path * self.dates..(path + 1) * self.dates]
    }

    /// Entries changed by clipping or the running minimum.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    /// Largest absolute change made by a repair.
    pub fn max_repair(&self) -> f64 {
        self.max_repair
    }

    /// Path average of `f(loss)` at every date.
    fn expected(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.dates)
            .map(|j| ordered_sum((0..self.paths).map(|m| f(self.loss[m * self.dates + j]))) / self.paths as f64)
            .collect()
    }

    /// `E[Z_t]` for a tranche at every date.
    pub fn expected_tranche_notional(&self, tranche: &TrancheSpec) -> Vec<f64> {
        self.expected(|l| tranche.outstanding(l))
    }

    /// `E[L_t]` at every date.
    pub fn expected_loss(&self) -> Vec<f64> {
        self.expected(|l| l)
    }

    fn check_schedule(&self, sched: &Schedule) -> Result<()> {
        if sched.len() + 1 != self.dates {
            return Err(Error::invalid(format!(
                "schedule has {} payment dates but the loss surface {}",
                sched.len(),
                self.dates - 1
            )));
        }
        Ok(())
    }
}

/// Fair running spread of a tranche, in bps.
pub fn tranche_spread(surface: &LossSurface, tranche: &TrancheSpec, sched: &Schedule, convention: PremiumConvention) -> Result<f64> {
    surface.check_schedule(sched)?;
    let z = surface.expected_tranche_notional(tranche);
    let start = convention.tranche_uses_start();
    let (protection, premium) = legs(&z, sched, start);
    if premium <= 0.0 {
        return Err(Error::DegenerateQuote(format!(
            "tranche [{}, {}] has no outstanding notional",
            tranche.attach(),
            tranche.detach()
        )));
    }
    Ok(to_bps(protection / (sched.alpha() * premium)))
}

/// Fair running spread of the index, in bps. The index notional is the
/// surviving fraction.
pub fn index_spread(surface: &LossSurface, sched: &Schedule, convention: PremiumConvention) -> Result<f64> {
    surface.check_schedule(sched)?;
    let lgd = surface.lgd;
    let zi: Vec<f64> = surface.expected_loss().iter().map(|l| 1.0 - l / lgd).collect();
    let (protection, premium) = legs(&zi, sched, convention.index_uses_start());
    if premium <= 0.0 {
        return Err(Error::DegenerateQuote("index has no outstanding notional".into()));
    }
    Ok(to_bps(lgd * protection / (sched.alpha() * premium)))
}

/// Discounted notional decrements and premium notionals.
fn legs(z: &[f64], sched: &Schedule, start: bool) -> (f64, f64) {
    let disc = sched.discounts();
    let protection = ordered_sum((1..z.len()).map(|j| disc[j - 1] * (z[j - 1] - z[j])));
    let premium = ordered_sum((1..z.len()).map(|j| disc[j - 1] * if start { z[j - 1] } else { z[j] }));
    (protection, premium)
}

/// Spreads for several tranches plus the index.
pub fn price_surface(
    surface: &LossSurface,
    tranches: &[TrancheSpec],
    sched: &Schedule,
    convention: PremiumConvention,
) -> Result<(Vec<f64>, f64)> {
    let spreads = tranches
        .iter()
        .map(|t| tranche_spread(surface, t, sched, convention))
        .collect::<Result<Vec<_>>>()?;
    Ok((spreads, index_spread(surface, sched, convention)?))
}
