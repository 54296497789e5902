//! Large-basket pricer: runs one of the four density schemes over the
//! resettlement dates and prices tranches and the index from the resulting
//! loss surface.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discretization::{build_operators, mass, smooth_initial_datum, truncate_at_barrier, DensityEnsemble, SpaceGrid};
use crate::driver::{CommonFactorDriver, IntegralRule};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::{ModelParams, Schedule, TrancheSpec};
use crate::pde::{evolve_quarter_pde, PdePropagation, PropagatorCache, ShiftDiagnostics, ThetaQuarter};
use crate::pricing::{price_surface, LossSurface, PremiumConvention};
use crate::spde::{evolve_quarter_spde, MagnusOrder, SpdeScheme};
use crate::spline::SplineShifter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the SPDE.
    Em,
    /// Itô–Magnus on the SPDE.
    Sm,
    /// Theta scheme on the shifted PDE.
    Theta,
    /// Matrix exponential on the shifted PDE.
    Dm,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Em, Scheme::Sm, Scheme::Theta, Scheme::Dm];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Em => "EM",
            Scheme::Sm => "SM",
            Scheme::Theta => "Theta",
            Scheme::Dm => "DM",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "em" => Ok(Scheme::Em),
            "sm" => Ok(Scheme::Sm),
            "theta" => Ok(Scheme::Theta),
            "dm" => Ok(Scheme::Dm),
            other => Err(Error::invalid(format!("unknown scheme '{other}' (expected em, sm, theta or dm)"))),
        }
    }
}

/// Time resolution of the schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    /// Grid points per period for Euler–Maruyama.
    pub em_points: usize,
    /// Points per period used to integrate the driver inside the Magnus
    /// correction term.
    pub sm_points: usize,
    pub magnus_order: u8,
    pub theta_points: usize,
    pub theta: f64,
    /// Implicit Euler half steps replacing the first theta steps.
    pub rannacher_half_steps: usize,
    pub integral_rule: IntegralRule,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            em_points: 15,
            sm_points: 15,
            magnus_order: 2,
            theta_points: 5,
            theta: 0.5,
            rannacher_half_steps: 4,
            integral_rule: IntegralRule::Trapezoid,
        }
    }
}

impl SchemeConfig {
    /// Driver substeps per period: fine enough for both SPDE schemes.
    pub fn driver_substeps(&self) -> Result<usize> {
        if self.em_points < 2 || self.sm_points < 2 {
            return Err(Error::invalid("EM and SM need at least 2 points per period"));
        }
        let (a, b) = (self.em_points - 1, self.sm_points - 1);
        Ok(a / gcd(a, b) * b)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub grid: SpaceGrid,
    pub paths: usize,
    pub seed: u64,
    pub schemes: SchemeConfig,
    pub convention: PremiumConvention,
    pub exec: Execution,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            grid: SpaceGrid::standard(),
            paths: 10_000,
            seed: 2024,
            schemes: SchemeConfig::default(),
            convention: PremiumConvention::Published,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Fraction of the `x0` cloud outside the grid interior.
    pub clamped_initial_mass: f64,
    /// Most negative density value seen before truncation (0 if none).
    pub min_density: f64,
    /// Surviving masses changed by clipping or the running minimum.
    pub monotone_repairs: usize,
    pub max_repair: f64,
    pub max_abs_shift: f64,
    pub far_shifts: usize,
    pub far_mass_lost: f64,
    pub propagator_builds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    pub scheme: Scheme,
    pub tranches: Vec<TrancheSpec>,
    pub tranche_bps: Vec<f64>,
    pub index_bps: f64,
    pub diagnostics: Diagnostics,
    pub seconds: f64,
}

/// Holds everything that stays fixed across pricing calls: the grid, the
/// common-factor paths and the cached propagators.
pub struct LargeBasketPricer {
    cfg: EngineConfig,
    shifter: SplineShifter,
    driver: Arc<CommonFactorDriver>,
    cache: PropagatorCache,
    periods: usize,
    alpha: f64,
}

impl LargeBasketPricer {
    /// `periods` resettlement periods of length `alpha`.
    pub fn new(cfg: EngineConfig, periods: usize, alpha: f64) -> Result<Self> {
        if cfg.paths == 0 {
            return Err(Error::invalid("need at least one path"));
        }
        let substeps = cfg.schemes.driver_substeps()?;
        let driver = CommonFactorDriver::generate(cfg.seed, cfg.paths, periods, substeps, alpha, cfg.schemes.integral_rule, cfg.exec)?;
        Ok(LargeBasketPricer {
            shifter: SplineShifter::new(&cfg.grid)?,
            driver: Arc::new(driver),
            cache: PropagatorCache::new(),
            cfg,
            periods,
            alpha,
        })
    }

    pub fn for_schedule(cfg: EngineConfig, sched: &Schedule) -> Result<Self> {
        Self::new(cfg, sched.len(), sched.alpha())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn driver(&self) -> &CommonFactorDriver {
        &self.driver
    }

    /// Number of propagators built so far.
    pub fn propagator_builds(&self) -> usize {
        self.cache.builds()
    }

    fn check_schedule(&self, sched: &Schedule) -> Result<()> {
        if sched.len() != self.periods || (sched.alpha() - self.alpha).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "pricer was built for {} periods of {}, schedule has {} of {}",
                self.periods,
                self.alpha,
                sched.len(),
                sched.alpha()
            )));
        }
        Ok(())
    }

    /// Runs `scheme` from the initial cloud `x0` and returns the loss surface.
    pub fn loss_surface(&self, scheme: Scheme, params: &ModelParams, x0: &[f64]) -> Result<(LossSurface, Diagnostics)> {
        let sched = params.schedule();
        self.check_schedule(&sched)?;
        let grid = self.cfg.grid;
        let exec = self.cfg.exec;
        let d = grid.d();
        let ops = build_operators(&grid, params);
        let init = smooth_initial_datum(x0, &grid)?;
        let mut u0 = init.density;
        truncate_at_barrier(&mut u0.0, &grid);
        let mut diag = Diagnostics {
            clamped_initial_mass: init.clamped_mass,
            ..Diagnostics::default()
        };
        let paths = self.cfg.paths;
        let dates = self.periods + 1;
        let mut survivor = vec![0.0; paths * dates];
        let m0 = mass(&u0.0, &grid);
        for m in 0..paths {
            survivor[m * dates] = m0;
        }
        let mut ens = DensityEnsemble::replicate(&u0, paths);

        let sc = &self.cfg.schemes;
        let pde = match scheme {
            Scheme::Theta => Some(PdePropagation::Theta(Box::new(ThetaQuarter::new(&ops.c, self.alpha, sc.theta_points, sc.theta, sc.rannacher_half_steps)?))),
            Scheme::Dm => Some(PdePropagation::Exponential(self.cache.get(&ops.c, self.alpha)?)),
            _ => None,
        };
        let spde = match scheme {
            Scheme::Em => Some(SpdeScheme::EulerMaruyama { points: sc.em_points }),
            Scheme::Sm => Some(SpdeScheme::Magnus {
                order: MagnusOrder::from_u8(sc.magnus_order)?,
            }),
            _ => None,
        };
        let sqrt_rho = params.rho().sqrt();
        let mut shift = ShiftDiagnostics::default();

        for n in 0..self.periods {
            if let Some(p) = &pde {
                shift.merge(&evolve_quarter_pde(&mut ens, p, &self.shifter, &self.driver, n, sqrt_rho, exec)?);
            }
            if let Some(s) = spde {
                evolve_quarter_spde(&mut ens, s, &self.driver, n, &ops, exec)?;
            }
            let stats = exec.try_map_chunks_mut(ens.as_mut_slice(), d, |_, v| -> Result<(f64, f64)> {
                truncate_at_barrier(v, &grid);
                let lo = v.iter().fold(0.0f64, |a, x| a.min(*x));
                if !lo.is_finite() {
                    return Err(Error::numeric("non-finite density"));
                }
                Ok((mass(v, &grid), lo))
            })?;
            for (m, (s, lo)) in stats.into_iter().enumerate() {
                // truncation may remove negative ringing below the barrier;
                // defaults never give mass back
                let prev = survivor[m * dates + n];
                if s > prev {
                    diag.monotone_repairs += 1;
                    diag.max_repair = diag.max_repair.max(s - prev);
                }
                survivor[m * dates + n + 1] = s.min(prev);
                diag.min_density = diag.min_density.min(lo);
            }
        }

        let surface = LossSurface::from_survivor(survivor, dates, params.lgd()).map_err(|e| match e {
            Error::Numeric(msg) => Error::numeric(format!("{scheme} at sigma = {}, rho = {}: {msg}", params.sigma(), params.rho())),
            other => other,
        })?;
        diag.monotone_repairs += surface.repairs();
        diag.max_repair = diag.max_repair.max(surface.max_repair());
        diag.max_abs_shift = shift.max_abs_shift;
        diag.far_shifts = shift.far_shifts;
        diag.far_mass_lost = shift.far_mass_lost;
        diag.propagator_builds = self.cache.builds();
        Ok((surface, diag))
    }

    pub fn price(&self, scheme: Scheme, params: &ModelParams, x0: &[f64], tranches: &[TrancheSpec]) -> Result<PriceResult> {
        let start = Instant::now();
        let (surface, diagnostics) = self.loss_surface(scheme, params, x0)?;
        let (tranche_bps, index_bps) = price_surface(&surface, tranches, &params.schedule(), self.cfg.convention)?;
        Ok(PriceResult {
            scheme,
            tranches: tranches.to_vec(),
            tranche_bps,
            index_bps,
            diagnostics,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}
