//! Fits `(rho, sigma)` to tranche and index quotes.
//!
//! For each trial point the initial distances to default are re-inferred
//! from the CDS quotes, the basket is priced with a pricer whose
//! common-factor paths are frozen for the whole run, and the residuals
//! `market - model` (in bps) are handed to a box-constrained least-squares
//! solver.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{Diagnostics, EngineConfig, LargeBasketPricer, Scheme};
use crate::error::{Error, Result};
use crate::nn::{forward_f, NetworkWeights};
use crate::optimize::{least_squares, Bounds, LsqOptions, Method};
use crate::params::{to_bps, MarketQuotes, ModelParams, TrancheSpec};
use crate::single_name::invert_x0;

/// Largest admissible correlation.
pub const RHO_MAX: f64 = 1.0 - 1e-6;

/// How initial distances to default are obtained from CDS quotes.
#[derive(Debug, Clone)]
pub enum X0Mode {
    Analytic,
    /// Forward pass of a trained `f` network.
    Network(Arc<NetworkWeights>),
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    /// Rate and contract terms; `sigma` and `rho` are the starting point.
    pub start: ModelParams,
    pub sigma_bounds: (f64, f64),
    pub rho_bounds: (f64, f64),
    pub scheme: Scheme,
    pub engine: EngineConfig,
    pub x0_mode: X0Mode,
    pub optimizer: LsqOptions,
}

impl CalibrationConfig {
    /// Start `(sigma, rho) = (0.05, 0.5)` at rate `r`, DM scheme, 10^4 paths.
    pub fn new(r: f64) -> Result<Self> {
        Ok(CalibrationConfig {
            start: ModelParams::new(r, 0.05, 0.5)?,
            sigma_bounds: (0.01, 0.5),
            rho_bounds: (0.0, RHO_MAX),
            scheme: Scheme::Dm,
            engine: EngineConfig::default(),
            x0_mode: X0Mode::Analytic,
            optimizer: LsqOptions::default(),
        })
    }

    fn bounds(&self) -> Result<Bounds> {
        let b = Bounds::new(vec![self.sigma_bounds.0, self.rho_bounds.0], vec![self.sigma_bounds.1, self.rho_bounds.1])?;
        if !(self.sigma_bounds.0 > 0.0) || !(self.rho_bounds.0 >= 0.0) || self.rho_bounds.1 > RHO_MAX {
            return Err(Error::invalid("bounds must satisfy sigma > 0 and 0 <= rho <= 1 - 1e-6"));
        }
        if !b.contains(&[self.start.sigma(), self.start.rho()]) {
            return Err(Error::invalid(format!(
                "start (sigma, rho) = ({}, {}) lies outside the bounds",
                self.start.sigma(),
                self.start.rho()
            )));
        }
        Ok(b)
    }
}

/// Initial distances to default for every name, in the order of the
/// (descending) CDS quotes.
pub fn infer_x0(quotes: &MarketQuotes, params: &ModelParams, mode: &X0Mode) -> Result<Vec<f64>> {
    match mode {
        X0Mode::Analytic => {
            let sched = params.schedule();
            quotes
                .cds_quotes()
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    invert_x0(*q, params.beta(), &sched, params.lgd()).map_err(|e| match e {
                        Error::NoSolution { target, lo, hi } => Error::invalid(format!(
                            "CDS quote #{k} ({:.4} bps) is unattainable for sigma = {}: range [{:.4}, {:.4}] bps",
                            to_bps(target),
                            params.sigma(),
                            to_bps(lo),
                            to_bps(hi)
                        )),
                        other => other,
                    })
                })
                .collect()
        }
        X0Mode::Network(w) => {
            let out = forward_f(w, params.rho(), params.beta())?;
            if out.x0.len() != quotes.names() {
                return Err(Error::invalid(format!(
                    "network infers {} names but {} CDS quotes are given",
                    out.x0.len(),
                    quotes.names()
                )));
            }
            Ok(out.x0)
        }
    }
}

/// Residual function with frozen common-factor paths.
pub struct Objective {
    pricer: LargeBasketPricer,
    quotes: MarketQuotes,
    tranches: Vec<TrancheSpec>,
    market_bps: Vec<f64>,
    base: ModelParams,
    scheme: Scheme,
    x0_mode: X0Mode,
}

/// Model prices at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: ModelParams,
    pub x0: Vec<f64>,
    /// Tranche spreads in quote order, then the index if quoted.
    pub model_bps: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Objective {
    pub fn new(quotes: &MarketQuotes, cfg: &CalibrationConfig) -> Result<Self> {
        let tranches: Vec<TrancheSpec> = quotes.tranche_quotes().iter().map(|(t, _)| t.clone()).collect();
        let mut market_bps: Vec<f64> = quotes.tranche_quotes().iter().map(|(_, q)| to_bps(*q)).collect();
        if let Some(i) = quotes.index_quote() {
            market_bps.push(to_bps(i));
        }
        if market_bps.is_empty() {
            return Err(Error::invalid("calibration needs at least one tranche or index quote"));
        }
        Ok(Objective {
            pricer: LargeBasketPricer::for_schedule(cfg.engine, &cfg.start.schedule())?,
            quotes: quotes.clone(),
            tranches,
            market_bps,
            base: cfg.start,
            scheme: cfg.scheme,
            x0_mode: cfg.x0_mode.clone(),
        })
    }

    pub fn market_bps(&self) -> &[f64] {
        &self.market_bps
    }

    /// Instrument labels in residual order.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.tranches.iter().map(|t| t.label().to_string()).collect();
        if self.quotes.index_quote().is_some() {
            l.push("index".into());
        }
        l
    }

    pub fn fit(&self, sigma: f64, rho: f64) -> Result<Fit> {
        let params = self.base.with_sigma(sigma)?.with_rho(rho)?;
        let x0 = infer_x0(&self.quotes, &params, &self.x0_mode)?;
        let res = self
            .pricer
            .price(self.scheme, &params, &x0, &self.tranches)
            .map_err(|e| Error::numeric(format!("pricing failed at sigma = {sigma}, rho = {rho}: {e}")))?;
        let mut model_bps = res.tranche_bps;
        if self.quotes.index_quote().is_some() {
            model_bps.push(res.index_bps);
        }
        Ok(Fit {
            params,
            x0,
            model_bps,
            diagnostics: res.diagnostics,
        })
    }

    /// `market - model` in bps: tranches in quote order, index last.
    pub fn residuals(&self, sigma: f64, rho: f64) -> Result<Vec<f64>> {
        let fit = self.fit(sigma, rho)?;
        Ok(self.market_bps.iter().zip(&fit.model_bps).map(|(m, f)| m - f).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub labels: Vec<String>,
    pub market_bps: Vec<f64>,
    pub fitted_bps: Vec<f64>,
    /// `100 |market - fitted| / market`.
    pub errors_pct: Vec<f64>,
    /// Sum of squared residuals in bps^2.
    pub objective: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub optimizer: Method,
    pub message: String,
    pub x0: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub seconds: f64,
}

pub fn percentage_error(market: f64, fitted: f64) -> f64 {
    if market == fitted {
        0.0
    } else {
        100.0 * (market - fitted).abs() / market.abs()
    }
}

pub fn calibrate(quotes: &MarketQuotes, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    let start = Instant::now();
    let bounds = cfg.bounds()?;
    let objective = Objective::new(quotes, cfg)?;
    let report = least_squares(
        |x: &[f64]| objective.residuals(x[0], x[1]),
        &[cfg.start.sigma(), cfg.start.rho()],
        &bounds,
        &cfg.optimizer,
    )?;
    let (sigma, rho) = (report.x[0], report.x[1]);
    let fit = objective.fit(sigma, rho)?;
    let market_bps = objective.market_bps().to_vec();
    let errors_pct = market_bps.iter().zip(&fit.model_bps).map(|(m, f)| percentage_error(*m, *f)).collect();
    Ok(CalibrationResult {
        sigma,
        rho,
        beta: fit.params.beta(),
        labels: objective.labels(),
        market_bps,
        fitted_bps: fit.model_bps,
        errors_pct,
        objective: report.cost,
        evaluations: report.evaluations + 1,
        iterations: report.iterations,
        converged: report.converged,
        optimizer: report.method,
        message: report.message,
        x0: fit.x0,
        diagnostics: fit.diagnostics,
        seconds: start.elapsed().as_secs_f64(),
    })
}
