//! Deterministic stand-in market data: descending CDS quote curves and
//! tranche/index quotes generated by the model itself.

use crate::engine::{EngineConfig, LargeBasketPricer, Scheme};
use crate::error::{Error, Result};
use crate::params::{from_bps, MarketQuotes, ModelParams, TrancheSpec};
use crate::single_name::invert_x0;

/// `names` quotes decaying geometrically from `high_bps` to `low_bps`, as
/// decimals in descending order.
pub fn descending_cds_quotes(names: usize, high_bps: f64, low_bps: f64) -> Result<Vec<f64>> {
    if names == 0 {
        return Err(Error::invalid("need at least one name"));
    }
    if !(high_bps >= low_bps && low_bps > 0.0) || !high_bps.is_finite() {
        return Err(Error::invalid(format!("need high >= low > 0 bps, got {high_bps} and {low_bps}")));
    }
    if names == 1 {
        return Ok(vec![from_bps(high_bps)]);
    }
    let ratio = (low_bps / high_bps).ln() / (names - 1) as f64;
    Ok((0..names).map(|k| from_bps(high_bps * (ratio * k as f64).exp())).collect())
}

/// A 125-name investment-grade-like curve, 300 down to 20 bps.
pub fn index_like_quotes() -> Vec<f64> {
    descending_cds_quotes(125, 300.0, 20.0).expect("static curve")
}

/// Tranche and index quotes priced by the model at `params` with `x0`
/// inferred analytically from `cds_quotes`, so that a calibration with the
/// same engine configuration has an exact zero-residual solution.
pub fn model_quotes(
    cds_quotes: Vec<f64>,
    params: &ModelParams,
    tranches: &[TrancheSpec],
    engine: EngineConfig,
    scheme: Scheme,
) -> Result<MarketQuotes> {
    let sched = params.schedule();
    let x0 = crate::params::sort_descending(cds_quotes.clone())
        .iter()
        .map(|q| invert_x0(*q, params.beta(), &sched, params.lgd()))
        .collect::<Result<Vec<_>>>()?;
    let pricer = LargeBasketPricer::for_schedule(engine, &sched)?;
    let res = pricer.price(scheme, params, &x0, tranches)?;
    let tranche_quotes = tranches.iter().cloned().zip(res.tranche_bps.iter().map(|b| from_bps(*b))).collect();
    MarketQuotes::new(cds_quotes, tranche_quotes, Some(from_bps(res.index_bps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::SpaceGrid;
    use crate::single_name::attainable_range;

    #[test]
    fn curve_shape() {
        let q = descending_cds_quotes(125, 300.0, 20.0).unwrap();
        assert_eq!(q.len(), 125);
        assert!((q[0] - 0.03).abs() < 1e-15);
        assert!((q[124] - 0.002).abs() < 1e-15);
        assert!(q.windows(2).all(|w| w[0] > w[1]));
        // mean of a geometric sequence
        let r = (20.0f64 / 300.0).powf(1.0 / 124.0);
        let mean = 0.03 * (1.0 - r.powi(125)) / (1.0 - r) / 125.0;
        assert!((q.iter().sum::<f64>() / 125.0 - mean).abs() < 1e-15);
        assert_eq!(descending_cds_quotes(3, 50.0, 50.0).unwrap(), vec![0.005; 3]);
        assert!(descending_cds_quotes(3, 10.0, 50.0).is_err());
    }

    #[test]
    fn curve_is_attainable_across_calibration_range() {
        let q = index_like_quotes();
        for sigma in [0.01, 0.0294, 0.0543, 0.2] {
            let p = ModelParams::new(0.026, sigma, 0.3).unwrap();
            let (lo, hi) = attainable_range(p.beta(), &p.schedule(), p.lgd()).unwrap();
            assert!(q[124] > lo && q[0] < hi, "sigma {sigma}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn model_quotes_are_reproducible() {
        let p = ModelParams::new(0.026, 0.0294, 0.2409).unwrap();
        let cfg = EngineConfig {
            grid: SpaceGrid::new(-10.0, 20.0, 101).unwrap(),
            paths: 64,
            ..Default::default()
        };
        let tr = vec![TrancheSpec::new(0.0, 0.03).unwrap(), TrancheSpec::new(0.03, 0.06).unwrap()];
        let a = model_quotes(index_like_quotes(), &p, &tr, cfg, Scheme::Dm).unwrap();
        let b = model_quotes(index_like_quotes(), &p, &tr, cfg, Scheme::Dm).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tranche_quotes().len(), 2);
        assert!(a.tranche_quotes()[0].1 > a.tranche_quotes()[1].1);
        assert!(a.index_quote().unwrap() > 0.0);
    }
}
