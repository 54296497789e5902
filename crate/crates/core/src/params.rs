//! Shared domain types: model parameters, tranches, market quotes and the
//! premium schedule.
//!
//! Quotes are held as decimals throughout (0.01 = 100 bps); conversion to
//! basis points happens only at the I/O boundary via [`to_bps`] / [`from_bps`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BPS: f64 = 1.0e4;

pub fn to_bps(decimal: f64) -> f64 {
    decimal * BPS
}

pub fn from_bps(bps: f64) -> f64 {
    bps / BPS
}

/// Drift of the distance to default, `(r - sigma^2/2) / sigma`.
pub fn derive_beta(r: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !r.is_finite() {
        return Err(Error::invalid(format!("rate must be finite, got {r}")));
    }
    Ok((r - 0.5 * sigma * sigma) / sigma)
}

/// Market and model parameter bundle. The drift `beta` is derived from
/// `(r, sigma)` on every construction and cannot be set on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    r: f64,
    sigma: f64,
    rho: f64,
    lgd: f64,
    alpha: f64,
    maturity: f64,
    beta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    r: f64,
    sigma: f64,
    rho: f64,
    #[serde(default = "default_lgd")]
    lgd: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_maturity")]
    maturity: f64,
}

fn default_lgd() -> f64 {
    0.6
}
fn default_alpha() -> f64 {
    0.25
}
fn default_maturity() -> f64 {
    5.0
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(p: RawParams) -> Result<Self> {
        ModelParams::with_terms(p.r, p.sigma, p.rho, p.lgd, p.alpha, p.maturity)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            r: p.r,
            sigma: p.sigma,
            rho: p.rho,
            lgd: p.lgd,
            alpha: p.alpha,
            maturity: p.maturity,
        }
    }
}

impl ModelParams {
    /// Parameters with the default contract terms: LGD 0.6, quarterly
    /// resettlement, five-year maturity.
    pub fn new(r: f64, sigma: f64, rho: f64) -> Result<Self> {
        Self::with_terms(r, sigma, rho, default_lgd(), default_alpha(), default_maturity())
    }

    pub fn with_terms(r: f64, sigma: f64, rho: f64, lgd: f64, alpha: f64, maturity: f64) -> Result<Self> {
        let beta = derive_beta(r, sigma)?;
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
        }
        if !(lgd > 0.0 && lgd <= 1.0) {
            return Err(Error::invalid(format!("lgd must lie in (0, 1], got {lgd}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        periods(alpha, maturity)?;
        Ok(ModelParams {
            r,
            sigma,
            rho,
            lgd,
            alpha,
            maturity,
            beta,
        })
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::with_terms(self.r, sigma, self.rho, self.lgd, self.alpha, self.maturity)
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::with_terms(self.r, self.sigma, rho, self.lgd, self.alpha, self.maturity)
    }

    pub fn with_rate(&self, r: f64) -> Result<Self> {
        Self::with_terms(r, self.sigma, self.rho, self.lgd, self.alpha, self.maturity)
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn lgd(&self) -> f64 {
        self.lgd
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn schedule(&self) -> Schedule {
        // validated at construction
        Schedule::new(self.alpha, self.maturity, self.r).expect("validated schedule")
    }
}

fn periods(alpha: f64, maturity: f64) -> Result<usize> {
    if !(maturity > 0.0) || !maturity.is_finite() {
        return Err(Error::Schedule(format!("maturity must be positive, got {maturity}")));
    }
    let ratio = maturity / alpha;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::Schedule(format!(
            "maturity {maturity} is not an integer multiple of alpha {alpha} (ratio {ratio})"
        )));
    }
    Ok(n as usize)
}

/// Premium dates `T_j = alpha * j`, `j = 1..=n`, with continuously compounded
/// discount factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    alpha: f64,
    dates: Vec<f64>,
    discounts: Vec<f64>,
}

impl Schedule {
    pub fn new(alpha: f64, maturity: f64, r: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Schedule(format!("alpha must be positive, got {alpha}")));
        }
        let n = periods(alpha, maturity)?;
        let dates: Vec<f64> = (1..=n).map(|j| alpha * j as f64).collect();
        let discounts = dates.iter().map(|t| (-r * t).exp()).collect();
        Ok(Schedule {
            alpha,
            dates,
            discounts,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of premium periods `n`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// `T_1..T_n` (excludes `T_0 = 0`).
    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// `exp(-r T_j)` for `j = 1..n`.
    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn maturity(&self) -> f64 {
        *self.dates.last().expect("schedule has at least one date")
    }
}

/// Tranche `[attach, detach]` as fractions of the pool notional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheSpec {
    attach: f64,
    detach: f64,
    label: String,
}

impl TrancheSpec {
    pub fn new(attach: f64, detach: f64) -> Result<Self> {
        let label = format!("[{attach},{detach}]");
        Self::with_label(attach, detach, label)
    }

    pub fn with_label(attach: f64, detach: f64, label: impl Into<String>) -> Result<Self> {
        if !(0.0..1.0).contains(&attach) || !(detach > 0.0 && detach <= 1.0) || attach >= detach {
            return Err(Error::invalid(format!(
                "tranche needs 0 <= attach < detach <= 1, got [{attach}, {detach}]"
            )));
        }
        Ok(TrancheSpec {
            attach,
            detach,
            label: label.into(),
        })
    }

    pub fn attach(&self) -> f64 {
        self.attach
    }
    pub fn detach(&self) -> f64 {
        self.detach
    }
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Outstanding notional `(D - L)^+ - (A - L)^+`.
    #[inline]
    pub fn outstanding(&self, loss: f64) -> f64 {
        (self.detach - loss).max(0.0) - (self.attach - loss).max(0.0)
    }

    /// Parses `"0:0.03,0.03:0.06"` style lists.
    pub fn parse_list(s: &str) -> Result<Vec<TrancheSpec>> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                let (a, d) = t
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("tranche '{t}' is not attach:detach")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("tranche bound '{x}': {e}")))
                };
                TrancheSpec::new(parse(a)?, parse(d)?)
            })
            .collect()
    }
}

/// The six tranches quoted on the comparison table.
pub fn standard_tranches() -> Vec<TrancheSpec> {
    [(0.0, 0.03), (0.03, 0.06), (0.06, 0.09), (0.09, 0.12), (0.12, 0.22), (0.22, 1.0)]
        .iter()
        .map(|&(a, d)| TrancheSpec::new(a, d).expect("static tranche"))
        .collect()
}

/// Observed CDS, tranche and index quotes, all as decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketQuotes {
    cds_quotes: Vec<f64>,
    tranche_quotes: Vec<(TrancheSpec, f64)>,
    index_quote: Option<f64>,
    quote_date: Option<String>,
}

impl MarketQuotes {
    /// CDS quotes are sorted into descending order (stable for ties).
    pub fn new(
        cds_quotes: Vec<f64>,
        tranche_quotes: Vec<(TrancheSpec, f64)>,
        index_quote: Option<f64>,
    ) -> Result<Self> {
        if cds_quotes.is_empty() {
            return Err(Error::invalid("at least one CDS quote is required"));
        }
        if let Some(q) = cds_quotes.iter().find(|q| !(**q >= 0.0) || !q.is_finite()) {
            return Err(Error::invalid(format!("CDS quote {q} must be finite and >= 0")));
        }
        if let Some((t, q)) = tranche_quotes.iter().find(|(_, q)| !(*q >= 0.0) || !q.is_finite()) {
            return Err(Error::invalid(format!("tranche {} quote {q} must be >= 0", t.label())));
        }
        if let Some(q) = index_quote {
            if !(q >= 0.0) || !q.is_finite() {
                return Err(Error::invalid(format!("index quote {q} must be >= 0")));
            }
        }
        Ok(MarketQuotes {
            cds_quotes: sort_descending(cds_quotes),
            tranche_quotes,
            index_quote,
            quote_date: None,
        })
    }

    pub fn with_date(mut self, date: impl Into<String>) -> Self {
        self.quote_date = Some(date.into());
        self
    }

    pub fn cds_quotes(&self) -> &[f64] {
        &self.cds_quotes
    }
    pub fn tranche_quotes(&self) -> &[(TrancheSpec, f64)] {
        &self.tranche_quotes
    }
    pub fn index_quote(&self) -> Option<f64> {
        self.index_quote
    }
    pub fn quote_date(&self) -> Option<&str> {
        self.quote_date.as_deref()
    }
    pub fn names(&self) -> usize {
        self.cds_quotes.len()
    }
}

/// Stable descending sort.
pub fn sort_descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite quotes"));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        assert_relative_eq!(derive_beta(0.015, 0.0543).unwrap(), 0.24910, epsilon = 1e-4);
        assert_relative_eq!(derive_beta(0.026, 0.0294).unwrap(), 0.86966, epsilon = 1e-4);
        let s = 0.3;
        assert_eq!(derive_beta(0.5 * s * s, s).unwrap(), 0.0);
        assert!(derive_beta(0.01, 0.0).is_err());
        assert!(derive_beta(0.01, -0.1).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = Schedule::new(0.25, 5.0, 0.015).unwrap();
        assert_eq!(s.len(), 20);
        assert_relative_eq!(*s.discounts().last().unwrap(), (-0.075f64).exp(), epsilon = 1e-15);
        assert_eq!(s.maturity(), 5.0);
        assert!(s.dates().windows(2).all(|w| w[1] > w[0]));

        let one = Schedule::new(0.25, 0.25, 0.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.discounts()[0], 1.0);

        assert!(matches!(Schedule::new(0.25, 5.1, 0.01), Err(Error::Schedule(_))));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.01, 0.1, 1.0).is_err());
        assert!(ModelParams::new(0.01, 0.1, -0.1).is_err());
        assert!(ModelParams::with_terms(0.01, 0.1, 0.2, 0.0, 0.25, 5.0).is_err());
        assert!(ModelParams::with_terms(0.01, 0.1, 0.2, 0.6, 0.25, 5.1).is_err());
        let p = ModelParams::new(0.015, 0.0543, 0.158).unwrap();
        assert_eq!(p.lgd(), 0.6);
        assert_eq!(p.schedule().len(), 20);
        let q = p.with_sigma(0.1).unwrap();
        assert_eq!(q.beta(), derive_beta(0.015, 0.1).unwrap());
    }

    #[test]
    fn params_serde_recomputes_beta() {
        let json = r#"{"r":0.015,"sigma":0.0543,"rho":0.158}"#;
        let p: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(p.beta(), derive_beta(0.015, 0.0543).unwrap());
        let bad = r#"{"r":0.015,"sigma":0.0543,"rho":0.158,"beta":3.0}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }

    #[test]
    fn tranche_outstanding_and_parse() {
        let t = TrancheSpec::new(0.03, 0.06).unwrap();
        assert_eq!(t.outstanding(0.0), 0.03);
        assert!((t.outstanding(0.04) - 0.02).abs() < 1e-15);
        assert_eq!(t.outstanding(0.5), 0.0);
        assert!(TrancheSpec::new(0.1, 0.1).is_err());
        let list = TrancheSpec::parse_list("0:0.03,0.03:0.06,0.06:0.09,0.09:0.12,0.12:0.22,0.22:1").unwrap();
        assert_eq!(list, standard_tranches());
    }

    #[test]
    fn quotes_sorted_descending() {
        let q = MarketQuotes::new(vec![0.01, 0.03, 0.02], vec![], Some(0.01)).unwrap();
        assert_eq!(q.cds_quotes(), &[0.03, 0.02, 0.01]);
        assert!(MarketQuotes::new(vec![], vec![], None).is_err());
        assert!(MarketQuotes::new(vec![-0.01], vec![], None).is_err());
    }

    proptest! {
        #[test]
        fn beta_is_deterministic(r in -0.05f64..0.1, sigma in 0.01f64..0.5) {
            let a = derive_beta(r, sigma).unwrap();
            let b = ModelParams::new(r, sigma, 0.3).unwrap().beta();
            prop_assert_eq!(a, b);
            prop_assert_eq!(a, (r - 0.5 * sigma * sigma) / sigma);
        }

        #[test]
        fn sort_idempotent(v in proptest::collection::vec(0.0f64..1.0, 1..50)) {
            let once = sort_descending(v);
            let twice = sort_descending(once.clone());
            prop_assert!(once.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(once, twice);
        }
    }
}
