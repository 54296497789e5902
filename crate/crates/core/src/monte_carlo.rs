//! Direct Monte Carlo: the finite basket with quarterly default monitoring,
//! single-name CDS quotes under continuous monitoring, and the CDS training
//! dataset.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{ordered_sum, Execution};
use crate::params::{derive_beta, ModelParams, Schedule, TrancheSpec};
use crate::pricing::{price_surface, LossSurface, PremiumConvention};
use crate::rng::{self, Purpose};
use crate::single_name::{default_prob, survival_prob, SingleNameState};

/// Paths per reduction chunk. Fixed so sums do not depend on threading.
const PATH_CHUNK: usize = 1024;

/// Crossing probabilities below `exp(-BRIDGE_CUTOFF)` are dropped.
const BRIDGE_CUTOFF: f64 = 40.0;

/// Default dates of a simulated basket, stored path-major as indices into
/// the monitoring dates (`1..=N`), or [`DefaultTimes::NEVER`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefaultTimes {
    names: usize,
    paths: usize,
    dates: usize,
    index: Vec<u16>,
}

impl DefaultTimes {
    pub const NEVER: u16 = u16::MAX;

    /// `index[m * names + k]` is the default date of name `k` on path `m`.
    pub fn from_indices(names: usize, dates: usize, index: Vec<u16>) -> Result<Self> {
        if names == 0 || index.is_empty() || !index.len().is_multiple_of(names) {
            return Err(Error::invalid("default index matrix has the wrong shape"));
        }
        if let Some(i) = index.iter().find(|&&i| i != Self::NEVER && (i == 0 || i as usize > dates)) {
            return Err(Error::invalid(format!("default date index {i} outside 1..={dates}")));
        }
        Ok(DefaultTimes {
            names,
            paths: index.len() / names,
            dates,
            index,
        })
    }

    pub fn names(&self) -> usize {
        self.names
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Number of monitoring dates.
    pub fn dates(&self) -> usize {
        self.dates
    }

    pub fn path(&self, m: usize) -> &[u16] {
        &self.index[m * self.names..(m + 1) * self.names]
    }

    /// Default time of name `k` on path `m` given the monitoring schedule.
    pub fn tau(&self, k: usize, m: usize, sched: &Schedule) -> f64 {
        match self.path(m)[k] {
            Self::NEVER => f64::INFINITY,
            i => sched.dates()[i as usize - 1],
        }
    }

    /// Defaulted fraction per path and date `0..=N`, path-major.
    pub fn default_fraction(&self) -> Vec<f64> {
        let n = self.dates + 1;
        let mut out = vec![0.0; self.paths * n];
        for m in 0..self.paths {
            let mut counts = vec![0u32; n];
            for &i in self.path(m) {
                if i != Self::NEVER {
                    counts[i as usize] += 1;
                }
            }
            let mut acc = 0u32;
            for j in 0..n {
                acc += counts[j];
                out[m * n + j] = acc as f64 / self.names as f64;
            }
        }
        out
    }
}

/// Simulates `x0.len()` names with exact Gaussian increments between the
/// quarterly monitoring dates; a name defaults at the first date with
/// `X <= 0` and stays defaulted.
pub fn simulate_basket(params: &ModelParams, x0: &[f64], paths: usize, seed: u64, exec: Execution) -> Result<DefaultTimes> {
    if paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    if x0.is_empty() {
        return Err(Error::invalid("empty basket"));
    }
    if let Some(x) = x0.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("distance to default must be positive, got {x}")));
    }
    let sched = params.schedule();
    let n = sched.len();
    if n >= DefaultTimes::NEVER as usize {
        return Err(Error::invalid("too many monitoring dates"));
    }
    let k = x0.len();
    let alpha = sched.alpha();
    let drift = params.beta() * alpha;
    let sd_w = ((1.0 - params.rho()) * alpha).sqrt();
    let sd_m = (params.rho() * alpha).sqrt();
    let mut index = vec![DefaultTimes::NEVER; paths * k];
    exec.for_each_chunk_mut(&mut index, k, |m, out| {
        let mut common = rng::stream(seed, Purpose::CommonFactor, 1, m as u64);
        let mut dm = vec![0.0; n];
        rng::fill_normal(&mut common, &mut dm);
        for (name, slot) in out.iter_mut().enumerate() {
            let mut idio = rng::stream(seed, Purpose::Idiosyncratic, name as u64, m as u64);
            let mut x = x0[name];
            for (j, z_m) in dm.iter().enumerate() {
                let z_w: f64 = StandardNormal.sample(&mut idio);
                x += drift + sd_w * z_w + sd_m * z_m;
                if x <= 0.0 {
                    *slot = (j + 1) as u16;
                    break;
                }
            }
        }
    });
    DefaultTimes::from_indices(k, n, index)
}

/// Tranche spreads and index spread (bps) from simulated defaults.
pub fn price_cdo_direct(
    defaults: &DefaultTimes,
    params: &ModelParams,
    tranches: &[TrancheSpec],
    convention: PremiumConvention,
) -> Result<(Vec<f64>, f64)> {
    let sched = params.schedule();
    if defaults.dates() != sched.len() {
        return Err(Error::invalid("defaults were simulated on a different schedule"));
    }
    let survivor = defaults.default_fraction().into_iter().map(|f| 1.0 - f).collect();
    let surface = LossSurface::from_survivor(survivor, sched.len() + 1, params.lgd())?;
    price_surface(&surface, tranches, &sched, convention)
}

/// Settings of the continuously monitored single-name simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCdsConfig {
    pub paths: usize,
    pub steps_per_period: usize,
    pub seed: u64,
}

impl Default for McCdsConfig {
    fn default() -> Self {
        McCdsConfig {
            paths: 100_000,
            steps_per_period: 50,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McQuote {
    /// Par spread as a decimal.
    pub quote: f64,
    pub std_error: f64,
    /// Paths whose survival probability at maturity fell below one half.
    pub defaults: usize,
}

/// Below this many defaulting paths the empirical standard error is not
/// trusted.
pub const MIN_DEFAULT_PATHS: usize = 10;

impl McQuote {
    /// Standard error to judge this estimate against the analytic quote:
    /// the empirical one when enough paths default, otherwise
    /// [`null_std_error`].
    pub fn oracle_std_error(&self, state: SingleNameState, sched: &Schedule, lgd: f64, paths: usize) -> Result<f64> {
        if self.defaults >= MIN_DEFAULT_PATHS {
            Ok(self.std_error)
        } else {
            null_std_error(state, sched, lgd, paths)
        }
    }
}

/// Per-path sums entering the ratio estimator.
#[derive(Debug, Clone, Copy, Default)]
struct LegSums {
    n: f64,
    d: f64,
    nn: f64,
    dd: f64,
    nd: f64,
    defaults: usize,
}

impl LegSums {
    fn add(&mut self, n: f64, d: f64, defaulted: bool) {
        self.defaults += defaulted as usize;
        self.n += n;
        self.d += d;
        self.nn += n * n;
        self.dd += d * d;
        self.nd += n * d;
    }

    fn merge(parts: &[LegSums]) -> LegSums {
        LegSums {
            n: ordered_sum(parts.iter().map(|p| p.n)),
            d: ordered_sum(parts.iter().map(|p| p.d)),
            nn: ordered_sum(parts.iter().map(|p| p.nn)),
            dd: ordered_sum(parts.iter().map(|p| p.dd)),
            nd: ordered_sum(parts.iter().map(|p| p.nd)),
            defaults: parts.iter().map(|p| p.defaults).sum(),
        }
    }
}

/// One path of one name: `X = x0 + beta t + sqrt(1 - rho) W + sqrt(rho) M`
/// on a fine grid, with the survival probability conditional on the grid
/// values (Brownian-bridge non-crossing factors). Returns the discounted
/// default and survival legs of the path and the final survival.
#[allow(clippy::too_many_arguments)]
fn cds_path<R1: Rng, R2: Rng>(
    rho: f64,
    beta: f64,
    x0: f64,
    sched: &Schedule,
    steps: usize,
    common: &mut R1,
    idio: &mut R2,
) -> (f64, f64, f64) {
    let h = sched.alpha() / steps as f64;
    let sqrt_h = h.sqrt();
    let (cw, cm) = ((1.0 - rho).sqrt() * sqrt_h, rho.sqrt() * sqrt_h);
    let drift = beta * h;
    let mut x = x0;
    let mut surv = 1.0;
    let mut prev = 1.0;
    let (mut prot, mut prem) = (0.0, 0.0);
    for &df in sched.discounts() {
        if surv > 0.0 {
            for _ in 0..steps {
                let zm: f64 = StandardNormal.sample(common);
                let zw: f64 = StandardNormal.sample(idio);
                let next = x + drift + cw * zw + cm * zm;
                if next <= 0.0 {
                    surv = 0.0;
                    break;
                }
                let arg = 2.0 * x * next / h;
                if arg < BRIDGE_CUTOFF {
                    surv *= -(-arg).exp_m1();
                }
                x = next;
            }
        }
        prot += df * (prev - surv);
        prem += df * surv;
        prev = surv;
    }
    (prot, prem, surv)
}

fn cds_chunk(rho: f64, beta: f64, x0: f64, sched: &Schedule, cfg: &McCdsConfig, sample: u64, chunk: usize) -> LegSums {
    let mut sums = LegSums::default();
    let lo = chunk * PATH_CHUNK;
    let hi = (lo + PATH_CHUNK).min(cfg.paths);
    for m in lo..hi {
        let mut common = rng::stream(cfg.seed, Purpose::DatasetCommon, 0, m as u64);
        let mut idio = rng::stream(cfg.seed, Purpose::DatasetIdiosyncratic, sample, m as u64);
        let (n, d, s) = cds_path(rho, beta, x0, sched, cfg.steps_per_period, &mut common, &mut idio);
        sums.add(n, d, s < 0.5);
    }
    sums
}

fn ratio_quote(s: &LegSums, paths: usize, alpha: f64, lgd: f64) -> Result<McQuote> {
    let m = paths as f64;
    let (n, d) = (s.n / m, s.d / m);
    if d <= 0.0 {
        return Err(Error::DegenerateQuote("every simulated path defaults before the first date".into()));
    }
    let q = n / d;
    // delta method for the ratio of means
    let var_n = (s.nn / m - n * n).max(0.0);
    let var_d = (s.dd / m - d * d).max(0.0);
    let cov = s.nd / m - n * d;
    let var_q = (var_n - 2.0 * q * cov + q * q * var_d).max(0.0) / (d * d * (m - 1.0).max(1.0));
    let scale = lgd / alpha;
    Ok(McQuote {
        quote: scale * q,
        std_error: scale * var_q.sqrt(),
        defaults: s.defaults,
    })
}

/// Standard error the ratio estimator would have if defaults were plain
/// Bernoulli events with the analytic default probability at maturity.
/// Used as the yardstick when a run sees no default at all and its empirical
/// standard error is zero.
pub fn null_std_error(state: SingleNameState, sched: &Schedule, lgd: f64, paths: usize) -> Result<f64> {
    let t = sched.maturity();
    let p = default_prob(state, t)?;
    let annuity = ordered_sum(
        sched
            .dates()
            .iter()
            .zip(sched.discounts())
            .map(|(&tj, &df)| survival_prob(state, tj).map(|s| df * s).unwrap_or(0.0)),
    );
    if annuity <= 0.0 || paths == 0 {
        return Err(Error::DegenerateQuote("no premium leg".into()));
    }
    let df_last = *sched.discounts().last().expect("non-empty schedule");
    Ok(lgd / (sched.alpha() * annuity) * df_last * (p * (1.0 - p) / paths as f64).sqrt())
}

fn check_cds_inputs(rho: f64, x0: f64, cfg: &McCdsConfig) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    if !(x0 > 0.0) {
        return Err(Error::invalid(format!("x0 must be positive, got {x0}")));
    }
    if cfg.paths < 2 || cfg.steps_per_period == 0 {
        return Err(Error::invalid("need at least 2 paths and 1 step per period"));
    }
    Ok(())
}

/// Monte Carlo par spread of one name. `sample` selects the idiosyncratic
/// streams; the common-factor paths are shared by every sample.
#[allow(clippy::too_many_arguments)]
pub fn mc_cds_quote(
    rho: f64,
    beta: f64,
    x0: f64,
    sched: &Schedule,
    lgd: f64,
    cfg: &McCdsConfig,
    sample: u64,
    exec: Execution,
) -> Result<McQuote> {
    check_cds_inputs(rho, x0, cfg)?;
    let chunks = cfg.paths.div_ceil(PATH_CHUNK);
    let parts = exec.map_range(chunks, |c| cds_chunk(rho, beta, x0, sched, cfg, sample, c));
    ratio_quote(&LegSums::merge(&parts), cfg.paths, sched.alpha(), lgd)
}

/// Sampling box of the dataset. `beta` is drawn uniformly over the range
/// implied by `sigma` at the given rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub samples: usize,
    pub rho: (f64, f64),
    pub sigma: (f64, f64),
    pub x0: (f64, f64),
    pub r: f64,
    pub lgd: f64,
    pub alpha: f64,
    pub maturity: f64,
    pub mc: McCdsConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            samples: 1 << 17,
            rho: (0.0, 1.0 - 1e-6),
            sigma: (0.01, 0.5),
            x0: (1e-3, 6.0),
            r: 0.026,
            lgd: 0.6,
            alpha: 0.25,
            maturity: 5.0,
            mc: McCdsConfig {
                paths: 1000,
                ..McCdsConfig::default()
            },
        }
    }
}

impl DatasetSpec {
    /// `beta` range spanned by the `sigma` box (beta is monotone in sigma).
    pub fn beta_range(&self) -> Result<(f64, f64)> {
        let a = derive_beta(self.r, self.sigma.0)?;
        let b = derive_beta(self.r, self.sigma.1)?;
        Ok((a.min(b), a.max(b)))
    }

    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.samples == 0 {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        if !ok(self.rho) || self.rho.0 < 0.0 || self.rho.1 >= 1.0 {
            return Err(Error::invalid("rho range must lie in [0, 1)"));
        }
        if !ok(self.sigma) || self.sigma.0 <= 0.0 {
            return Err(Error::invalid("sigma range must be positive"));
        }
        if !ok(self.x0) || self.x0.0 <= 0.0 {
            return Err(Error::invalid("x0 range must be positive"));
        }
        Schedule::new(self.alpha, self.maturity, self.r)?;
        Ok(())
    }
}

pub const DATASET_COLUMNS: [&str; 5] = ["rho", "beta", "x0", "quote", "std_error"];

/// JSON sidecar describing a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub rows: usize,
    pub columns: Vec<String>,
    pub dtype: String,
    pub byte_order: String,
    pub quote_unit: String,
    pub ranges: DatasetRanges,
    pub r: f64,
    pub lgd: f64,
    pub alpha: f64,
    pub maturity: f64,
    pub paths: usize,
    pub steps_per_period: usize,
    pub monitoring: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRanges {
    pub rho: [f64; 2],
    pub sigma: [f64; 2],
    pub beta: [f64; 2],
    pub x0: [f64; 2],
}

/// Path of the sidecar belonging to a dataset file.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Computes every row of the dataset in memory.
pub fn dataset_rows(spec: &DatasetSpec, exec: Execution) -> Result<Vec<[f64; 5]>> {
    spec.validate()?;
    let sched = Schedule::new(spec.alpha, spec.maturity, spec.r)?;
    let beta = spec.beta_range()?;
    let mc = spec.mc;
    check_cds_inputs(spec.rho.0, spec.x0.0, &mc)?;
    let chunks = mc.paths.div_ceil(PATH_CHUNK);
    let rows: Vec<Result<[f64; 5]>> = exec.map_range(spec.samples, |i| {
        let mut u = rng::stream(mc.seed, Purpose::DatasetSamples, 0, i as u64);
        let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * u.random::<f64>();
        let rho = draw(spec.rho);
        let b = draw(beta);
        let x0 = draw(spec.x0);
        let parts: Vec<LegSums> = (0..chunks).map(|c| cds_chunk(rho, b, x0, &sched, &mc, i as u64, c)).collect();
        let q = ratio_quote(&LegSums::merge(&parts), mc.paths, sched.alpha(), spec.lgd)?;
        Ok([rho, b, x0, q.quote, q.std_error])
    });
    rows.into_iter().collect()
}

/// Writes the dataset as little-endian `f64` rows plus `<path>.json`.
pub fn generate_cds_dataset(spec: &DatasetSpec, out: &Path, exec: Execution) -> Result<DatasetHeader> {
    let rows = dataset_rows(spec, exec)?;
    let beta = spec.beta_range()?;
    let header = DatasetHeader {
        format: "lbcdo-cds-dataset".into(),
        version: 1,
        rows: rows.len(),
        columns: DATASET_COLUMNS.iter().map(|s| s.to_string()).collect(),
        dtype: "f64".into(),
        byte_order: "little".into(),
        quote_unit: "decimal".into(),
        ranges: DatasetRanges {
            rho: [spec.rho.0, spec.rho.1],
            sigma: [spec.sigma.0, spec.sigma.1],
            beta: [beta.0, beta.1],
            x0: [spec.x0.0, spec.x0.1],
        },
        r: spec.r,
        lgd: spec.lgd,
        alpha: spec.alpha,
        maturity: spec.maturity,
        paths: spec.mc.paths,
        steps_per_period: spec.mc.steps_per_period,
        monitoring: "continuous (Brownian-bridge corrected)".into(),
        seed: spec.mc.seed,
    };
    let mut w = BufWriter::new(File::create(out)?);
    for row in &rows {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut side = BufWriter::new(File::create(sidecar_path(out))?);
    serde_json::to_writer_pretty(&mut side, &header)?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(header)
}

/// Reads a dataset and its sidecar.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Vec<f64>>)> {
    let header: DatasetHeader = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    if header.dtype != "f64" || header.byte_order != "little" {
        return Err(Error::Dataset(format!("unsupported encoding {} / {}", header.dtype, header.byte_order)));
    }
    let cols = header.columns.len();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != header.rows * cols * 8 {
        return Err(Error::Dataset(format!(
            "expected {} rows of {cols} values, file has {} bytes",
            header.rows,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((header, values.chunks(cols).map(|r| r.to_vec()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::standard_tranches;
    use crate::single_name::cds_quote_analytic;

    fn table_params(rho: f64) -> ModelParams {
        ModelParams::new(0.015, 0.0543, rho).unwrap()
    }

    #[test]
    fn unreachable_barrier_never_defaults() {
        let d = simulate_basket(&table_params(0.3), &[1e6; 5], 200, 1, Execution::Parallel).unwrap();
        assert!(d.path(0).iter().all(|&i| i == DefaultTimes::NEVER));
        let (t, idx) = price_cdo_direct(&d, &table_params(0.3), &standard_tranches(), PremiumConvention::Published).unwrap();
        assert!(t.iter().all(|x| *x == 0.0));
        assert_eq!(idx, 0.0);
        assert!(d.default_fraction().iter().all(|f| *f == 0.0));
    }

    #[test]
    fn wiped_out_equity_pays_one_over_alpha() {
        // three of four names gone at T_1: the loss exceeds the detachment
        let n = DefaultTimes::NEVER;
        let d = DefaultTimes::from_indices(4, 20, vec![1, 1, 1, n, 1, 1, n, 1]).unwrap();
        let p = table_params(0.2);
        let eq = TrancheSpec::new(0.0, 0.03).unwrap();
        let (t, _) = price_cdo_direct(&d, &p, &[eq], PremiumConvention::Published).unwrap();
        assert!((t[0] - 40_000.0).abs() < 1e-8, "{}", t[0]);
    }

    #[test]
    fn defaults_lie_on_dates_and_losses_grow() {
        let p = table_params(0.158);
        let x0: Vec<f64> = (0..30).map(|k| 0.3 + 0.1 * k as f64).collect();
        let d = simulate_basket(&p, &x0, 300, 5, Execution::Parallel).unwrap();
        let sched = p.schedule();
        for m in 0..300 {
            for k in 0..30 {
                let t = d.tau(k, m, &sched);
                assert!(t.is_infinite() || sched.dates().contains(&t));
            }
        }
        let f = d.default_fraction();
        for path in f.chunks(21) {
            assert!(path.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn thread_count_does_not_change_defaults() {
        let p = table_params(0.4);
        let x0 = [0.5, 1.0, 1.5, 2.0];
        let a = simulate_basket(&p, &x0, 500, 9, Execution::Parallel).unwrap();
        let b = simulate_basket(&p, &x0, 500, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exchangeable_names() {
        let p = table_params(0.3);
        let x0: Vec<f64> = (0..12).map(|k| 0.5 + 0.2 * k as f64).collect();
        let d = simulate_basket(&p, &x0, 400, 3, Execution::Parallel).unwrap();
        let perm: Vec<usize> = (0..12).map(|k| (k * 5) % 12).collect();
        let mut idx = Vec::new();
        for m in 0..400 {
            idx.extend(perm.iter().map(|&k| d.path(m)[k]));
        }
        let e = DefaultTimes::from_indices(12, 20, idx).unwrap();
        let a = price_cdo_direct(&d, &p, &standard_tranches(), PremiumConvention::Published).unwrap();
        let b = price_cdo_direct(&e, &p, &standard_tranches(), PremiumConvention::Published).unwrap();
        assert_eq!(a, b);
    }

    fn default_corr(rho: f64, paths: usize) -> (f64, f64) {
        let p = table_params(rho);
        let d = simulate_basket(&p, &[1.0, 1.0], paths, 17, Execution::Parallel).unwrap();
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        for m in 0..paths {
            let a = (d.path(m)[0] != DefaultTimes::NEVER) as u8 as f64;
            let b = (d.path(m)[1] != DefaultTimes::NEVER) as u8 as f64;
            sa += a;
            sb += b;
            sab += a * b;
        }
        let n = paths as f64;
        let (pa, pb) = (sa / n, sb / n);
        let cov = sab / n - pa * pb;
        let corr = cov / (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt();
        (corr, 1.0 / n.sqrt())
    }

    #[test]
    fn near_one_correlation_couples_defaults() {
        let (c, _) = default_corr(0.999, 100_000);
        assert!(c > 0.9, "{c}");
    }

    #[test]
    fn zero_correlation_decouples_defaults() {
        let (c, se) = default_corr(0.0, 100_000);
        assert!(c.abs() < 5.0 * se, "{c}");
    }

    #[test]
    fn table_setting_equity_is_in_range() {
        // cloud with an index near 150 bps
        let p = table_params(0.158);
        let x0: Vec<f64> = (0..125).map(|k| 1.2 + 0.025 * k as f64).collect();
        let d = simulate_basket(&p, &x0, 20_000, 11, Execution::Parallel).unwrap();
        let (t, idx) = price_cdo_direct(&d, &p, &standard_tranches(), PremiumConvention::Published).unwrap();
        assert!((3500.0..6000.0).contains(&t[0]), "{t:?}");
        assert!((80.0..250.0).contains(&idx), "{idx}");
        assert!(t.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn mc_cds_matches_analytic() {
        let p = table_params(0.158);
        let sched = p.schedule();
        let cfg = McCdsConfig {
            paths: 20_000,
            ..McCdsConfig::default()
        };
        let q = mc_cds_quote(0.158, p.beta(), 1.5, &sched, 0.6, &cfg, 0, Execution::Parallel).unwrap();
        let exact = cds_quote_analytic(SingleNameState::new(1.5, p.beta()), &sched, 0.6).unwrap();
        assert!((q.quote - exact).abs() < 3.5 * q.std_error, "{q:?} vs {exact}");
        assert!(q.std_error < 0.05 * exact);
    }

    #[test]
    fn mc_cds_is_thread_invariant() {
        let sched = table_params(0.1).schedule();
        let cfg = McCdsConfig {
            paths: 3000,
            steps_per_period: 10,
            seed: 5,
        };
        let a = mc_cds_quote(0.3, 0.2, 1.0, &sched, 0.6, &cfg, 4, Execution::Parallel).unwrap();
        let b = mc_cds_quote(0.3, 0.2, 1.0, &sched, 0.6, &cfg, 4, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(mc_cds_quote(1.0, 0.2, 1.0, &sched, 0.6, &cfg, 4, Execution::Parallel).is_err());
    }

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            samples: 12,
            mc: McCdsConfig {
                paths: 1500,
                steps_per_period: 10,
                seed: 3,
            },
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn dataset_round_trip_and_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cds.bin");
        let spec = small_spec();
        let header = generate_cds_dataset(&spec, &path, Execution::Parallel).unwrap();
        let (h2, rows) = read_dataset(&path).unwrap();
        assert_eq!(header, h2);
        assert_eq!(rows.len(), 12);
        assert_eq!(h2.seed, 3);
        let sched = Schedule::new(spec.alpha, spec.maturity, spec.r).unwrap();
        let (blo, bhi) = spec.beta_range().unwrap();
        for r in &rows {
            assert!((0.0..1.0).contains(&r[0]) && (blo..=bhi).contains(&r[1]) && (0.0..=6.0).contains(&r[2]));
            // same streams as the standalone estimator
            let sample = rows.iter().position(|x| x == r).unwrap() as u64;
            let q = mc_cds_quote(r[0], r[1], r[2], &sched, spec.lgd, &spec.mc, sample, Execution::Sequential).unwrap();
            assert_eq!(q.quote, r[3]);
            let state = SingleNameState::new(r[2], r[1]);
            let exact = cds_quote_analytic(state, &sched, spec.lgd).unwrap();
            let se = q.oracle_std_error(state, &sched, spec.lgd, spec.mc.paths).unwrap();
            // coarse steps: the bridge factor keeps the estimate unbiased
            assert!((r[3] - exact).abs() <= 4.0 * se, "{r:?} vs {exact}");
        }
        assert_eq!(dataset_rows(&spec, Execution::Sequential).unwrap().iter().map(|r| r.to_vec()).collect::<Vec<_>>(), rows);
    }

    #[test]
    fn safe_name_quotes_near_zero() {
        let spec = DatasetSpec {
            samples: 1,
            rho: (0.5, 0.5),
            sigma: (0.01, 0.01),
            x0: (5.9, 5.9),
            ..small_spec()
        };
        let rows = dataset_rows(&spec, Execution::Parallel).unwrap();
        assert!(rows[0][3] * 1e4 < 10.0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = generate_cds_dataset(&small_spec(), Path::new("/nonexistent-dir/x.bin"), Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
