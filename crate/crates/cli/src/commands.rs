use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Result};
use clap::Args;

use lbcdo::calibration::{calibrate as run_calibration, infer_x0, X0Mode};
use lbcdo::discretization::{mass, smooth_initial_datum};
use lbcdo::engine::{LargeBasketPricer, Scheme};
use lbcdo::monte_carlo::{generate_cds_dataset, price_cdo_direct, simulate_basket, sidecar_path};
use lbcdo::params::{from_bps, to_bps};
use lbcdo::single_name::attainable_range;
use lbcdo::synthetic::{descending_cds_quotes, model_quotes};
use lbcdo::{Execution, MarketQuotes, ModelParams, TrancheSpec};

use crate::config::{DatasetSection, InputSection, RunConfig};
use crate::io::{self, CdsRow, TrancheRow};
use crate::report::{diagnostics_warnings, CalibrationReport, PriceColumn, PriceReport, Timings};
use crate::{usage, GlobalArgs};

/// Resolved configuration shared by every command.
pub struct Context {
    pub cfg: RunConfig,
    pub exec: Execution,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(g: &GlobalArgs) -> Result<Self> {
        let mut cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = g.seed {
            cfg.engine.seed = s;
        }
        if let Some(n) = g.threads {
            if n == 0 {
                return Err(usage("--threads must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow!("thread pool: {e}"))?;
        }
        let out_dir = g.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Context {
            cfg,
            exec: Execution::Parallel,
            out_dir,
        })
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

fn warn(lines: impl IntoIterator<Item = String>) {
    for l in lines {
        eprintln!("warning: {l}");
    }
}

/// CDS quotes from `--cds`, the config, or the built-in synthetic curve, in
/// descending spread order.
fn cds_rows(ctx: &Context, cds: &Option<PathBuf>, synthetic: bool) -> Result<Option<Vec<CdsRow>>> {
    if let Some(p) = cds.as_ref().or(ctx.cfg.inputs.cds_quotes.as_ref()) {
        return Ok(Some(io::sort_by_spread(io::read_cds(p)?)));
    }
    if synthetic {
        let rows = lbcdo::synthetic::index_like_quotes()
            .into_iter()
            .enumerate()
            .map(|(k, q)| CdsRow {
                name: format!("N{:03}", k + 1),
                spread_bps: to_bps(q),
            })
            .collect();
        return Ok(Some(rows));
    }
    Ok(None)
}

fn cds_only_quotes(rows: &[CdsRow]) -> Result<MarketQuotes> {
    Ok(MarketQuotes::new(rows.iter().map(|r| from_bps(r.spread_bps)).collect(), vec![], None)?)
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Comma-separated subset of mc, em, theta, sm, dm.
    #[arg(long)]
    schemes: Option<String>,
    /// Tranches as `attach:detach,...`.
    #[arg(long)]
    tranches: Option<String>,
    /// CDS quote CSV (name, spread_bps).
    #[arg(long)]
    cds: Option<PathBuf>,
    /// Explicit x0 CSV (name, x0); skips the inversion.
    #[arg(long)]
    x0: Option<PathBuf>,
    /// Use the built-in 125-name curve (300 to 20 bps) when no quotes are given.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Mc,
    Scheme(Scheme),
}

fn parse_methods(s: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in s.iter().map(|m| m.trim().to_ascii_lowercase()).filter(|m| !m.is_empty()) {
        let method = if m == "mc" {
            Method::Mc
        } else {
            Method::Scheme(m.parse().map_err(|e: lbcdo::Error| usage(e.to_string()))?)
        };
        if !out.contains(&method) {
            out.push(method);
        }
    }
    if out.is_empty() {
        return Err(usage("no pricing scheme selected"));
    }
    Ok(out)
}

pub fn price(ctx: &Context, args: &PriceArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let engine = cfg.engine(ctx.exec)?;
    let tranches = match &args.tranches {
        Some(t) => TrancheSpec::parse_list(t)?,
        None => cfg.tranches()?,
    };
    let methods = match &args.schemes {
        Some(s) => parse_methods(&s.split(',').map(String::from).collect::<Vec<_>>())?,
        None => parse_methods(&cfg.price.schemes)?,
    };
    let x0 = if let Some(p) = args.x0.as_ref().or(cfg.inputs.x0.as_ref()) {
        io::read_x0(p)?
    } else if let Some(rows) = cds_rows(ctx, &args.cds, args.synthetic)? {
        infer_x0(&cds_only_quotes(&rows)?, &params, &cfg.x0_mode()?)?
    } else {
        return Err(usage("price needs x0 or CDS quotes (--x0, --cds, inputs.* or --synthetic)"));
    };

    let pricer = LargeBasketPricer::for_schedule(engine, &params.schedule())?;
    let mut columns = Vec::new();
    for m in methods {
        let col = match m {
            Method::Mc => {
                let start = Instant::now();
                let defaults = simulate_basket(&params, &x0, engine.paths, engine.seed, ctx.exec)?;
                let (tranche_bps, index_bps) = price_cdo_direct(&defaults, &params, &tranches, engine.convention)?;
                PriceColumn {
                    method: "MC".into(),
                    tranche_bps,
                    index_bps,
                    seconds: start.elapsed().as_secs_f64(),
                    diagnostics: None,
                }
            }
            Method::Scheme(s) => {
                let r = pricer.price(s, &params, &x0, &tranches)?;
                warn(diagnostics_warnings(s.label(), &r.diagnostics));
                PriceColumn {
                    method: s.label().into(),
                    tranche_bps: r.tranche_bps,
                    index_bps: r.index_bps,
                    seconds: r.seconds,
                    diagnostics: Some(r.diagnostics),
                }
            }
        };
        columns.push(col);
    }
    let report = PriceReport {
        sigma: params.sigma(),
        rho: params.rho(),
        r: params.r(),
        paths: engine.paths,
        seed: engine.seed,
        tranches: tranches.iter().map(|t| t.label().to_string()).collect(),
        columns,
    };
    let text = report.text();
    print!("{text}");
    io::write_text(&ctx.output("price.txt")?, &text)?;
    io::write_text(&ctx.output("price.csv")?, &report.csv())?;
    io::write_json(&ctx.output("price.json")?, &report)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CDS quote CSV (name, spread_bps).
    #[arg(long)]
    cds: Option<PathBuf>,
    /// Tranche quote CSV (attach, detach, spread_bps).
    #[arg(long = "tranche-quotes")]
    tranche_quotes: Option<PathBuf>,
    /// Index quote in bps (overrides `inputs.index_bps`).
    #[arg(long = "index-bps")]
    index_bps: Option<f64>,
}

/// Names whose quotes the model cannot reach at the start parameters.
fn unattainable(rows: &[CdsRow], params: &ModelParams) -> Result<Vec<String>> {
    let (lo, hi) = attainable_range(params.beta(), &params.schedule(), params.lgd())?;
    Ok(rows
        .iter()
        .filter(|r| {
            let q = from_bps(r.spread_bps);
            !(q >= lo && q <= hi)
        })
        .map(|r| format!("{} ({} bps)", r.name, r.spread_bps))
        .collect())
}

pub fn calibrate(ctx: &Context, args: &CalibrateArgs) -> Result<()> {
    let t0 = Instant::now();
    let cfg = &ctx.cfg;
    let cal = cfg.calibration(ctx.exec)?;
    let rows = cds_rows(ctx, &args.cds, false)?.ok_or_else(|| usage("calibrate needs CDS quotes (--cds or inputs.cds_quotes)"))?;
    let tpath = args
        .tranche_quotes
        .as_ref()
        .or(cfg.inputs.tranche_quotes.as_ref())
        .ok_or_else(|| usage("calibrate needs tranche quotes (--tranche-quotes or inputs.tranche_quotes)"))?;
    let tranche_rows = io::read_tranches(tpath)?;
    let index_bps = args.index_bps.or(cfg.inputs.index_bps);
    let mut bad: Vec<String> = tranche_rows
        .iter()
        .filter(|(_, q)| q.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        .map(|(t, q)| format!("tranche {} ({q} bps)", t.label()))
        .collect();
    if let Some(q) = index_bps.filter(|q| q.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        bad.push(format!("index ({q} bps)"));
    }
    if matches!(cal.x0_mode, X0Mode::Analytic) {
        bad.extend(unattainable(&rows, &cal.start)?);
    }
    if !bad.is_empty() {
        return Err(anyhow!("infeasible quotes at the start point: {}", bad.join(", ")));
    }
    let tranche_quotes = tranche_rows.into_iter().map(|(t, q)| (t, from_bps(q))).collect();
    let mut quotes = MarketQuotes::new(
        rows.iter().map(|r| from_bps(r.spread_bps)).collect(),
        tranche_quotes,
        index_bps.map(from_bps),
    )?;
    if let Some(d) = &cfg.inputs.quote_date {
        quotes = quotes.with_date(d.clone());
    }
    let load = t0.elapsed().as_secs_f64();
    let result = run_calibration(&quotes, &cal)?;
    warn(diagnostics_warnings(cal.scheme.label(), &result.diagnostics));
    if !result.converged {
        warn([format!("optimizer stopped without meeting a tolerance: {}", result.message)]);
    }
    let report = CalibrationReport {
        timings: Timings {
            load_seconds: load,
            calibration_seconds: result.seconds,
            total_seconds: t0.elapsed().as_secs_f64(),
        },
        result,
    };
    let text = report.text();
    print!("{text}");
    io::write_text(&ctx.output("calibration.txt")?, &text)?;
    io::write_text(&ctx.output("calibration.csv")?, &report.csv())?;
    io::write_json(&ctx.output("calibration.json")?, &report)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Number of samples (overrides `dataset.samples`).
    #[arg(long)]
    n: Option<usize>,
    /// Dataset file; the sidecar is written next to it as `<file>.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn gen_dataset(ctx: &Context, args: &DatasetArgs) -> Result<()> {
    let mut spec = ctx.cfg.dataset();
    if let Some(n) = args.n {
        spec.samples = n;
    }
    let out = args.output.clone().unwrap_or_else(|| ctx.cfg.dataset.output.clone());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let start = Instant::now();
    let header = generate_cds_dataset(&spec, &out, ctx.exec)?;
    println!(
        "wrote {} rows ({}) to {} and {} in {:.2} s",
        header.rows,
        header.columns.join(", "),
        out.display(),
        sidecar_path(&out).display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// CDS quote CSV (name, spread_bps).
    #[arg(long)]
    cds: Option<PathBuf>,
    /// Use the built-in 125-name curve (300 to 20 bps) when no quotes are given.
    #[arg(long)]
    synthetic: bool,
    /// Histogram bins (overrides `invert.bins`).
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(serde::Serialize)]
struct X0Out<'a> {
    name: &'a str,
    spread_bps: f64,
    x0: f64,
}

#[derive(serde::Serialize)]
struct Bin {
    left: f64,
    right: f64,
    count: usize,
}

#[derive(serde::Serialize)]
struct DensityPoint {
    x: f64,
    density: f64,
}

/// Equal-width bins over `[min, max]`; identical values give a single bin.
fn histogram(x: &[f64], bins: usize) -> Vec<Bin> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return vec![Bin {
            left: lo,
            right: hi,
            count: x.len(),
        }];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in x {
        counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            left: lo + i as f64 * w,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * w },
            count,
        })
        .collect()
}

pub fn invert_x0(ctx: &Context, args: &InvertArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let bins = args.bins.unwrap_or(cfg.invert.bins);
    if bins == 0 {
        return Err(usage("need at least one histogram bin"));
    }
    let rows = cds_rows(ctx, &args.cds, args.synthetic)?.ok_or_else(|| usage("invert-x0 needs CDS quotes (--cds, inputs.cds_quotes or --synthetic)"))?;
    let x0 = infer_x0(&cds_only_quotes(&rows)?, &params, &cfg.x0_mode()?)?;
    let grid = cfg.engine(ctx.exec)?.grid;
    let datum = smooth_initial_datum(&x0, &grid)?;
    if datum.clamped_mass > 0.0 {
        warn([format!("{:.3e} of the x0 cloud lies outside the grid", datum.clamped_mass)]);
    }
    let table: Vec<X0Out> = rows
        .iter()
        .zip(&x0)
        .map(|(r, x)| X0Out {
            name: &r.name,
            spread_bps: r.spread_bps,
            x0: *x,
        })
        .collect();
    let density: Vec<DensityPoint> = (0..grid.d())
        .map(|i| DensityPoint {
            x: grid.interior(i),
            density: datum.density.values()[i],
        })
        .collect();
    io::write_rows(&ctx.output("x0.csv")?, &table)?;
    io::write_rows(&ctx.output("x0_histogram.csv")?, &histogram(&x0, bins))?;
    io::write_rows(&ctx.output("x0_density.csv")?, &density)?;
    let (lo, hi) = (x0.iter().cloned().fold(f64::INFINITY, f64::min), x0.iter().cloned().fold(0.0, f64::max));
    println!(
        "{} names at sigma = {}, beta = {:.6}: x0 in [{lo:.6}, {hi:.6}], density mass {:.12}",
        x0.len(),
        params.sigma(),
        params.beta(),
        mass(datum.density.values(), &grid)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Tranches as `attach:detach,...` (default: the config's price tranches).
    #[arg(long)]
    tranches: Option<String>,
    #[arg(long, default_value_t = 125)]
    names: usize,
    /// Widest CDS spread in bps.
    #[arg(long, default_value_t = 300.0)]
    high_bps: f64,
    /// Tightest CDS spread in bps.
    #[arg(long, default_value_t = 20.0)]
    low_bps: f64,
    /// Scheme used to price the tranches.
    #[arg(long, default_value = "dm")]
    scheme: String,
}

pub fn synth_market(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let engine = cfg.engine(ctx.exec)?;
    let tranches = match &args.tranches {
        Some(t) => TrancheSpec::parse_list(t)?,
        None => cfg.tranches()?,
    };
    let scheme: Scheme = args.scheme.parse().map_err(|e: lbcdo::Error| usage(e.to_string()))?;
    let cds = descending_cds_quotes(args.names, args.high_bps, args.low_bps)?;
    let quotes = model_quotes(cds, &params, &tranches, engine, scheme)?;
    let cds_rows: Vec<CdsRow> = quotes
        .cds_quotes()
        .iter()
        .enumerate()
        .map(|(k, q)| CdsRow {
            name: format!("N{:03}", k + 1),
            spread_bps: to_bps(*q),
        })
        .collect();
    let tranche_rows: Vec<TrancheRow> = quotes
        .tranche_quotes()
        .iter()
        .map(|(t, q)| TrancheRow {
            attach: t.attach(),
            detach: t.detach(),
            spread_bps: to_bps(*q),
        })
        .collect();
    let index_bps = to_bps(quotes.index_quote().expect("model quotes include the index"));
    io::write_rows(&ctx.output("cds.csv")?, &cds_rows)?;
    io::write_rows(&ctx.output("tranches.csv")?, &tranche_rows)?;
    // the full config, so a calibration reuses the same grid and paths
    let mut market = cfg.clone();
    market.inputs = InputSection {
        cds_quotes: Some("cds.csv".into()),
        tranche_quotes: Some("tranches.csv".into()),
        index_bps: Some(index_bps),
        ..Default::default()
    };
    market.price.tranches = tranches.iter().map(|t| format!("{}:{}", t.attach(), t.detach())).collect::<Vec<_>>().join(",");
    market.dataset.output = DatasetSection::default().output;
    market.output.dir = ".".into();
    let toml = format!(
        "# quotes priced by {scheme} at sigma = {}, rho = {}\n{}",
        params.sigma(),
        params.rho(),
        toml::to_string(&market)?
    );
    io::write_text(&ctx.output("market.toml")?, &toml)?;
    println!("index {index_bps:.4} bps");
    for t in &tranche_rows {
        println!("[{},{}] {:.4} bps", t.attach, t.detach, t.spread_bps);
    }
    println!("wrote cds.csv, tranches.csv and market.toml to {}", ctx.out_dir.display());
    Ok(())
}
