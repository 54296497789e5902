//! TOML run configuration. Every section is optional and unknown keys are
//! rejected; relative paths are resolved against the config file's folder.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use lbcdo::calibration::{CalibrationConfig, X0Mode, RHO_MAX};
use lbcdo::discretization::SpaceGrid;
use lbcdo::engine::{EngineConfig, Scheme, SchemeConfig};
use lbcdo::monte_carlo::{DatasetSpec, McCdsConfig};
use lbcdo::optimize::LsqOptions;
use lbcdo::pricing::PremiumConvention;
use lbcdo::{Execution, ModelParams, TrancheSpec};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub schemes: SchemeConfig,
    pub engine: EngineSection,
    pub inputs: InputSection,
    pub price: PriceSection,
    pub calibration: CalibrationSection,
    pub dataset: DatasetSection,
    pub invert: InvertSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub r: f64,
    pub sigma: f64,
    pub rho: f64,
    pub lgd: f64,
    pub alpha: f64,
    pub maturity: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            r: 0.015,
            sigma: 0.0543,
            rho: 0.158,
            lgd: 0.6,
            alpha: 0.25,
            maturity: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub a: f64,
    pub b: f64,
    pub d: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { a: -10.0, b: 20.0, d: 201 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Source {
    #[default]
    Analytic,
    Network,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub paths: usize,
    pub seed: u64,
    pub convention: PremiumConvention,
    pub x0_mode: X0Source,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            paths: 10_000,
            seed: 2024,
            convention: PremiumConvention::Published,
            x0_mode: X0Source::Analytic,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// CSV with header `name,spread_bps`.
    pub cds_quotes: Option<PathBuf>,
    /// CSV with header `attach,detach,spread_bps`.
    pub tranche_quotes: Option<PathBuf>,
    pub index_bps: Option<f64>,
    /// CSV with header `name,x0`; bypasses the inversion when pricing.
    pub x0: Option<PathBuf>,
    /// Weight file of the `f` network, used when `x0_mode = "network"`.
    pub weights: Option<PathBuf>,
    pub quote_date: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSection {
    pub schemes: Vec<String>,
    pub tranches: String,
}

impl Default for PriceSection {
    fn default() -> Self {
        PriceSection {
            schemes: vec!["dm".into()],
            tranches: "0:0.03,0.03:0.06,0.06:0.09,0.09:0.12,0.12:0.22,0.22:1".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub sigma0: f64,
    pub rho0: f64,
    pub sigma_bounds: [f64; 2],
    pub rho_bounds: [f64; 2],
    pub scheme: Scheme,
    pub optimizer: LsqOptions,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            sigma0: 0.05,
            rho0: 0.5,
            sigma_bounds: [0.01, 0.5],
            rho_bounds: [0.0, RHO_MAX],
            scheme: Scheme::Dm,
            optimizer: LsqOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples: usize,
    pub rho: [f64; 2],
    pub sigma: [f64; 2],
    pub x0: [f64; 2],
    /// Rate fixing the `beta` range; independent of `[model]`.
    pub r: f64,
    pub paths: usize,
    pub steps_per_period: usize,
    pub output: PathBuf,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        DatasetSection {
            samples: d.samples,
            rho: [d.rho.0, d.rho.1],
            sigma: [d.sigma.0, d.sigma.1],
            x0: [d.x0.0, d.x0.1],
            r: d.r,
            paths: d.mc.paths,
            steps_per_period: d.mc.steps_per_period,
            output: PathBuf::from("cds_dataset.bin"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertSection {
    pub bins: usize,
}

impl Default for InvertSection {
    fn default() -> Self {
        InvertSection { bins: 25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from(".") }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| crate::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.inputs.cds_quotes,
            &mut self.inputs.tranche_quotes,
            &mut self.inputs.x0,
            &mut self.inputs.weights,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.dataset.output);
        fix(&mut self.output.dir);
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        Ok(ModelParams::with_terms(m.r, m.sigma, m.rho, m.lgd, m.alpha, m.maturity)?)
    }

    pub fn engine(&self, exec: Execution) -> Result<EngineConfig> {
        if self.engine.paths == 0 {
            return Err(crate::usage("engine.paths must be positive"));
        }
        Ok(EngineConfig {
            grid: SpaceGrid::new(self.grid.a, self.grid.b, self.grid.d)?,
            paths: self.engine.paths,
            seed: self.engine.seed,
            schemes: self.schemes,
            convention: self.engine.convention,
            exec,
        })
    }

    pub fn tranches(&self) -> Result<Vec<TrancheSpec>> {
        let t = TrancheSpec::parse_list(&self.price.tranches)?;
        if t.is_empty() {
            return Err(crate::usage("no tranches given"));
        }
        Ok(t)
    }

    pub fn x0_mode(&self) -> Result<X0Mode> {
        match self.engine.x0_mode {
            X0Source::Analytic => Ok(X0Mode::Analytic),
            X0Source::Network => {
                let path = self
                    .inputs
                    .weights
                    .as_ref()
                    .ok_or_else(|| crate::usage("x0_mode = \"network\" needs inputs.weights"))?;
                Ok(X0Mode::Network(std::sync::Arc::new(lbcdo::nn::load_weights(path)?)))
            }
        }
    }

    pub fn calibration(&self, exec: Execution) -> Result<CalibrationConfig> {
        let c = &self.calibration;
        let m = &self.model;
        Ok(CalibrationConfig {
            start: ModelParams::with_terms(m.r, c.sigma0, c.rho0, m.lgd, m.alpha, m.maturity)?,
            sigma_bounds: (c.sigma_bounds[0], c.sigma_bounds[1]),
            rho_bounds: (c.rho_bounds[0], c.rho_bounds[1]),
            scheme: c.scheme,
            engine: self.engine(exec)?,
            x0_mode: self.x0_mode()?,
            optimizer: c.optimizer,
        })
    }

    pub fn dataset(&self) -> DatasetSpec {
        let d = &self.dataset;
        DatasetSpec {
            samples: d.samples,
            rho: (d.rho[0], d.rho[1]),
            sigma: (d.sigma[0], d.sigma[1]),
            x0: (d.x0[0], d.x0[1]),
            r: d.r,
            lgd: self.model.lgd,
            alpha: self.model.alpha,
            maturity: self.model.maturity,
            mc: McCdsConfig {
                paths: d.paths,
                steps_per_period: d.steps_per_period,
                seed: self.engine.seed,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_comparison_setup() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.r(), p.sigma(), p.rho()), (0.015, 0.0543, 0.158));
        let e = cfg.engine(Execution::Sequential).unwrap();
        assert_eq!((e.grid.d(), e.paths, e.schemes.em_points, e.schemes.theta_points), (201, 10_000, 15, 5));
        assert_eq!(cfg.tranches().unwrap().len(), 6);
        assert_eq!(cfg.dataset().samples, 1 << 17);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nvol = 0.2\n").is_err());
        assert!(toml::from_str::<RunConfig>("[modle]\n").is_err());
        assert!(toml::from_str::<RunConfig>("[schemes]\nem_pts = 3\n").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[model]\nr = 0.026\n[calibration]\nscheme = \"theta\"\n[calibration.optimizer]\nmethod = \"nelder_mead\"\n",
        )
        .unwrap();
        assert_eq!(cfg.params().unwrap().r(), 0.026);
        let c = cfg.calibration(Execution::Sequential).unwrap();
        assert_eq!(c.scheme, Scheme::Theta);
        assert_eq!(c.start.sigma(), 0.05);
        assert_eq!(c.optimizer.method, lbcdo::optimize::Method::NelderMead);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg: RunConfig = toml::from_str("[inputs]\ncds_quotes = \"cds.csv\"\n[output]\ndir = \"out\"\n").unwrap();
        cfg.resolve(Path::new("/data/run"));
        assert_eq!(cfg.inputs.cds_quotes.unwrap(), PathBuf::from("/data/run/cds.csv"));
        assert_eq!(cfg.output.dir, PathBuf::from("/data/run/out"));
    }
}
