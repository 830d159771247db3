//! Per-command JSON configuration. Unknown keys are rejected so a typo in a
//! study file fails loudly instead of silently running defaults.

use ppwald_core::curve::TimeGrid;
use ppwald_core::estimate::BasisSpec;
use ppwald_core::simulate::ScenarioConfig;
use ppwald_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn to_grid(self) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.dt, self.n)
    }
}

/// Default analysis grid: [0, 3] at 5 ms resolution.
pub fn default_grid() -> TimeGrid {
    TimeGrid::new(0.0, 0.005, 601).expect("static grid parameters")
}

pub fn default_basis() -> BasisSpec {
    BasisSpec::default()
}

/// Ridge penalty: either a fixed value or the trial-count rule `"1/m"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Fixed(f64),
    Rule(String),
}

impl EtaSpec {
    pub fn resolve(&self, m: usize) -> Result<f64> {
        match self {
            EtaSpec::Fixed(v) if *v >= 0.0 => Ok(*v),
            EtaSpec::Fixed(v) => Err(Error::InvalidInput(format!("eta must be >= 0, got {v}"))),
            EtaSpec::Rule(rule) if rule == "1/m" => Ok(1.0 / m as f64),
            EtaSpec::Rule(rule) => Err(Error::InvalidInput(format!(
                "unknown eta rule {rule:?}; use a number or \"1/m\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: String,
    pub m: usize,
    pub seed: u64,
    /// Full generative parameterization; required when `scenario` is
    /// `"custom"`, ignored otherwise.
    #[serde(default)]
    pub custom: Option<ScenarioConfig>,
}

impl SimulateConfig {
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        if self.scenario == "custom" {
            return self.custom.clone().ok_or_else(|| {
                Error::InvalidInput("scenario \"custom\" needs a `custom` block".into())
            });
        }
        let scenario = ppwald_core::simulate::Scenario::parse(&self.scenario).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown scenario {:?}; expected 1a, 1b, 2a, 2b, 3, or custom",
                self.scenario
            ))
        })?;
        Ok(ScenarioConfig::preset(scenario))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub candidate_knots: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub method: String,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    #[serde(default)]
    pub eta: Option<EtaSpec>,
    #[serde(default)]
    pub level_hi: Option<u32>,
    #[serde(default)]
    pub level_lo: Option<u32>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub pad_factor: Option<usize>,
    #[serde(default)]
    pub cv: Option<CvConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<String>,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub eta: Option<EtaSpec>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub basis: Option<BasisSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapCmdConfig {
    pub b_reps: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    #[serde(default)]
    pub eta: Option<EtaSpec>,
    #[serde(default)]
    pub level_hi: Option<u32>,
    #[serde(default)]
    pub level_lo: Option<u32>,
    #[serde(default)]
    pub band_scale: Option<String>,
}

pub fn parse_config<T: serde::de::DeserializeOwned>(raw: &str) -> Result<T> {
    serde_json::from_str(raw).map_err(|e| Error::Parse(format!("config: {e}")))
}
