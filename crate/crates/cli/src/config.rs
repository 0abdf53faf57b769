//! Run configuration, read from a JSON document with unknown keys rejected.

use cnls_core::diagnostics::WeightSpec;
use cnls_core::evolve::{BlowupRule, StepControls};
use cnls_core::grid::GridSpec;
use cnls_core::groundstate::SolveOptions;
use cnls_core::harness::{InitialData, Regime, Scenario};
use cnls_core::model::SystemParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: Option<SystemParams>,
    /// Source text of the potential `F`.
    #[serde(default)]
    pub potential: Option<String>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub ground_state: GroundStateConfig,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub dichotomy: Option<DichotomyConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub samples: usize,
    pub tol: f64,
    /// Checks that must pass; all of them when empty.
    pub require: Vec<String>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            samples: 10_000,
            tol: 1e-10,
            require: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateConfig {
    pub solver: SolveOptions,
    /// Allowed relative deviation of `K/P` from `2d/(d-2)`.
    pub pohozaev_tol: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        GroundStateConfig {
            solver: SolveOptions::default(),
            pohozaev_tol: 5e-3,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_record_interval() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub initial: InitialData,
    #[serde(default = "one")]
    pub t_final: f64,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub controls: StepControls,
    #[serde(default)]
    pub blowup: BlowupRule,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub expected: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DichotomyConfig {
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub steps: usize,
    pub template: Scenario,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: missing `{0}`")]
    Missing(&'static str),
    #[error("config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn params(&self) -> Result<&SystemParams, ConfigError> {
        let p = self.params.as_ref().ok_or(ConfigError::Missing("params"))?;
        p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }

    pub fn potential(&self) -> Result<&str, ConfigError> {
        self.potential.as_deref().ok_or(ConfigError::Missing("potential"))
    }

    /// The `evolve` section as a scenario over the top-level system and grid.
    pub fn evolve_scenario(&self) -> Result<Scenario, ConfigError> {
        let e = self.evolve.as_ref().ok_or(ConfigError::Missing("evolve"))?;
        Ok(Scenario {
            name: "evolve".into(),
            initial: e.initial.clone(),
            params: self.params()?.clone(),
            potential: self.potential()?.to_string(),
            grid: self.grid,
            t_final: e.t_final,
            record_interval: e.record_interval,
            controls: e.controls.clone(),
            blowup: e.blowup,
            weight: e.weight.clone(),
            expected: e.expected,
            snapshot_times: e.snapshot_times.clone(),
        })
    }
}
