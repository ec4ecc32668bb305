use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{generate_instance, GeneratorParams, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmChoice {
    #[serde(rename = "ptilde")]
    PTilde,
    #[serde(rename = "algA")]
    AlgA,
    #[serde(rename = "algA1")]
    AlgA1,
    #[serde(rename = "algA2")]
    AlgA2,
    #[serde(rename = "offline-only")]
    OfflineOnly,
}

impl AlgorithmChoice {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmChoice::PTilde => "ptilde",
            AlgorithmChoice::AlgA => "algA",
            AlgorithmChoice::AlgA1 => "algA1",
            AlgorithmChoice::AlgA2 => "algA2",
            AlgorithmChoice::OfflineOnly => "offline-only",
        }
    }
}

impl fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            AlgorithmChoice::PTilde,
            AlgorithmChoice::AlgA,
            AlgorithmChoice::AlgA1,
            AlgorithmChoice::AlgA2,
            AlgorithmChoice::OfflineOnly,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(HarnessError::Config(format!("unknown report format `{s}`"))),
        }
    }
}

/// Where the experiment's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Inline(Instance),
    Generator(GeneratorParams),
    Path(PathBuf),
}

impl InstanceSource {
    pub fn resolve(&self) -> Result<Instance, HarnessError> {
        match self {
            InstanceSource::Inline(inst) => Ok(inst.clone()),
            InstanceSource::Generator(params) => Ok(generate_instance(params).instance),
            InstanceSource::Path(path) => Instance::load(path).map_err(|e| {
                HarnessError::Config(format!("cannot load instance {}: {e}", path.display()))
            }),
        }
    }
}

fn default_trials() -> usize {
    1
}

fn default_gamma_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algorithm: AlgorithmChoice,
    pub epsilon: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Constant `c` of the regime threshold `c·ε²/ln(K/ε)`.
    #[serde(default = "default_gamma_c")]
    pub gamma_c: f64,
    /// Feasibility margin handed to `algA1`; the exact `ξ*` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSource, algorithm: AlgorithmChoice, epsilon: f64) -> Self {
        ExperimentConfig {
            instance,
            algorithm,
            epsilon,
            trials: default_trials(),
            seed: 0,
            gamma_c: default_gamma_c(),
            xi: None,
            output: None,
            format: ReportFormat::Csv,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(HarnessError::Config(format!(
                "epsilon = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.gamma_c > 0.0 && self.gamma_c.is_finite()) {
            return Err(HarnessError::Config(format!("gamma_c = {} must be > 0", self.gamma_c)));
        }
        Ok(())
    }
}
