//! Configuration file and the flags that override it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dogma_core::anchors::AnchorOptConfig;
use dogma_core::auto_label::LabelerConfig;
use dogma_core::decode::DecodeConfig;
use dogma_core::eval::{EvalConfig, OraclePredictorConfig};
use dogma_core::loss::LossConfig;
use dogma_core::pipeline::PipelineConfig;
use dogma_core::simulator::ScenarioConfig;
use dogma_core::{Error, Result};

/// Default artifact locations, relative to the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub frames: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub rejections: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub paths: Paths,
    pub scenario: Option<ScenarioConfig>,
    pub labeler: LabelerConfig,
    pub anchors: AnchorOptConfig,
    pub loss: LossConfig,
    pub decode: DecodeConfig,
    pub oracle: OraclePredictorConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let scenario = self
            .scenario
            .clone()
            .ok_or_else(|| Error::Config("the config file has no \"scenario\" section".into()))?;
        Ok(PipelineConfig {
            scenario,
            labeler: self.labeler.clone(),
            anchors: self.anchors.clone(),
            loss: self.loss.clone(),
            decode: self.decode.clone(),
            oracle: self.oracle.clone(),
            eval: self.eval.clone(),
            seed: self.seed,
        })
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The flag if given, else the config path, else a usage error naming the flag.
pub fn require(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set paths.{} in the config)", name.replace('-', "_"))))
}

pub fn set<T: Clone>(target: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *target = v.clone();
    }
}
