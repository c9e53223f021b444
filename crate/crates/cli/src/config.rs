use std::path::Path;

use innovations::data::{CsvSchema, RollingSchedule};
use innovations::model::{Mode, ModelConfig};
use innovations::synth::{Ar1Spec, MarkovChainSpec};
use innovations::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub mode: Mode,
    pub k: usize,
    pub embed: usize,
    pub hidden: usize,
    pub depth: usize,
    /// Seed for network initialisation.
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::default();
        Self {
            mode: Mode::Wir,
            k: c.k,
            embed: c.embed,
            hidden: c.hidden,
            depth: c.depth,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            k: self.k,
            embed: self.embed,
            hidden: self.hidden,
            depth: self.depth,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    #[serde(flatten)]
    pub schema: CsvSchema,
    /// Train on the first `train_len` samples only.
    pub train_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSection {
    pub horizon: Vec<usize>,
    pub ensemble: usize,
    pub quantiles: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            horizon: vec![1],
            ensemble: 1000,
            quantiles: vec![0.05, 0.25, 0.5, 0.75, 0.95],
            alpha: vec![0.5, 0.9],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    /// First forecast origin; defaults to the end of the training prefix.
    pub start: Option<usize>,
    pub count: Option<usize>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingSection {
    pub window: usize,
    pub period: usize,
    pub span: Option<usize>,
}

impl RollingSection {
    pub fn schedule(&self, horizon: usize) -> RollingSchedule {
        RollingSchedule {
            window: self.window,
            period: self.period,
            horizon,
            span: self.span,
        }
    }
}

/// Everything a run can be configured with; each command reads the sections it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub forecast: ForecastSection,
    pub evaluate: EvaluateSection,
    pub rolling: Option<RollingSection>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.train.mode = cfg.model.mode;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum ProcessSpec {
    Ar1(Ar1Spec),
    Markov(MarkovChainSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFile {
    #[serde(flatten)]
    pub process: ProcessSpec,
    #[serde(default = "default_interval")]
    pub interval_secs: i64,
}

fn default_interval() -> i64 {
    300
}

impl SynthFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}
