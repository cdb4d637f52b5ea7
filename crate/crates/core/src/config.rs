//! Pipeline configuration shared by the CLI, the evaluation harness and
//! the analysis service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::ScoringScheme;
use crate::decision::Tail;
use crate::ensemble::{BaggingPlan, BaselineMode};
use crate::trace::DEFAULT_MAX_LEN;
use crate::{Error, Result};

/// Default confidence interval I.
pub const DEFAULT_CONFIDENCE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub scheme: ScoringScheme,
    pub plan: BaggingPlan,
    /// Confidence interval I; a sample is malicious iff p < I.
    pub confidence: f64,
    pub max_len: usize,
    pub baseline_mode: BaselineMode,
    pub tail: Tail,
    pub store_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: ScoringScheme::operational(),
            plan: BaggingPlan::default(),
            confidence: DEFAULT_CONFIDENCE,
            max_len: DEFAULT_MAX_LEN,
            baseline_mode: BaselineMode::default(),
            tail: Tail::default(),
            store_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.plan.validate()?;
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfidence(self.confidence));
        }
        if self.max_len == 0 {
            return Err(Error::ZeroMaxLen);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
