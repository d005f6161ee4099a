//! The experiment file: every module's settings in one TOML document.
//!
//! Sections are `[data]`, `[model]`, `[schedule]`, `[train]` and `[eval]`,
//! each optional and filled from defaults; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{EvalConfig, TrainConfig};
use crate::schedule::ScheduleConfig;
use crate::synthdata::DataConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Dataset directory used when a command is not given one.
    pub data_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// The benchmark used by the acceptance suite.
    pub fn reference() -> Self {
        let mut cfg = Self::default();
        cfg.data.noise_std = 2.0;
        // per-frame cross-entropy: cancels the 1/C inside the loss
        cfg.train.loss.ce = cfg.model.num_classes as f64;
        cfg.train.epochs = 150;
        cfg
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            offset: e.span().map_or(0, |s| s.start as u64),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration to `<dir>/config.toml`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.schedule.build()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.model.input_dim != self.data.feature_dim {
            return Err(Error::Config(format!(
                "model.input_dim = {} but data.feature_dim = {}",
                self.model.input_dim, self.data.feature_dim
            )));
        }
        if self.model.num_classes != self.data.grammar.num_classes() {
            return Err(Error::Config(format!(
                "model.num_classes = {} but data.grammar defines {} classes",
                self.model.num_classes,
                self.data.grammar.num_classes()
            )));
        }
        if self.model.total_steps != self.schedule.steps {
            return Err(Error::Config(format!(
                "model.total_steps = {} but schedule.steps = {}",
                self.model.total_steps, self.schedule.steps
            )));
        }
        if self.eval.steps > self.schedule.steps {
            return Err(Error::Config(format!(
                "eval.steps = {} exceeds schedule.steps = {}",
                self.eval.steps, self.schedule.steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::reference();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text, "mem").unwrap(), cfg);
    }

    #[test]
    fn shipped_reference_file_matches() {
        let text = include_str!("../configs/reference.toml");
        assert_eq!(ExperimentConfig::parse(text, "reference.toml").unwrap(), ExperimentConfig::reference());
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::parse("", "mem").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("[train]\nepochz = 3\n", "mem").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn cross_section_mismatch_names_keys() {
        let err = ExperimentConfig::parse("[model]\ninput_dim = 8\n", "mem").unwrap_err();
        assert!(err.to_string().contains("model.input_dim"), "{err}");
    }

    #[test]
    fn invalid_grammar_names_the_key() {
        let text = "[data]\nmin_length = 20\nmax_length = 30\n";
        let err = ExperimentConfig::parse(text, "mem").unwrap_err();
        assert!(err.to_string().contains("grammar.durations"), "{err}");
    }
}
