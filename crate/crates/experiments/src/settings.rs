//! The full run configuration: model, preprocessing, optimisation and seeds.

use std::collections::HashSet;

use clue_core::config::{parse_assignments, parse_list, parse_num};
use clue_core::{ModelConfig, PrepConfig};
use clue_tensor::optim::TrainConfig;

use crate::error::{ExperimentError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// fraction of each class used for training
    pub train_frac: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let adam = TrainConfig::default();
        TrainSettings {
            epochs: adam.epochs,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            train_frac: 0.8,
        }
    }
}

impl TrainSettings {
    pub fn optimizer(&self, seed: u64, class_weights: &[f64]) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
            class_weights: class_weights.to_vec(),
        }
    }
}

/// Everything that determines the outputs of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub prep: PrepConfig,
    pub train: TrainSettings,
    pub seeds: Vec<u64>,
    pub noise_probs: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            prep: PrepConfig::default(),
            train: TrainSettings::default(),
            seeds: (0..10).collect(),
            noise_probs: (0..9).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    const OWN_KEYS: [&'static str; 8] = [
        "epochs",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "train_frac",
        "seeds",
        "noise_probs",
    ];

    pub fn is_key(key: &str) -> bool {
        Self::OWN_KEYS.contains(&key) || ModelConfig::KEYS.contains(&key) || PrepConfig::KEYS.contains(&key)
    }

    /// Applies one assignment; unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if self.model.set(key, v)? || self.prep.set(key, v)? {
            return Ok(());
        }
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse_num(key, v)?,
            "learning_rate" => t.learning_rate = parse_num(key, v)?,
            "beta1" => t.beta1 = parse_num(key, v)?,
            "beta2" => t.beta2 = parse_num(key, v)?,
            "epsilon" => t.epsilon = parse_num(key, v)?,
            "train_frac" => t.train_frac = parse_num(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "noise_probs" => self.noise_probs = parse_list(key, v)?,
            _ => return Err(cfg_err(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment of a `key=value` file on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for a in parse_assignments(text)? {
            self.set(&a.key, &a.value)
                .map_err(|e| cfg_err(format!("line {}: {e}", a.line)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let mut out = self.model.pairs();
        out.extend(self.prep.pairs());
        out.extend([
            ("epochs", t.epochs.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("train_frac", t.train_frac.to_string()),
            ("seeds", join(&self.seeds)),
            ("noise_probs", join(&self.noise_probs)),
        ]);
        out
    }

    /// Fully resolved configuration as `key=value` text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let t = &self.train;
        self.train.optimizer(0, &[1.0; 7]).validate()?;
        if !(t.train_frac > 0.0 && t.train_frac < 1.0) {
            return Err(cfg_err(format!("train_frac {} must lie in (0, 1)", t.train_frac)));
        }
        if self.seeds.is_empty() {
            return Err(cfg_err("seed list is empty"));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(cfg_err(format!("seed list {:?} has duplicates", self.seeds)));
        }
        if let Some(p) = self.noise_probs.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(cfg_err(format!("noise probability {p} must lie in [0, 1)")));
        }
        Ok(())
    }
}
