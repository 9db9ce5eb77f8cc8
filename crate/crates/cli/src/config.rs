//! Flat `key = value` run configuration.
//!
//! One file drives model shape, training hyperparameters, and haze
//! synthesis ranges. Unknown keys are rejected; every parse error names
//! the line and the key.

use std::fs;
use std::path::Path;

use priornet_core::model::{PriorNetConfig, Variant};
use priornet_core::train::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: PriorNetConfig,
    pub train: TrainConfig,
    pub a_min: f32,
    pub a_max: f32,
    pub beta_min: f32,
    pub beta_max: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: PriorNetConfig::default(),
            train: TrainConfig::default(),
            a_min: 0.7,
            a_max: 1.0,
            beta_min: 0.6,
            beta_max: 1.8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|msg| CliError::format(path, msg))
    }

    /// Parse the `key = value` grammar; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut config = RunConfig::default();
        for (number, line) in text.lines().enumerate() {
            let line_no = number + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(format!("line {line_no}: expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            config
                .apply(key, value)
                .map_err(|why| format!("line {line_no}: key `{key}`: {why}"))?;
        }
        if config.a_min > config.a_max || config.beta_min > config.beta_max {
            return Err("synthesis ranges are inverted".into());
        }
        config
            .model
            .validate()
            .map_err(|e| format!("model config: {e}"))?;
        config
            .train
            .validate()
            .map_err(|e| format!("train config: {e}"))?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse `{value}`"))
        }
        match key {
            "kernel_size" => self.model.kernel_size = num(value)?,
            "channels_per_conv" => self.model.channels_per_conv = num(value)?,
            "mia_reduction" => self.model.mia_reduction = num(value)?,
            "bias_b" => self.model.bias_b = num(value)?,
            "variant" => {
                self.model.variant = Variant::from_name(value)
                    .ok_or_else(|| format!("unknown variant `{value}`"))?;
            }
            "learning_rate" => self.train.learning_rate = num(value)?,
            "batch_size" => self.train.batch_size = num(value)?,
            "iterations" => self.train.iterations = num(value)?,
            "seed" => self.train.seed = num(value)?,
            "beta1" => self.train.beta1 = num(value)?,
            "beta2" => self.train.beta2 = num(value)?,
            "epsilon" => self.train.epsilon = num(value)?,
            "perceptual_enabled" => {
                self.train.perceptual_enabled = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(format!("expected true or false, got `{other}`")),
                }
            }
            "checkpoint_every" => self.train.checkpoint_every = num(value)?,
            "a_min" => self.a_min = num(value)?,
            "a_max" => self.a_max = num(value)?,
            "beta_min" => self.beta_min = num(value)?,
            "beta_max" => self.beta_max = num(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.model.kernel_size, 5);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.a_min, 0.7);
    }

    #[test]
    fn full_grammar_round_trip() {
        let text = "\
# model
kernel_size = 3
variant = no_mia
bias_b = 0.5

seed = 77
iterations = 12
perceptual_enabled = false
a_min = 0.8
a_max = 0.9
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.model.kernel_size, 3);
        assert_eq!(cfg.model.variant.name(), "no_mia");
        assert_eq!(cfg.train.seed, 77);
        assert_eq!(cfg.train.iterations, 12);
        assert!(!cfg.train.perceptual_enabled);
        assert_eq!((cfg.a_min, cfg.a_max), (0.8, 0.9));
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = RunConfig::parse("kernel_size = 5\nbogus_key = 1\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("bogus_key"), "{err}");

        let err = RunConfig::parse("iterations = many\n").unwrap_err();
        assert!(err.contains("line 1") && err.contains("iterations"), "{err}");

        let err = RunConfig::parse("not a config line\n").unwrap_err();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn semantic_validation_runs_after_parse() {
        assert!(RunConfig::parse("kernel_size = 4\n").is_err());
        assert!(RunConfig::parse("a_min = 0.9\na_max = 0.8\n").is_err());
        assert!(RunConfig::parse("variant = cubist\n").is_err());
    }
}
