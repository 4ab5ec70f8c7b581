//! Run configuration from `key=value` text. Blank lines and `#` comments
//! are ignored; unknown keys are errors.
//!
//! Keys and defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `sampler.steps` | 100 |
//! | `sampler.step_size` | 1 / `sampler.steps` |
//! | `sampler.anneal` | 5.0 |
//! | `sampler.seed` | 0 |
//! | `train.lr` | 1e-3 |
//! | `train.batch_size` | 32 |
//! | `train.max_steps` | 2000 |
//! | `train.seed` | 0 |
//! | `train.text_dropout` | 0.5 |
//! | `train.grad_clip` | 0 (off) |
//! | `net.layers` | 3 |
//! | `net.hidden` | 64 |
//! | `net.fourier` | 8 |
//! | `net.time_freq` | 8 |
//! | `net.attn_dim` | 64 |
//! | `net.buckets` | 1024 |
//! | `path.sigma_l` | 0.0 |
//! | `path.lambda_l` | 1.0 |
//! | `path.time` | `uniform` (or `beta:A,B`) |
//! | `match.ltol` | 0.3 |
//! | `match.stol` | 0.5 |
//! | `match.angle_tol` | 10.0 |
//! | `coverage.struct_threshold` | 1.0 |
//! | `coverage.comp_threshold` | 0.1 |

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crysflow_core::flow::TimeDistribution;
use crysflow_core::metrics::{CoverageConfig, MatchConfig};
use crysflow_core::train::TrainConfig;
use crysflow_core::{NetworkConfig, SamplerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {message}")]
    TypeError { line: usize, key: String, message: String },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("cannot read config: {0}")]
    Io(String),
}

/// Lattice-path settings that are not derived from training statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub sigma_l: f64,
    pub lambda_l: f64,
    pub time: TimeDistribution,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self { sigma_l: 0.0, lambda_l: 1.0, time: TimeDistribution::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub net: NetworkConfig,
    pub path: PathSettings,
    pub matching: MatchConfig,
    pub coverage: CoverageConfig,
}


fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::TypeError { line, key: key.into(), message: e.to_string() })
}

fn time_distribution(line: usize, key: &str, v: &str) -> Result<TimeDistribution, ConfigError> {
    let bad = |m: &str| ConfigError::TypeError { line, key: key.into(), message: m.into() };
    if v == "uniform" {
        return Ok(TimeDistribution::Uniform);
    }
    let params = v.strip_prefix("beta:").ok_or_else(|| bad("expected `uniform` or `beta:A,B`"))?;
    let (a, b) = params.split_once(',').ok_or_else(|| bad("expected `beta:A,B`"))?;
    let (a, b): (f64, f64) = (value(line, key, a.trim())?, value(line, key, b.trim())?);
    if !(a > 0.0 && b > 0.0) {
        return Err(bad("beta parameters must be positive"));
    }
    Ok(TimeDistribution::Beta { a, b })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        let mut step_size_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, v) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, v) = (key.trim(), v.trim());
            match key {
                "sampler.steps" => c.sampler.n_steps = value(line, key, v)?,
                "sampler.step_size" => {
                    c.sampler.step_size = value(line, key, v)?;
                    step_size_set = true;
                }
                "sampler.anneal" => c.sampler.anneal_gamma = value(line, key, v)?,
                "sampler.seed" => c.sampler.seed = value(line, key, v)?,
                "train.lr" => c.train.lr = value(line, key, v)?,
                "train.batch_size" => c.train.batch_size = value(line, key, v)?,
                "train.max_steps" => c.train.max_steps = value(line, key, v)?,
                "train.seed" => c.train.seed = value(line, key, v)?,
                "train.text_dropout" => c.train.text_dropout = value(line, key, v)?,
                "train.grad_clip" => c.train.grad_clip = value(line, key, v)?,
                "net.layers" => c.net.n_layers = value(line, key, v)?,
                "net.hidden" => c.net.hidden_dim = value(line, key, v)?,
                "net.fourier" => c.net.n_fourier_freq = value(line, key, v)?,
                "net.time_freq" => c.net.n_time_freq = value(line, key, v)?,
                "net.attn_dim" => c.net.attn_dim = value(line, key, v)?,
                "net.buckets" => c.net.n_buckets = value(line, key, v)?,
                "path.sigma_l" => c.path.sigma_l = value(line, key, v)?,
                "path.lambda_l" => c.path.lambda_l = value(line, key, v)?,
                "path.time" => c.path.time = time_distribution(line, key, v)?,
                "match.ltol" => c.matching.ltol = value(line, key, v)?,
                "match.stol" => c.matching.stol = value(line, key, v)?,
                "match.angle_tol" => c.matching.angle_tol = value(line, key, v)?,
                "coverage.struct_threshold" => c.coverage.struct_threshold = value(line, key, v)?,
                "coverage.comp_threshold" => c.coverage.comp_threshold = value(line, key, v)?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.into() }),
            }
        }
        if !step_size_set && c.sampler.n_steps > 0 {
            c.sampler.step_size = 1.0 / c.sampler.n_steps as f64;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_means_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.sampler.n_steps, 100);
        assert_eq!(c.sampler.step_size, 0.01);
        assert_eq!(c.sampler.anneal_gamma, 5.0);
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(c, RunConfig::parse("# only a comment\n\n").unwrap());
    }

    #[test]
    fn single_override() {
        let c = RunConfig::parse("sampler.steps=50").unwrap();
        let d = RunConfig::default();
        assert_eq!(c.sampler.n_steps, 50);
        assert_eq!(c.sampler.step_size, 0.02);
        assert!(c.sampler.validate().is_ok());
        assert_eq!((c.train, c.net, c.matching), (d.train, d.net, d.matching));
        assert_eq!(c.sampler.anneal_gamma, d.sampler.anneal_gamma);
    }

    #[test]
    fn errors() {
        assert_eq!(RunConfig::parse("sampler.stepz=50"), Err(ConfigError::UnknownKey { line: 1, key: "sampler.stepz".into() }));
        assert!(matches!(RunConfig::parse("\ntrain.lr=fast"), Err(ConfigError::TypeError { line: 2, .. })));
        assert_eq!(RunConfig::parse("train.lr"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(RunConfig::parse("path.time=beta:1,-2"), Err(ConfigError::TypeError { .. })));
        assert_eq!(RunConfig::parse("path.time = beta:2, 1 # skewed").unwrap().path.time, TimeDistribution::Beta { a: 2.0, b: 1.0 });
    }
}
