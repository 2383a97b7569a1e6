use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assurance::Tariff;
use crate::netsim::{
    ChannelConfig, SwitchConfig, DEFAULT_BUFFER_X, DEFAULT_LOW_TRAFFIC_THRESHOLD,
    DEFAULT_RESTORATIONS_N,
};
use crate::reconciler::TimeoutPolicy;

/// One invalid configuration value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON for a run: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldProblem>),
}

impl ConfigError {
    pub fn problems(&self) -> &[FieldProblem] {
        match self {
            ConfigError::Invalid(p) => p,
            _ => &[],
        }
    }
}

/// Everything a run depends on. Identical configs give identical archives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub call_count: usize,
    pub window_seconds: u64,
    pub channel: ChannelConfig,
    pub buffer_x: usize,
    pub restorations_n: usize,
    pub low_traffic_threshold: f64,
    pub tariff: Tariff,
    pub timeout_policy: TimeoutPolicy,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            call_count: 1000,
            window_seconds: 600,
            channel: ChannelConfig::default(),
            buffer_x: DEFAULT_BUFFER_X,
            restorations_n: DEFAULT_RESTORATIONS_N,
            low_traffic_threshold: DEFAULT_LOW_TRAFFIC_THRESHOLD,
            tariff: Tariff::default(),
            timeout_policy: TimeoutPolicy::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn switch(&self) -> SwitchConfig {
        SwitchConfig {
            buffer_x: self.buffer_x,
            restorations_n: self.restorations_n,
            low_traffic_threshold: self.low_traffic_threshold,
        }
    }

    pub fn window_ms(&self) -> u64 {
        self.window_seconds.saturating_mul(1000)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let mut bad = |field: &str, message: String| {
            problems.push(FieldProblem {
                field: field.to_owned(),
                message,
            })
        };
        if self.window_seconds == 0 {
            bad("window_seconds", "must be positive".into());
        } else if self.call_count as u64 > self.window_ms() {
            bad(
                "call_count",
                format!(
                    "{} calls need distinct start milliseconds; the window has {}",
                    self.call_count,
                    self.window_ms()
                ),
            );
        }
        for (field, message) in self.channel.problems() {
            bad(&format!("channel.{field}"), message);
        }
        if self.buffer_x == 0 {
            bad("buffer_x", "must be at least 1".into());
        }
        if self.restorations_n == 0 {
            bad("restorations_n", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.low_traffic_threshold) {
            bad("low_traffic_threshold", "must lie in [0, 1]".into());
        }
        if self.tariff.setup_fee.is_negative() {
            bad("tariff.setup_fee", "must not be negative".into());
        }
        if self.tariff.rate_per_second.is_negative() {
            bad("tariff.rate_per_second", "must not be negative".into());
        }
        if self.timeout_policy.wait_limit_ms == 0 {
            bad("timeout_policy.wait_limit_ms", "must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}
