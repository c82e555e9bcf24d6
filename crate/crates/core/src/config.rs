//! Deployment configuration: a TOML file, then `PANGEA_*` environment
//! variables on top.
//!
//! ```toml
//! data_dir = "/var/lib/pangea"
//! bind = "0.0.0.0:8080"
//! waveform_bins = 1024
//! lease_minutes = 60
//! workers = 2
//!
//! [asr]
//! mode = "http"
//! endpoint = "https://asr.example.org/v1/recognize"
//! token = "..."
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AutomaticTranscriber, HttpTranscriber, MockTranscriber, DEFAULT_MAX_IN_FLIGHT};
use crate::metrics::{EvalParams, DEFAULT_SUCCESS_THRESHOLD_M};
use crate::server::jobs::DEFAULT_WORKERS;
use crate::server::{RetryPolicy, ServiceSettings};
use crate::store::DEFAULT_LEASE_MINUTES;
use crate::waveform::DEFAULT_BINS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{var}: cannot parse {value:?}")]
    Env { var: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrMode {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrConfig {
    pub mode: AsrMode,
    pub endpoint: Option<String>,
    pub token: Option<String>,
    /// Mock mode: directory of `{sha256}.jsonl` / `default.jsonl` word
    /// fixtures. Defaults to `{data_dir}/asr-fixtures`.
    pub fixtures: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for AsrConfig {
    fn default() -> Self {
        AsrConfig {
            mode: AsrMode::Mock,
            endpoint: None,
            token: None,
            fixtures: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: String,
    pub asr: AsrConfig,
    pub waveform_bins: usize,
    pub lease_minutes: u32,
    /// Alignment worker threads.
    pub workers: usize,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub success_threshold_m: f64,
    pub auto_follower_tasks: bool,
}

impl Default for Config {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Config {
            data_dir: PathBuf::from("pangea-data"),
            bind: "127.0.0.1:8080".into(),
            asr: AsrConfig::default(),
            waveform_bins: DEFAULT_BINS,
            lease_minutes: DEFAULT_LEASE_MINUTES,
            workers: DEFAULT_WORKERS,
            max_retries: retry.max_retries,
            retry_backoff_ms: retry.base_backoff.as_millis() as u64,
            success_threshold_m: DEFAULT_SUCCESS_THRESHOLD_M,
            auto_follower_tasks: true,
        }
    }
}

fn parse_var<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env {
        var: var.to_owned(),
        value: value.to_owned(),
    })
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads `path` if given, applies the process environment and
    /// validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_owned(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Config::default(),
        };
        config.apply_env(std::env::vars())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `PANGEA_*` overrides from `vars`; other variables are ignored.
    pub fn apply_env(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<(), ConfigError> {
        for (var, value) in vars {
            match var.as_str() {
                "PANGEA_DATA_DIR" => self.data_dir = PathBuf::from(value),
                "PANGEA_BIND" => self.bind = value,
                "PANGEA_ASR_MODE" => {
                    self.asr.mode = match value.as_str() {
                        "mock" => AsrMode::Mock,
                        "http" => AsrMode::Http,
                        _ => return Err(ConfigError::Env { var, value }),
                    }
                }
                "PANGEA_ASR_ENDPOINT" => self.asr.endpoint = Some(value),
                "PANGEA_ASR_TOKEN" => self.asr.token = Some(value),
                "PANGEA_ASR_FIXTURES" => self.asr.fixtures = Some(PathBuf::from(value)),
                "PANGEA_ASR_MAX_IN_FLIGHT" => self.asr.max_in_flight = parse_var(&var, &value)?,
                "PANGEA_WAVEFORM_BINS" => self.waveform_bins = parse_var(&var, &value)?,
                "PANGEA_LEASE_MINUTES" => self.lease_minutes = parse_var(&var, &value)?,
                "PANGEA_WORKERS" => self.workers = parse_var(&var, &value)?,
                "PANGEA_MAX_RETRIES" => self.max_retries = parse_var(&var, &value)?,
                "PANGEA_RETRY_BACKOFF_MS" => self.retry_backoff_ms = parse_var(&var, &value)?,
                "PANGEA_SUCCESS_THRESHOLD_M" => self.success_threshold_m = parse_var(&var, &value)?,
                "PANGEA_AUTO_FOLLOWER_TASKS" => self.auto_follower_tasks = parse_var(&var, &value)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.waveform_bins == 0 {
            return bad("waveform_bins must be at least 1");
        }
        if self.lease_minutes == 0 {
            return bad("lease_minutes must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.asr.max_in_flight == 0 {
            return bad("asr.max_in_flight must be at least 1");
        }
        if !(self.success_threshold_m.is_finite() && self.success_threshold_m > 0.0) {
            return bad("success_threshold_m must be positive");
        }
        if self.asr.mode == AsrMode::Http && self.asr.endpoint.is_none() {
            return bad("asr.mode = \"http\" requires asr.endpoint");
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_backoff: Duration::from_millis(self.retry_backoff_ms),
        }
    }

    pub fn service_settings(&self) -> ServiceSettings {
        ServiceSettings {
            waveform_bins: self.waveform_bins,
            lease_minutes: self.lease_minutes,
            eval: EvalParams {
                success_threshold_m: self.success_threshold_m,
            },
            auto_follower_tasks: self.auto_follower_tasks,
        }
    }

    pub fn transcriber(&self) -> Arc<dyn AutomaticTranscriber> {
        match self.asr.mode {
            AsrMode::Mock => Arc::new(MockTranscriber::fixture_dir(
                self.asr
                    .fixtures
                    .clone()
                    .unwrap_or_else(|| self.data_dir.join("asr-fixtures")),
            )),
            AsrMode::Http => Arc::new(HttpTranscriber::new(
                self.asr.endpoint.clone().unwrap_or_default(),
                self.asr.token.clone(),
                self.asr.max_in_flight,
            )),
        }
    }
}
