//! Settings resolution: command-line flags, then environment variables
//! (both handled by clap), then the config file, then built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Deserialize;
use swhid_core::client::{ClientConfig, RetryPolicy, DEFAULT_API_BASE};
use swhid_core::DEFAULT_ARCHIVE_BASE;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub api_base: Option<String>,
    pub archive_base: Option<String>,
    pub token: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
}

impl FileConfig {
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => p.to_owned(),
            None => match default_path() {
                Some(p) if p.is_file() => p,
                _ => return Ok(FileConfig::default()),
            },
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn archive_base(&self, flag: Option<String>) -> String {
        flag.or_else(|| self.archive_base.clone()).unwrap_or_else(|| DEFAULT_ARCHIVE_BASE.to_owned())
    }

    pub fn client(&self, api: Option<String>, token: Option<String>) -> ClientConfig {
        let defaults = ClientConfig::default();
        ClientConfig {
            base_api: api.or_else(|| self.api_base.clone()).unwrap_or_else(|| DEFAULT_API_BASE.to_owned()),
            auth_token: token.or_else(|| self.token.clone()).filter(|t| !t.is_empty()),
            timeout: self.timeout_secs.map_or(defaults.timeout, Duration::from_secs),
            retry: RetryPolicy {
                max_attempts: self.max_attempts.unwrap_or(defaults.retry.max_attempts),
                ..defaults.retry
            },
        }
    }
}

fn default_path() -> Option<PathBuf> {
    let base = std::env::var_os("XDG_CONFIG_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))?;
    Some(base.join("swhid").join("config.toml"))
}
