//! Gateway configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use careflow_core::bus::DEFAULT_TICK_BUDGET;
use careflow_core::connector::{PlugMode, UnplugPolicy};
use careflow_core::org::OrgSpecFile;
use careflow_core::system::SystemConfig;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
    #[error("bad listen address `{0}`")]
    Listen(String),
    #[error("org spec: {0}")]
    OrgSpec(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub org_spec: Option<PathBuf>,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tick_budget")]
    pub tick_budget: u64,
    /// Snapshot and archive mirror live here when set.
    #[serde(default)]
    pub persistence_dir: Option<PathBuf>,
    /// Process definitions loaded on a fresh start.
    #[serde(default)]
    pub processes: Vec<PathBuf>,
    #[serde(default)]
    pub connector_mode: PlugMode,
    #[serde(default)]
    pub unplug_policy: UnplugPolicy,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_tick_budget() -> u64 {
    DEFAULT_TICK_BUDGET
}

impl GatewayConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.check()?;
        Ok(config)
    }

    /// Bundled demo data, no persistence.
    pub fn demo(seed: u64) -> Self {
        Self {
            dataset: careflow_core::system::demo_dataset_dir(),
            org_spec: None,
            listen: default_listen(),
            seed,
            tick_budget: DEFAULT_TICK_BUDGET,
            persistence_dir: None,
            processes: Vec::new(),
            connector_mode: PlugMode::default(),
            unplug_policy: UnplugPolicy::default(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        self.org_spec.as_mut().map(fix);
        self.persistence_dir.as_mut().map(fix);
        self.processes.iter_mut().for_each(fix);
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let paths = std::iter::once(&self.dataset)
            .chain(self.org_spec.iter())
            .chain(self.persistence_dir.iter())
            .chain(self.processes.iter());
        for p in paths {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        self.listen_addr()?;
        Ok(())
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen.parse().map_err(|_| ConfigError::Listen(self.listen.clone()))
    }

    pub fn system_config(&self) -> Result<SystemConfig, ConfigError> {
        let mut config = SystemConfig::demo(self.seed);
        config.dataset = self.dataset.clone();
        config.tick_budget = self.tick_budget;
        config.connector.mode = self.connector_mode;
        config.connector.unplug_policy = self.unplug_policy;
        config.archive_dir = self.persistence_dir.as_ref().map(|d| d.join("archive"));
        if let Some(path) = &self.org_spec {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::OrgSpec(format!("{}: {e}", path.display())))?;
            config.org_spec = OrgSpecFile::parse(&text).map_err(|e| ConfigError::OrgSpec(e.to_string()))?;
        }
        Ok(config)
    }

    pub fn snapshot_path(&self) -> Option<PathBuf> {
        self.persistence_dir.as_ref().map(|d| d.join("gateway.snapshot.json"))
    }
}
