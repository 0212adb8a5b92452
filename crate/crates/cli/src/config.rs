//! Config file parsing and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use omtl_core::benchmark::{PipelineConfig, SplitSpec};
use omtl_core::{Grids, MethodRegistry};
use serde::{Deserialize, Serialize};

/// Bad flags or config; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Run,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    File { path: PathBuf },
    Synth { tasks: usize, len: usize, coupling: f64, seed: u64 },
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::File { path } => path.display().to_string(),
            DataSource::Synth { tasks, len, coupling, seed } => {
                format!("synth-T{tasks}-n{len}-c{coupling}-s{seed}")
            }
        }
    }
}

/// Fully resolved settings; written next to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub out: PathBuf,
    pub methods: Vec<String>,
    pub oracle_check: bool,
    pub data: Vec<DataSource>,
    pub pipeline: PipelineConfig,
    pub grids: Grids,
}

/// Config file contents; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<CommandKind>,
    pub out: Option<PathBuf>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub oracle_check: Option<bool>,
    pub data: Option<Vec<DataSource>>,
    pub pipeline: Option<PipelineConfig>,
    pub grids: Option<Grids>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn methods(&self) -> anyhow::Result<Option<Vec<String>>> {
        match (&self.method, &self.methods) {
            (Some(_), Some(_)) => Err(usage("config sets both 'method' and 'methods'")),
            (Some(m), None) => Ok(Some(vec![m.clone()])),
            (None, m) => Ok(m.clone()),
        }
    }
}

impl RunConfig {
    /// Checks that every key is usable before any computation starts.
    pub fn validate(&self, registry: &MethodRegistry) -> anyhow::Result<()> {
        for m in &self.methods {
            registry.get(m).map_err(|e| usage(e.to_string()))?;
        }
        let p = &self.pipeline;
        SplitSpec::new(p.mu).map_err(|e| usage(e.to_string()))?;
        if p.lag == 0 {
            return Err(usage("lag must be at least 1"));
        }
        if !(p.gamma.is_finite() && p.gamma > 0.0) {
            return Err(usage(format!("gamma must be positive, got {}", p.gamma)));
        }
        if let Some(elm) = &p.elm {
            if elm.hidden == 0 {
                return Err(usage("elm hidden size must be at least 1"));
            }
        }
        let g = &self.grids;
        for (name, grid) in [("sigma", &g.sigma), ("lambda", &g.lambda), ("nu", &g.nu), ("eta0", &g.eta0)] {
            if grid.is_empty() {
                return Err(usage(format!("grid '{name}' is empty")));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(usage(format!("grid '{name}' must hold positive values")));
            }
        }
        for src in &self.data {
            if let DataSource::Synth { tasks, len, coupling, .. } = src {
                if *tasks < 2 || *len < 50 || !(0.0..=1.0).contains(coupling) {
                    return Err(usage(format!(
                        "synthetic source needs tasks >= 2, len >= 50, coupling in [0, 1]; got {}",
                        src.label()
                    )));
                }
            }
        }
        if self.oracle_check && self.methods.iter().any(|m| m != "mt-wrls") {
            return Err(usage("--oracle-check applies to mt-wrls only"));
        }
        match self.command {
            CommandKind::Run if self.methods.len() != 1 || self.data.len() != 1 => Err(usage(
                "run takes exactly one method and one dataset",
            )),
            CommandKind::Compare if self.methods.len() < 2 || self.data.len() < 2 => Err(usage(
                format!(
                    "compare needs at least 2 methods and 2 datasets, got {} and {}",
                    self.methods.len(),
                    self.data.len()
                ),
            )),
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
