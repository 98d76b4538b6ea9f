//! Run configuration: one JSON file with a required `version`, overridable from flags.

use std::path::{Path, PathBuf};

use clap::Args;
use hsd_core::complex::io::load_mesh;
use hsd_core::complex::ShapeSpec;
use hsd_core::model::{ModelConfig, Variant};
use hsd_core::tasks::TaskSpec;
use hsd_core::train::{config_for_task, TrainConfig};
use hsd_core::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub task: TaskSpec,
    /// Generator string such as `torus:12,12`, or a mesh path (`.off`, `.node`/`.ele`).
    pub complex: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Dataset directory written by `gen-data`; regenerated from `task` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(task: TaskSpec, complex: impl Into<String>) -> Self {
        Self {
            version: CONFIG_VERSION,
            task,
            complex: complex.into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            output: default_output(),
            data: None,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => CliError::Validation(format!("config: {e}")),
            _ => CliError::Usage(format!("config: {e}")),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Validation(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.train.validate()?;
        if self.task.samples() == 0 {
            return Err(CliError::Validation("task needs at least one sample".into()));
        }
        Ok(())
    }

    /// Model configuration with degrees fixed by the task.
    pub fn model_config(&self) -> ModelConfig {
        config_for_task(self.model.clone(), self.task.kind())
    }

    /// SHA-256 of the canonical JSON of everything except `output`, so that the same run
    /// written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output");
        }
        hex(&Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Flags that override config values.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Model initialization and shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset generation seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub complex: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Retained Hodge modes m_k.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Ambient grid resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Dataset directory to load instead of regenerating.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> CliResult<RunConfig> {
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(s) = self.data_seed {
            cfg.task = cfg.task.with_seed(s);
        }
        if let Some(n) = self.samples {
            cfg.task = cfg.task.with_samples(n);
        }
        if let Some(c) = &self.complex {
            cfg.complex = c.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if let Some(b) = self.batch {
            cfg.train.batch = b;
        }
        if let Some(v) = self.variant {
            cfg.model.variant = v;
        }
        if let Some(m) = self.modes {
            cfg.model.modes = m;
        }
        if let Some(g) = self.grid {
            cfg.model.grid_resolution = g;
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loads a complex from a generator string or a mesh path. Generators win when both parse.
pub fn load_complex(source: &str) -> CliResult<(Complex64, Option<ShapeSpec>)> {
    match source.parse::<ShapeSpec>() {
        Ok(shape) => Ok((Complex64::generate(&shape)?, Some(shape))),
        Err(parse_err) => {
            let path = Path::new(source);
            if path.exists() || path.with_extension("node").exists() {
                Ok((load_mesh(path)?, None))
            } else {
                Err(CliError::Usage(format!("'{source}' is neither a generator nor a mesh file ({parse_err})")))
            }
        }
    }
}
