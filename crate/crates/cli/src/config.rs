//! Run configuration: one JSON document with task, model, training, and data
//! sections. Unknown keys are rejected; command-line flags override file
//! values, and the `LOFI_SEED` environment variable overrides the config
//! seeds (flag > env > file > default). Every run writes the resolved
//! configuration next to its outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lofi_core::model::{LofiConfig, TrainConfig};
use lofi_core::ops::PhantomKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Denoise,
    Ldct,
    Ks,
    Inpaint,
    Radio,
    TransposeToy,
}

impl Task {
    pub fn default_phantom(self) -> PhantomKind {
        match self {
            Task::Denoise | Task::Inpaint | Task::Radio | Task::TransposeToy => {
                PhantomKind::Texture
            }
            Task::Ldct => PhantomKind::Ellipses,
            Task::Ks => PhantomKind::Blobs,
        }
    }
}

fn default_count() -> usize {
    16
}
fn default_resolution() -> usize {
    128
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Existing dataset directory (written by `simulate`); when set, the
    /// generator settings below are ignored by `train`.
    pub manifest: Option<PathBuf>,
    pub count: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Phantom family override; each task has a natural default.
    pub phantom: Option<PhantomKind>,
    /// Additive noise sigma (denoise default 0.15; inpaint default 0).
    pub sigma: Option<f64>,
    /// Measurement SNR in dB (ldct / radio default 30).
    pub snr_db: Option<f64>,
    /// Projection count for ldct.
    pub angles: usize,
    /// Masked-pixel fraction for inpaint.
    pub mask_fraction: f64,
    /// Track count for the synthetic uv coverage.
    pub uv_tracks: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            count: default_count(),
            resolution: default_resolution(),
            seed: 0,
            phantom: None,
            sigma: None,
            snr_db: None,
            angles: 180,
            mask_fraction: 0.3,
            uv_tracks: 6,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub model: LofiConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Denoise,
            model: LofiConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            output: PathBuf::from("runs/out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Apply the seed override chain: flag > LOFI_SEED > file value.
    pub fn apply_seed_overrides(&mut self, flag: Option<u64>) -> Result<()> {
        let env = match std::env::var("LOFI_SEED") {
            Ok(v) => Some(v.parse::<u64>().context("LOFI_SEED must be an integer")?),
            Err(_) => None,
        };
        if let Some(s) = flag.or(env) {
            self.train.seed = s;
            self.data.seed = s;
        }
        Ok(())
    }

    /// Write the fully resolved configuration beside the run outputs.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("resolved.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.task == Task::TransposeToy && !self.model.inr_enabled {
            anyhow::bail!("the transpose-toy task requires model.inr_enabled = true");
        }
        Ok(())
    }
}
