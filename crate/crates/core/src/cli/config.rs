//! Experiment configuration file.
//!
//! Every section is optional and falls back to its defaults. Relative paths
//! resolve against the directory holding the config file. Keys can be
//! overridden from the command line with `--set section.key=value`, where
//! the value is parsed as JSON when possible and taken as a string
//! otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::augment::AugmentConfig;
use crate::dataset::{SplitConfig, TaskKind};
use crate::imageops::PreprocessConfig;
use crate::modelkit::{BackboneName, BackboneSpec, ModelSpec, WeightsOrigin, DEFAULT_HIDDEN_WIDTHS};
use crate::trainer::{OptimizerConfig, OptimizerKind, Phase, PhaseConfig, TrainConfig};

pub const CACHE_ENV: &str = "RETINA_PIPELINE_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub name: BackboneName,
    pub input_size: usize,
}

impl Default for BackboneSection {
    fn default() -> Self {
        Self { name: BackboneName::Toy, input_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: PathBuf,
    pub image_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Preprocessed-image cache. `RETINA_PIPELINE_CACHE` wins over this;
    /// without either, `<output_dir>/cache` is used.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub config: PreprocessConfig,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { enabled: false, config: PreprocessConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Overrides the phase's learning rate.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub reinit_backbone: bool,
    /// Checkpoint sidecar to start from instead of fresh weights.
    pub resume_from: Option<PathBuf>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 50,
            patience: 1,
            learning_rate: None,
            momentum: 0.0,
            reinit_backbone: false,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub hidden_widths: Vec<usize>,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self { hidden_widths: DEFAULT_HIDDEN_WIDTHS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub backbone: BackboneSection,
    pub phase: Phase,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub paths: PathsSection,
    pub split: SplitConfig,
    pub preprocess: PreprocessSection,
    pub augment: AugmentConfig,
    pub trainer: TrainerSection,
    pub head: HeadSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Binary,
            backbone: BackboneSection::default(),
            phase: Phase::One,
            optimizer: OptimizerKind::Adam,
            seed: 42,
            paths: PathsSection::default(),
            split: SplitConfig::default(),
            preprocess: PreprocessSection::default(),
            augment: AugmentConfig::default(),
            trainer: TrainerSection::default(),
            head: HeadSection::default(),
        }
    }
}

/// Sets `dotted.key` in a JSON object, creating intermediate objects.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("empty key segment in `{key}`")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Reads a config file, applies overrides, resolves relative paths and
    /// validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.manifest, &mut cfg.paths.image_dir, &mut cfg.paths.output_dir] {
            resolve(base, p);
        }
        if let Some(p) = cfg.paths.cache_dir.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = cfg.trainer.resume_from.as_mut() {
            resolve(base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model_spec()?;
        if self.preprocess.enabled {
            self.preprocess.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if self.preprocess.config.target_size != self.backbone.input_size {
                return bad(format!(
                    "preprocess.target_size {} differs from backbone.input_size {}",
                    self.preprocess.config.target_size, self.backbone.input_size
                ));
            }
        }
        self.augment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.split.test_frac >= 0.0 && self.split.val_frac >= 0.0 && self.split.test_frac + self.split.val_frac < 1.0)
        {
            return bad("split fractions must be non-negative and leave room for training".into());
        }
        if self.paths.output_dir.as_os_str().is_empty() {
            return bad("paths.output_dir is required".into());
        }
        self.train_config()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn weights_origin(&self) -> WeightsOrigin {
        match self.backbone.name {
            BackboneName::Toy => WeightsOrigin::RandomHeUniform,
            _ if self.trainer.reinit_backbone => WeightsOrigin::RandomHeUniform,
            _ => WeightsOrigin::PretrainedImagenet,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let backbone = BackboneSpec {
            name: self.backbone.name,
            input_size: self.backbone.input_size,
            frozen: PhaseConfig::for_phase(self.phase).backbone_frozen,
            weights_origin: self.weights_origin(),
        };
        ModelSpec::new(backbone, self.task, &self.head.hidden_widths).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let mut phase = PhaseConfig::for_phase(self.phase);
        phase.init = self.weights_origin();
        phase.reinit_backbone = self.trainer.reinit_backbone;
        let mut optimizer = OptimizerConfig::new(self.optimizer, self.trainer.learning_rate.unwrap_or(phase.learning_rate));
        optimizer.momentum = self.trainer.momentum;
        Ok(TrainConfig {
            phase,
            optimizer,
            batch_size: self.trainer.batch_size,
            max_epochs: self.trainer.max_epochs,
            patience: self.trainer.patience,
            seed: self.seed,
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        self.paths.cache_dir.clone().unwrap_or_else(|| self.paths.output_dir.join("cache"))
    }
}
