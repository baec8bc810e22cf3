//! Classifier architecture: a convolutional backbone, a flatten stage and a
//! dense head whose output matches the task.
//!
//! The named transfer-learning backbones (ResNet50, VGG16/19, Inception-V3,
//! InceptionResNetV2) are described by their feature-map shapes; their
//! pretrained weights come in through a [`FeatureExtractor`] adapter. The
//! [`BackboneName::Toy`] backbone is a small native network honouring the
//! same contract and is what runs offline.

mod checkpoint;
mod classifier;
mod init;
mod layers;
mod tensor;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TaskKind;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, TensorArchive, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use classifier::{sigmoid, softmax, Classifier, FeatureExtractor, NamedTensor, Parameters, StepOutput};
pub use init::{he_uniform_init, he_uniform_limit};
pub use layers::{Layer, Param, Sequential};
pub use tensor::{images_to_tensor, Tensor};


#[derive(Debug, Error)]
pub enum ModelError {
    #[error("backbone {name} does not support {input_size}px inputs")]
    UnsupportedCombination { name: BackboneName, input_size: usize },
    #[error("toy backbone needs inputs of at least 16px, got {0}")]
    InputTooSmall(usize),
    #[error("fan_in must be positive")]
    InvalidFanIn,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid head: {0}")]
    InvalidHead(String),
    #[error("inconsistent model spec: {0}")]
    InvalidSpec(String),
    #[error("no weights backend available for {0}; supply a feature extractor adapter")]
    BackboneUnavailable(BackboneName),
    #[error("{0}")]
    Unsupported(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneName {
    Resnet50,
    Vgg16,
    Vgg19,
    InceptionV3,
    InceptionResnetV2,
    Toy,
}

impl BackboneName {
    pub const NAMED: [BackboneName; 5] = [
        BackboneName::Resnet50,
        BackboneName::Vgg16,
        BackboneName::Vgg19,
        BackboneName::InceptionV3,
        BackboneName::InceptionResnetV2,
    ];
}

impl fmt::Display for BackboneName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneName::Resnet50 => "resnet50",
            BackboneName::Vgg16 => "vgg16",
            BackboneName::Vgg19 => "vgg19",
            BackboneName::InceptionV3 => "inception_v3",
            BackboneName::InceptionResnetV2 => "inception_resnet_v2",
            BackboneName::Toy => "toy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsOrigin {
    PretrainedImagenet,
    RandomHeUniform,
}

/// Post-convolution feature map as `(height, width, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FeatureShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    /// Width of the flattened feature vector.
    pub fn flat_len(&self) -> usize {
        self.height * self.width * self.channels
    }
}

pub const TOY_CHANNELS: [usize; 3] = [8, 16, 32];

/// Feature-map shape of a backbone at a given square input size.
///
/// | backbone | input | shape |
/// |---|---|---|
/// | ResNet50 | 512 / 224 | 16×16×2048 / 7×7×2048 |
/// | VGG16, VGG19 | 512 / 224 | 16×16×512 / 7×7×512 |
/// | Inception-V3 | 512 / 299 | 14×14×2048 / 8×8×2048 |
/// | InceptionResNetV2 | 299 | 8×8×1536 |
/// | Toy | ≥ 16 | ⌊s/8⌋×⌊s/8⌋×32 |
pub fn feature_shape(name: BackboneName, input_size: usize) -> Result<FeatureShape, ModelError> {
    use BackboneName::*;
    let shape = match (name, input_size) {
        (Resnet50, 512) => FeatureShape::new(16, 16, 2048),
        (Resnet50, 224) => FeatureShape::new(7, 7, 2048),
        (Vgg16 | Vgg19, 512) => FeatureShape::new(16, 16, 512),
        (Vgg16 | Vgg19, 224) => FeatureShape::new(7, 7, 512),
        (InceptionV3, 512) => FeatureShape::new(14, 14, 2048),
        (InceptionV3, 299) => FeatureShape::new(8, 8, 2048),
        (InceptionResnetV2, 299) => FeatureShape::new(8, 8, 1536),
        (Toy, s) if s >= 16 => {
            let side = s / 2 / 2 / 2;
            FeatureShape::new(side, side, TOY_CHANNELS[2])
        }
        (Toy, s) => return Err(ModelError::InputTooSmall(s)),
        _ => return Err(ModelError::UnsupportedCombination { name, input_size }),
    };
    Ok(shape)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: BackboneName,
    pub input_size: usize,
    pub frozen: bool,
    pub weights_origin: WeightsOrigin,
}

impl BackboneSpec {
    pub fn toy(input_size: usize) -> Self {
        Self { name: BackboneName::Toy, input_size, frozen: false, weights_origin: WeightsOrigin::RandomHeUniform }
    }

    pub fn feature_shape(&self) -> Result<FeatureShape, ModelError> {
        feature_shape(self.name, self.input_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub feature_count: usize,
    /// Hidden dense widths, each followed by a ReLU.
    pub hidden_widths: Vec<usize>,
    pub output_nodes: usize,
    pub output_activation: OutputActivation,
}

pub const DEFAULT_HIDDEN_WIDTHS: [usize; 2] = [256, 64];

/// Head for a task: one sigmoid node for binary, a softmax over 3 or 5 nodes
/// otherwise.
pub fn build_head(task: TaskKind, feature_count: usize, hidden_widths: &[usize]) -> Result<HeadSpec, ModelError> {
    if feature_count == 0 {
        return Err(ModelError::InvalidHead("feature_count must be positive".into()));
    }
    if hidden_widths.contains(&0) {
        return Err(ModelError::InvalidHead("hidden widths must be positive".into()));
    }
    let (output_nodes, output_activation) = match task {
        TaskKind::Binary => (1, OutputActivation::Sigmoid),
        TaskKind::Three => (3, OutputActivation::Softmax),
        TaskKind::Five => (5, OutputActivation::Softmax),
    };
    Ok(HeadSpec { feature_count, hidden_widths: hidden_widths.to_vec(), output_nodes, output_activation })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneSpec,
    pub head: HeadSpec,
    pub task: TaskKind,
}

impl ModelSpec {
    pub fn new(backbone: BackboneSpec, task: TaskKind, hidden_widths: &[usize]) -> Result<Self, ModelError> {
        let features = backbone.feature_shape()?.flat_len();
        let head = build_head(task, features, hidden_widths)?;
        let spec = Self { backbone, head, task };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let shape = self.backbone.feature_shape()?;
        if self.head.feature_count != shape.flat_len() {
            return Err(ModelError::InvalidSpec(format!(
                "head takes {} features but {} produces {}",
                self.head.feature_count,
                self.backbone.name,
                shape.flat_len()
            )));
        }
        let expected = build_head(self.task, self.head.feature_count, &self.head.hidden_widths)?;
        if (expected.output_nodes, expected.output_activation) != (self.head.output_nodes, self.head.output_activation) {
            return Err(ModelError::InvalidSpec(format!(
                "{} task needs {} {:?} output nodes",
                self.task, expected.output_nodes, expected.output_activation
            )));
        }
        if self.backbone.name == BackboneName::Toy && self.backbone.weights_origin == WeightsOrigin::PretrainedImagenet {
            return Err(ModelError::InvalidSpec("toy backbone has no pretrained weights".into()));
        }
        Ok(())
    }
}
