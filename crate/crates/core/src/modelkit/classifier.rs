use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::init::{he_uniform_init, tensor_seed};
use super::layers::{Layer, Param, Sequential};
use super::tensor::Tensor;
use super::{BackboneName, BackboneSpec, ModelError, ModelSpec, OutputActivation, TOY_CHANNELS};
use crate::metrics::{argmax_decision, binary_decision, Scores, BINARY_THRESHOLD};

/// Adapter for externally provided backbones (e.g. pretrained ImageNet
/// weights run by another runtime). Adapters are inference-only, so models
/// built on them train with a frozen backbone.
pub trait FeatureExtractor: Send + Sync {
    fn spec(&self) -> &BackboneSpec;
    /// Maps a `[batch, 3, s, s]` tensor to `[batch, ...]` features whose
    /// per-sample length equals the spec's flattened feature shape.
    fn extract(&self, batch: &Tensor) -> Result<Tensor, ModelError>;
}

#[derive(Clone)]
enum Backbone {
    Native(Sequential),
    External(Arc<dyn FeatureExtractor>),
}

impl fmt::Debug for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backbone::Native(s) => f.debug_tuple("Native").field(&s.layers.len()).finish(),
            Backbone::External(e) => f.debug_tuple("External").field(&e.spec().name).finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Snapshot of every parameter tensor of a model, in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Parameters {
    pub tensors: Vec<NamedTensor>,
}

impl Parameters {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Decided labels for each sample.
    pub predictions: Vec<usize>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Backbone + flatten + dense head.
#[derive(Debug, Clone)]
pub struct Classifier {
    spec: ModelSpec,
    seed: u64,
    backbone: Backbone,
    head: Sequential,
}

fn dense(name: &str, fan_in: usize, fan_out: usize, seed: u64) -> Result<Layer, ModelError> {
    Ok(Layer::Dense {
        weight: Param::new(format!("{name}.weight"), he_uniform_init(fan_in, &[fan_out, fan_in], seed)?),
        bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![fan_out])),
    })
}

fn conv(name: &str, c_in: usize, c_out: usize, seed: u64) -> Result<Layer, ModelError> {
    Ok(Layer::Conv3x3 {
        weight: Param::new(format!("{name}.weight"), he_uniform_init(c_in * 9, &[c_out, c_in, 3, 3], seed)?),
        bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![c_out])),
    })
}

/// Three conv → ReLU → max-pool stages with He-uniform weights.
pub(crate) fn toy_layers(seed: u64) -> Result<Sequential, ModelError> {
    let mut layers = Vec::new();
    let mut c_in = 3;
    for (i, &c_out) in TOY_CHANNELS.iter().enumerate() {
        layers.push(conv(&format!("backbone.conv{}", i + 1), c_in, c_out, tensor_seed(seed, i))?);
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2);
        c_in = c_out;
    }
    Ok(Sequential::new(layers))
}

fn head_layers(spec: &ModelSpec, seed: u64) -> Result<Sequential, ModelError> {
    let mut layers = vec![Layer::Flatten];
    let mut fan_in = spec.head.feature_count;
    for (i, &width) in spec.head.hidden_widths.iter().enumerate() {
        layers.push(dense(&format!("head.dense{}", i + 1), fan_in, width, tensor_seed(seed, 100 + i))?);
        layers.push(Layer::Relu);
        fan_in = width;
    }
    layers.push(dense("head.output", fan_in, spec.head.output_nodes, tensor_seed(seed, 199))?);
    Ok(Sequential::new(layers))
}

impl Classifier {
    /// Builds a model with a native backbone. Only [`BackboneName::Toy`] is
    /// native; named backbones need [`Classifier::with_extractor`].
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        if spec.backbone.name != BackboneName::Toy {
            return Err(ModelError::BackboneUnavailable(spec.backbone.name));
        }
        let head = head_layers(&spec, seed)?;
        let mut model = Self { backbone: Backbone::Native(toy_layers(seed)?), head, spec, seed };
        model.set_backbone_frozen(model.spec.backbone.frozen)?;
        Ok(model)
    }

    pub fn with_extractor(spec: ModelSpec, extractor: Arc<dyn FeatureExtractor>, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        if extractor.spec().name != spec.backbone.name || extractor.spec().input_size != spec.backbone.input_size {
            return Err(ModelError::InvalidSpec("extractor does not match the backbone spec".into()));
        }
        if !spec.backbone.frozen {
            return Err(ModelError::Unsupported("external backbones can only be used frozen".into()));
        }
        let head = head_layers(&spec, seed)?;
        Ok(Self { backbone: Backbone::External(extractor), head, spec, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_backbone_frozen(&mut self, frozen: bool) -> Result<(), ModelError> {
        match &mut self.backbone {
            Backbone::Native(seq) => seq.params_mut().for_each(|p| p.trainable = !frozen),
            Backbone::External(_) if !frozen => {
                return Err(ModelError::Unsupported("external backbones can only be used frozen".into()))
            }
            Backbone::External(_) => {}
        }
        self.spec.backbone.frozen = frozen;
        Ok(())
    }

    /// Redraws every native backbone kernel from He-uniform with a new seed.
    pub fn reinit_backbone(&mut self, seed: u64) -> Result<(), ModelError> {
        let frozen = self.spec.backbone.frozen;
        match &mut self.backbone {
            Backbone::Native(seq) => *seq = toy_layers(seed)?,
            Backbone::External(_) => return Err(ModelError::Unsupported("cannot re-initialise an external backbone".into())),
        }
        self.set_backbone_frozen(frozen)
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        let backbone: Box<dyn Iterator<Item = &Param>> = match &self.backbone {
            Backbone::Native(seq) => Box::new(seq.params()),
            Backbone::External(_) => Box::new(std::iter::empty()),
        };
        backbone.chain(self.head.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        let backbone: Box<dyn Iterator<Item = &mut Param>> = match &mut self.backbone {
            Backbone::Native(seq) => Box::new(seq.params_mut()),
            Backbone::External(_) => Box::new(std::iter::empty()),
        };
        backbone.chain(self.head.params_mut())
    }

    pub fn backbone_params(&self) -> Vec<&Param> {
        match &self.backbone {
            Backbone::Native(seq) => seq.params().collect(),
            Backbone::External(_) => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Param::zero_grad);
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            tensors: self
                .params()
                .map(|p| NamedTensor { name: p.name.clone(), tensor: p.value.clone(), trainable: p.trainable })
                .collect(),
        }
    }

    /// Overwrites parameter values by name. Trainable flags stay as they are.
    pub fn load_parameters(&mut self, params: &Parameters) -> Result<(), ModelError> {
        let mut loaded = 0;
        for p in self.params_mut() {
            let src = params
                .get(&p.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{}`", p.name)))?;
            if src.tensor.shape() != p.value.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "tensor `{}` is {:?}, model expects {:?}",
                    p.name,
                    src.tensor.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.tensor.clone();
            loaded += 1;
        }
        if loaded != params.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "snapshot has {} tensors, model has {loaded}",
                params.tensors.len()
            )));
        }
        Ok(())
    }

    fn check_input(&self, batch: &Tensor) -> Result<(), ModelError> {
        let s = self.spec.backbone.input_size;
        match batch.shape() {
            [_, 3, h, w] if *h == s && *w == s => Ok(()),
            other => Err(ModelError::ShapeMismatch(format!("expected [batch, 3, {s}, {s}], got {other:?}"))),
        }
    }

    fn features(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        self.check_input(batch)?;
        let feats = match &self.backbone {
            Backbone::Native(seq) => seq.forward(batch)?,
            Backbone::External(e) => e.extract(batch)?,
        };
        let per_sample = feats.len() / feats.batch().max(1);
        if per_sample != self.spec.head.feature_count {
            return Err(ModelError::ShapeMismatch(format!(
                "backbone produced {per_sample} features, head expects {}",
                self.spec.head.feature_count
            )));
        }
        Ok(feats)
    }

    /// Raw output-layer values, `[batch, output_nodes]`.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        self.head.forward(&self.features(batch)?)
    }

    /// Sigmoid scores for binary heads, softmax rows otherwise.
    pub fn forward(&self, batch: &Tensor) -> Result<Scores, ModelError> {
        let logits = self.logits(batch)?;
        Ok(self.activate(&logits))
    }

    fn activate(&self, logits: &Tensor) -> Scores {
        let nodes = self.spec.head.output_nodes;
        match self.spec.head.output_activation {
            OutputActivation::Sigmoid => Scores::Binary(logits.data().iter().map(|&z| sigmoid(z)).collect()),
            OutputActivation::Softmax => Scores::Multiclass(logits.data().chunks_exact(nodes).map(softmax).collect()),
        }
    }

    /// Decided labels under the task's decision rule.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>, ModelError> {
        Ok(decide(&self.forward(batch)?))
    }

    fn loss_and_logit_grad(&self, logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), ModelError> {
        let nodes = self.spec.head.output_nodes;
        let b = logits.batch();
        if labels.len() != b {
            return Err(ModelError::ShapeMismatch(format!("{} labels for a batch of {b}", labels.len())));
        }
        let classes = if nodes == 1 { 2 } else { nodes };
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(ModelError::ShapeMismatch(format!("label {bad} outside {classes} classes")));
        }
        let scale = 1.0 / b as f64;
        let mut grad = vec![0.0; logits.len()];
        let mut loss = 0.0;
        match self.spec.head.output_activation {
            OutputActivation::Sigmoid => {
                for (i, (&z, &y)) in logits.data().iter().zip(labels).enumerate() {
                    let y = y as f64;
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    grad[i] = (sigmoid(z) - y) * scale;
                }
            }
            OutputActivation::Softmax => {
                for (i, (row, &y)) in logits.data().chunks_exact(nodes).zip(labels).enumerate() {
                    loss += log_sum_exp(row) - row[y];
                    for (c, p) in softmax(row).into_iter().enumerate() {
                        grad[i * nodes + c] = (p - f64::from(c == y)) * scale;
                    }
                }
            }
        }
        Ok((loss * scale, Tensor::new(logits.shape().to_vec(), grad)?))
    }

    /// Mean cross-entropy of the batch (binary for sigmoid heads,
    /// categorical for softmax heads).
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64, ModelError> {
        let logits = self.logits(batch)?;
        Ok(self.loss_and_logit_grad(&logits, labels)?.0)
    }

    /// Zeroes gradients, then fills them for every trainable tensor.
    pub fn compute_gradients(&mut self, batch: &Tensor, labels: &[usize]) -> Result<StepOutput, ModelError> {
        self.check_input(batch)?;
        self.zero_grad();
        let backbone_trainable = matches!(&self.backbone, Backbone::Native(seq) if seq.any_trainable());
        let (feats, backbone_caches) = match &self.backbone {
            Backbone::Native(seq) if backbone_trainable => {
                let (f, c) = seq.forward_cached(batch)?;
                (f, Some(c))
            }
            _ => (self.features(batch)?, None),
        };
        let (logits, head_caches) = self.head.forward_cached(&feats)?;
        let (loss, grad) = self.loss_and_logit_grad(&logits, labels)?;
        let predictions = decide(&self.activate(&logits));
        let feat_grad = self.head.backward(&head_caches, grad, backbone_trainable);
        if let (Backbone::Native(seq), Some(caches), Some(g)) = (&mut self.backbone, backbone_caches, feat_grad) {
            let g = g.reshape(feats.shape().to_vec());
            seq.backward(&caches, g, false);
        }
        Ok(StepOutput { loss, predictions })
    }
}

fn decide(scores: &Scores) -> Vec<usize> {
    match scores {
        Scores::Binary(s) => s.iter().map(|&p| binary_decision(p, BINARY_THRESHOLD).unwrap_or(0)).collect(),
        Scores::Multiclass(rows) => rows.iter().map(|r| argmax_decision(r).unwrap_or(0)).collect(),
    }
}
