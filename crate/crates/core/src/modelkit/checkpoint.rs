//! Checkpoint format: a binary named-tensor archive plus a JSON sidecar.
//!
//! Archive layout (all integers little-endian):
//!
//! ```text
//! magic    b"RTNS"
//! version  u32
//! count    u32
//! repeated count times:
//!   name_len u32, name (utf-8)
//!   ndim u32, dims u64 * ndim
//!   trainable u8
//!   values f64 * product(dims)
//! ```
//!
//! The sidecar (`<stem>.json`) records the format name and version, the
//! model spec, the construction seed, the training phase and the archive's
//! file name.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, NamedTensor, Parameters};
use super::tensor::Tensor;
use super::{ModelError, ModelSpec};
use crate::trainer::Phase;

pub const CHECKPOINT_FORMAT: &str = "retina-named-tensors";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RTNS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub model_spec: ModelSpec,
    pub seed: u64,
    pub phase: Phase,
    pub tensor_file: String,
    pub best_epoch: Option<usize>,
}

/// Encoding and decoding of [`Parameters`] as a tensor archive.
pub struct TensorArchive;

impl TensorArchive {
    pub fn encode(params: &Parameters) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
        for t in &params.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.tensor.shape().len() as u32).to_le_bytes());
            for &d in t.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(u8::from(t.trainable));
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(mut bytes: &[u8]) -> Result<Parameters, ModelError> {
        let bad = |msg: &str| ModelError::Checkpoint(msg.to_string());
        let mut take = |n: usize| -> Result<Vec<u8>, ModelError> {
            let mut buf = vec![0; n];
            bytes.read_exact(&mut buf).map_err(|_| bad("truncated tensor archive"))?;
            Ok(buf)
        };
        if take(4)? != MAGIC {
            return Err(bad("not a tensor archive"));
        }
        let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_of(take(4)?);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported archive version {version}")));
        }
        let count = u32_of(take(4)?) as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u32_of(take(4)?) as usize;
            let name = String::from_utf8(take(name_len)?).map_err(|_| bad("tensor name is not utf-8"))?;
            let ndim = u32_of(take(4)?) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
            }
            let trainable = take(1)?[0] != 0;
            let n: usize = shape.iter().product();
            let raw = take(n * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(NamedTensor { name, tensor: Tensor::new(shape, data)?, trainable });
        }
        Ok(Parameters { tensors })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.display().to_string(), source }
}

/// Writes `<dir>/<stem>.tensors` and `<dir>/<stem>.json`; returns both paths.
pub fn save_checkpoint(
    model: &Classifier,
    phase: Phase,
    best_epoch: Option<usize>,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf), ModelError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tensor_file = format!("{stem}.tensors");
    let tensor_path = dir.join(&tensor_file);
    let meta_path = dir.join(format!("{stem}.json"));
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model_spec: model.spec().clone(),
        seed: model.seed(),
        phase,
        tensor_file,
        best_epoch,
    };
    let mut f = fs::File::create(&tensor_path).map_err(io_err(&tensor_path))?;
    f.write_all(&TensorArchive::encode(&model.parameters())).map_err(io_err(&tensor_path))?;
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(&meta_path, json).map_err(io_err(&meta_path))?;
    Ok((tensor_path, meta_path))
}

/// Loads a checkpoint from its JSON sidecar path, rebuilding a native model.
pub fn load_checkpoint(meta_path: &Path) -> Result<(Classifier, CheckpointMeta), ModelError> {
    let text = fs::read(meta_path).map_err(io_err(meta_path))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", meta_path.display())))?;
    if meta.format != CHECKPOINT_FORMAT || meta.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            meta.format, meta.version
        )));
    }
    let tensor_path = meta_path.parent().unwrap_or(Path::new(".")).join(&meta.tensor_file);
    let bytes = fs::read(&tensor_path).map_err(io_err(&tensor_path))?;
    let params = TensorArchive::decode(&bytes)?;
    let mut model = Classifier::new(meta.model_spec.clone(), meta.seed)?;
    model.load_parameters(&params)?;
    Ok((model, meta))
}
