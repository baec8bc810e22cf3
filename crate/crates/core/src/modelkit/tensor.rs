use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::imageops::{ImageBuffer, CHANNELS};

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ModelError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub(crate) fn reshape(mut self, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }
}

/// Stacks RGB images into a `[batch, 3, size, size]` tensor scaled to `[-1, 1]`.
pub fn images_to_tensor(images: &[&ImageBuffer], size: usize) -> Result<Tensor, ModelError> {
    let plane = size * size;
    let mut data = vec![0.0; images.len() * CHANNELS * plane];
    for (b, img) in images.iter().enumerate() {
        if img.width() != size || img.height() != size {
            return Err(ModelError::ShapeMismatch(format!(
                "image is {}x{}, backbone expects {size}x{size}",
                img.width(),
                img.height()
            )));
        }
        let base = b * CHANNELS * plane;
        for (i, px) in img.data().chunks_exact(CHANNELS).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[base + c * plane + i] = v as f64 / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(vec![images.len(), CHANNELS, size, size], data)
}
