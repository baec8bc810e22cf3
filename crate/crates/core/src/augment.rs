//! Pixel augmentation for oversampled records: rotation, reflection, noise.
//!
//! Augmentation runs on preprocessed, circle-cropped square images, so a
//! rotation about the centre never moves retina content out of frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageops::{quantize, ImageBuffer, CHANNELS};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("rotation needs a square image, got {width}x{height}")]
    NonSquareInput { width: usize, height: usize },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Angles are drawn from `U[0, rotation_max)` degrees.
    pub rotation_max: f64,
    /// Probability of flipping along each axis.
    pub flip_prob: f64,
    /// Standard deviation of the additive Gaussian noise, in intensity levels.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { rotation_max: 360.0, flip_prob: 0.5, noise_sigma: 10.0, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.rotation_max > 0.0 && self.rotation_max <= 360.0) {
            return Err(AugmentError::InvalidConfig(format!("rotation_max {} outside (0, 360]", self.rotation_max)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(AugmentError::InvalidConfig(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(AugmentError::InvalidConfig(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

fn cos_sin_degrees(angle: f64) -> (f64, f64) {
    // exact values on right angles keep those rotations pure permutations
    let a = angle.rem_euclid(360.0);
    match a {
        0.0 => (1.0, 0.0),
        90.0 => (0.0, 1.0),
        180.0 => (-1.0, 0.0),
        270.0 => (0.0, -1.0),
        _ => {
            let r = a.to_radians();
            (r.cos(), r.sin())
        }
    }
}

/// Bilinear sample at a fractional position; neighbours outside the frame
/// contribute zero.
pub(crate) fn sample_zero_padded(img: &ImageBuffer, sx: f64, sy: f64, c: usize) -> f64 {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let fetch = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get(x as usize, y as usize, c) as f64
        }
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    fetch(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + fetch(x0 + 1, y0) * fx * (1.0 - fy)
        + fetch(x0, y0 + 1) * (1.0 - fx) * fy
        + fetch(x0 + 1, y0 + 1) * fx * fy
}

/// Rotates a square image counter-clockwise (as displayed) by `angle`
/// degrees about its centre. Pixels mapping outside the source are zero.
pub fn rotate(img: &ImageBuffer, angle: f64) -> Result<ImageBuffer, AugmentError> {
    if img.width() != img.height() {
        return Err(AugmentError::NonSquareInput { width: img.width(), height: img.height() });
    }
    let n = img.width();
    let (cos, sin) = cos_sin_degrees(angle);
    if cos == 1.0 {
        return Ok(img.clone());
    }
    let centre = (n as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * n * CHANNELS);
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - centre, y as f64 - centre);
            let sx = dx * cos - dy * sin + centre;
            let sy = dx * sin + dy * cos + centre;
            for c in 0..CHANNELS {
                data.push(quantize(sample_zero_padded(img, sx, sy, c)));
            }
        }
    }
    Ok(ImageBuffer::new(n, n, data).expect("dimensions preserved"))
}

/// `horizontal` mirrors left-right, `vertical` mirrors top-bottom.
pub fn reflect(img: &ImageBuffer, horizontal: bool, vertical: bool) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    ImageBuffer::from_fn(w, h, |x, y| {
        let sx = if horizontal { w - 1 - x } else { x };
        let sy = if vertical { h - 1 - y } else { y };
        img.pixel(sx, sy)
    })
}

/// Adds i.i.d. `N(0, σ²)` noise to every channel, rounding and clamping.
pub fn add_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    if sigma == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img.data().iter().map(|&v| quantize(v as f64 + normal.sample(&mut rng))).collect();
    ImageBuffer::new(img.width(), img.height(), data).expect("dimensions preserved")
}

/// The random draws behind one [`augment`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub angle: f64,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub noise_seed: u64,
}

pub fn draw(cfg: &AugmentConfig) -> AugmentDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    AugmentDraw {
        angle: rng.random::<f64>() * cfg.rotation_max,
        flip_horizontal: rng.random_bool(cfg.flip_prob),
        flip_vertical: rng.random_bool(cfg.flip_prob),
        noise_seed: rng.random(),
    }
}

/// Rotate, reflect, then add noise, all drawn from `cfg.seed`.
pub fn augment(img: &ImageBuffer, cfg: &AugmentConfig) -> Result<ImageBuffer, AugmentError> {
    cfg.validate()?;
    let d = draw(cfg);
    let rotated = rotate(img, d.angle)?;
    let reflected = reflect(&rotated, d.flip_horizontal, d.flip_vertical);
    Ok(add_noise(&reflected, cfg.noise_sigma, d.noise_seed))
}
