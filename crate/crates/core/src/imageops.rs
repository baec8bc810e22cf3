//! Fundus preprocessing: black-border crop, resize, Gaussian blend, circle crop.
//!
//! All operations are pure functions over [`ImageBuffer`], an 8-bit RGB raster
//! stored row-major as `[r, g, b, r, g, b, ...]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum ImageOpsError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("resize target must be at least 8 pixels, got {0}")]
    InvalidSize(usize),
    #[error("buffer of {len} bytes does not match {width}x{height}x3")]
    BufferLength { width: usize, height: usize, len: usize },
    #[error("empty image")]
    Empty,
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("image io on {path}: {source}")]
    Io { path: String, source: image::ImageError },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageOpsError> {
        if data.len() != width * height * CHANNELS {
            return Err(ImageOpsError::BufferLength { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self { width, height, data }
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[self.index(x, y, c)]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = self.index(x, y, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = self.index(x, y, 0);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageOpsError> {
        let io_err = |source| ImageOpsError::Io { path: path.display().to_string(), source };
        let rgb = image::open(path).map_err(io_err)?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageOpsError> {
        let io_err = |source| ImageOpsError::Io { path: path.display().to_string(), source };
        let rgb = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .ok_or(ImageOpsError::BufferLength { width: self.width, height: self.height, len: self.data.len() })?;
        rgb.save_with_format(path, image::ImageFormat::Png).map_err(io_err)
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Result of [`crop_black_border`]. `no_content` is set when every pixel is at
/// or below the threshold, in which case the image is returned unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropOutcome {
    pub image: ImageBuffer,
    pub no_content: bool,
}

/// Crops to the tight bounding box of rows and columns containing a pixel
/// whose brightest channel exceeds `threshold`.
pub fn crop_black_border(img: &ImageBuffer, threshold: u8) -> CropOutcome {
    let bright = |x: usize, y: usize| img.pixel(x, y).into_iter().max().unwrap_or(0) > threshold;
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in 0..img.height {
        for x in 0..img.width {
            if bright(x, y) {
                bounds = Some(match bounds {
                    None => (x, x, y, y),
                    Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
                });
            }
        }
    }
    let Some((x0, x1, y0, y1)) = bounds else {
        return CropOutcome { image: img.clone(), no_content: true };
    };
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut data = Vec::with_capacity(w * h * CHANNELS);
    for y in y0..=y1 {
        let start = img.index(x0, y, 0);
        data.extend_from_slice(&img.data[start..start + w * CHANNELS]);
    }
    CropOutcome { image: ImageBuffer { width: w, height: h, data }, no_content: false }
}

/// Normalised 1-D Gaussian taps over radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, ImageOpsError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImageOpsError::InvalidSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable Gaussian blur with edge-clamp padding, unquantized.
/// Output is laid out like [`ImageBuffer::data`].
pub fn gaussian_blur_plane(img: &ImageBuffer, sigma: f64) -> Result<Vec<f64>, ImageOpsError> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let src: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();

    let mut horiz = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += t * src[((y * w + sx) as usize) * CHANNELS + c];
                }
                horiz[((y * w + x) as usize) * CHANNELS + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += t * horiz[((sy * w + x) as usize) * CHANNELS + c];
                }
                out[((y * w + x) as usize) * CHANNELS + c] = acc;
            }
        }
    }
    Ok(out)
}

pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer, ImageOpsError> {
    let plane = gaussian_blur_plane(img, sigma)?;
    Ok(ImageBuffer { width: img.width, height: img.height, data: plane.into_iter().map(quantize).collect() })
}

/// `clamp(α·I − α·G_σ(I) + bias, 0, 255)` per pixel and channel.
pub fn gaussian_blend(img: &ImageBuffer, alpha: f64, sigma: f64, bias: f64) -> Result<ImageBuffer, ImageOpsError> {
    let blurred = gaussian_blur_plane(img, sigma)?;
    let data = img
        .data
        .iter()
        .zip(&blurred)
        .map(|(&v, &g)| quantize(alpha * v as f64 - alpha * g + bias))
        .collect();
    Ok(ImageBuffer { width: img.width, height: img.height, data })
}

/// Whether pixel `(x, y)`'s centre lies inside the circle inscribed in a
/// `width × height` frame.
#[inline]
pub fn inside_inscribed_circle(x: usize, y: usize, width: usize, height: usize) -> bool {
    let radius = width.min(height) as f64 / 2.0;
    let dx = x as f64 + 0.5 - width as f64 / 2.0;
    let dy = y as f64 + 0.5 - height as f64 / 2.0;
    dx * dx + dy * dy <= radius * radius
}

/// Zeroes every pixel outside the inscribed circle centred on the image.
pub fn circle_crop(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if !inside_inscribed_circle(x, y, img.width, img.height) {
                out.set_pixel(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

/// Bilinear resize to `size × size` using pixel-centre alignment.
pub fn resize(img: &ImageBuffer, size: usize) -> Result<ImageBuffer, ImageOpsError> {
    if size < 8 {
        return Err(ImageOpsError::InvalidSize(size));
    }
    resize_to(img, size, size)
}

/// Bilinear resize to an arbitrary shape. Source coordinates are
/// `(dst + 0.5)·(in/out) − 0.5`, clamped to the frame.
pub fn resize_to(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer, ImageOpsError> {
    if img.is_empty() {
        return Err(ImageOpsError::Empty);
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..width).map(|x| axis(x, img.width, width)).collect();
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, img.height, height);
        for &(x0, x1, fx) in &cols {
            for c in 0..CHANNELS {
                let top = img.get(x0, y0, c) as f64 * (1.0 - fx) + img.get(x1, y0, c) as f64 * fx;
                let bottom = img.get(x0, y1, c) as f64 * (1.0 - fx) + img.get(x1, y1, c) as f64 * fx;
                data.push(quantize(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Ok(ImageBuffer { width, height, data })
}

pub const SUPPORTED_TARGET_SIZES: [usize; 3] = [224, 299, 512];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub black_threshold: u8,
    pub blend_alpha: f64,
    pub blend_bias: f64,
    /// Blur σ as a fraction of the resized width.
    pub sigma_ratio: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { target_size: 512, black_threshold: 7, blend_alpha: 4.0, blend_bias: 128.0, sigma_ratio: 1.0 / 30.0 }
    }
}

impl PreprocessConfig {
    pub fn sigma(&self) -> f64 {
        self.sigma_ratio * self.target_size as f64
    }

    pub fn validate(&self) -> Result<(), ImageOpsError> {
        if !SUPPORTED_TARGET_SIZES.contains(&self.target_size) {
            return Err(ImageOpsError::InvalidConfig(format!(
                "target_size {} not in {:?}",
                self.target_size, SUPPORTED_TARGET_SIZES
            )));
        }
        if !(self.blend_alpha > 0.0 && self.blend_alpha.is_finite()) {
            return Err(ImageOpsError::InvalidConfig(format!("blend_alpha must be > 0, got {}", self.blend_alpha)));
        }
        if !(0.0..=255.0).contains(&self.blend_bias) {
            return Err(ImageOpsError::InvalidConfig(format!("blend_bias {} outside [0, 255]", self.blend_bias)));
        }
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ImageOpsError::InvalidSigma(sigma));
        }
        Ok(())
    }

    /// Stable key for caching preprocessed output.
    pub fn cache_key(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Runs crop → resize → blend → circle crop and returns a
/// `target_size × target_size` image.
pub fn preprocess(img: &ImageBuffer, cfg: &PreprocessConfig) -> Result<ImageBuffer, ImageOpsError> {
    cfg.validate()?;
    if img.is_empty() {
        return Err(ImageOpsError::Empty);
    }
    let cropped = crop_black_border(img, cfg.black_threshold).image;
    let resized = resize(&cropped, cfg.target_size)?;
    let blended = gaussian_blend(&resized, cfg.blend_alpha, cfg.sigma(), cfg.blend_bias)?;
    Ok(circle_crop(&blended))
}
