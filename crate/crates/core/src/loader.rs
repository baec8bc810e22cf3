//! Turns [`ImageRecord`]s into model-ready pixels.
//!
//! Originals are loaded (and preprocessed, when configured); synthetic
//! records are regenerated from their original plus their augmentation seed
//! every time they are requested.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{augment, AugmentConfig, AugmentError};
use crate::dataset::ImageRecord;
use crate::imageops::{preprocess, resize_to, ImageBuffer, ImageOpsError, PreprocessConfig};
use crate::modelkit::{images_to_tensor, ModelError, Tensor};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("image for `{id}` not found at {path}")]
    MissingImage { id: String, path: PathBuf },
    #[error("image `{id}`: {source}")]
    Image { id: String, source: ImageOpsError },
    #[error("augmenting `{id}`: {source}")]
    Augment { id: String, source: AugmentError },
    #[error("no in-memory image for `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub trait ImageSource: Sync {
    /// Pixels for a record, already at the model's input size.
    fn load(&self, record: &ImageRecord) -> Result<ImageBuffer, LoadError>;
}

fn augment_if_synthetic(record: &ImageRecord, img: ImageBuffer, cfg: &AugmentConfig) -> Result<ImageBuffer, LoadError> {
    match (record.synthetic, record.aug_seed) {
        (true, Some(seed)) => {
            augment(&img, &cfg.with_seed(seed)).map_err(|source| LoadError::Augment { id: record.id.clone(), source })
        }
        _ => Ok(img),
    }
}

/// Images held in memory by id, used as-is (no preprocessing).
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    images: HashMap<String, ImageBuffer>,
    augment: AugmentConfig,
}

impl InMemorySource {
    pub fn new(images: HashMap<String, ImageBuffer>, augment: AugmentConfig) -> Self {
        Self { images, augment }
    }

    pub fn insert(&mut self, id: impl Into<String>, img: ImageBuffer) {
        self.images.insert(id.into(), img);
    }
}

impl ImageSource for InMemorySource {
    fn load(&self, record: &ImageRecord) -> Result<ImageBuffer, LoadError> {
        let img = self.images.get(&record.id).ok_or_else(|| LoadError::Unknown(record.id.clone()))?;
        augment_if_synthetic(record, img.clone(), &self.augment)
    }
}

/// PNG files on disk. With a preprocessing config the full pipeline runs
/// (and results are cached under `cache_dir/<config hash>/<id>.png`);
/// without one the image is only resized to `input_size`.
#[derive(Debug, Clone)]
pub struct DiskSource {
    pub input_size: usize,
    pub preprocess: Option<PreprocessConfig>,
    pub augment: AugmentConfig,
    pub cache_dir: Option<PathBuf>,
}

impl DiskSource {
    pub fn cache_path(&self, id: &str) -> Option<PathBuf> {
        let cfg = self.preprocess.as_ref()?;
        Some(self.cache_dir.as_ref()?.join(cfg.cache_key()).join(format!("{id}.png")))
    }

    /// Loads the record's original image and runs preprocessing, consulting
    /// the cache first.
    pub fn load_original(&self, record: &ImageRecord) -> Result<ImageBuffer, LoadError> {
        let image_err = |source| LoadError::Image { id: record.id.clone(), source };
        let cached = self.cache_path(&record.id);
        if let Some(p) = cached.as_ref().filter(|p| p.is_file()) {
            return ImageBuffer::load_png(p).map_err(image_err);
        }
        if !record.image_path.is_file() {
            return Err(LoadError::MissingImage { id: record.id.clone(), path: record.image_path.clone() });
        }
        let raw = ImageBuffer::load_png(&record.image_path).map_err(image_err)?;
        let img = match &self.preprocess {
            Some(cfg) => preprocess(&raw, cfg).map_err(image_err)?,
            None => raw,
        };
        if let Some(p) = cached {
            write_cache(&p, &img).map_err(image_err)?;
        }
        Ok(img)
    }
}

fn write_cache(path: &Path, img: &ImageBuffer) -> Result<(), ImageOpsError> {
    if let Some(dir) = path.parent() {
        // a failed mkdir surfaces through save_png below
        let _ = fs::create_dir_all(dir);
    }
    // write-then-rename so concurrent readers never see a partial file
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    img.save_png(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| ImageOpsError::Io {
        path: path.display().to_string(),
        source: image::ImageError::IoError(e),
    })
}

impl ImageSource for DiskSource {
    fn load(&self, record: &ImageRecord) -> Result<ImageBuffer, LoadError> {
        let img = self.load_original(record)?;
        let img = if img.width() != self.input_size || img.height() != self.input_size {
            resize_to(&img, self.input_size, self.input_size)
                .map_err(|source| LoadError::Image { id: record.id.clone(), source })?
        } else {
            img
        };
        augment_if_synthetic(record, img, &self.augment)
    }
}

/// Loads (in parallel, order preserved) and stacks a batch into a
/// `[batch, 3, size, size]` tensor.
pub fn batch_tensor(source: &dyn ImageSource, records: &[&ImageRecord], size: usize) -> Result<Tensor, LoadError> {
    let images = records.par_iter().map(|r| source.load(r)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&ImageBuffer> = images.iter().collect();
    Ok(images_to_tensor(&refs, size)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DiagnosisGrade;

    fn record(id: &str, path: PathBuf) -> ImageRecord {
        ImageRecord::new(id, path, DiagnosisGrade::new(1).unwrap())
    }

    #[test]
    fn synthetic_records_are_augmented_deterministically() {
        let img = ImageBuffer::from_fn(16, 16, |x, y| [(x * 16) as u8, (y * 16) as u8, 99]);
        let mut src = InMemorySource::default();
        src.insert("a", img.clone());
        let orig = record("a", "a.png".into());
        assert_eq!(src.load(&orig).unwrap(), img);
        let mut syn = orig.clone();
        syn.synthetic = true;
        syn.aug_seed = Some(17);
        let a = src.load(&syn).unwrap();
        assert_ne!(a, img);
        assert_eq!(a, src.load(&syn).unwrap());
        assert!(matches!(src.load(&record("zz", "zz.png".into())), Err(LoadError::Unknown(_))));
    }

    #[test]
    fn disk_source_caches_preprocessed_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(260, 240, |x, y| {
            let (dx, dy) = (x as f64 - 130.0, y as f64 - 120.0);
            if dx * dx + dy * dy < 100.0 * 100.0 { [150, 80, 40] } else { [0, 0, 0] }
        });
        let path = dir.path().join("e1.png");
        img.save_png(&path).unwrap();
        let src = DiskSource {
            input_size: 224,
            preprocess: Some(PreprocessConfig { target_size: 224, ..Default::default() }),
            augment: AugmentConfig::default(),
            cache_dir: Some(dir.path().join("cache")),
        };
        let rec = record("e1", path);
        let first = src.load(&rec).unwrap();
        assert_eq!((first.width(), first.height()), (224, 224));
        assert!(src.cache_path("e1").unwrap().is_file());
        assert_eq!(src.load(&rec).unwrap(), first);
        let missing = record("nope", dir.path().join("nope.png"));
        assert!(matches!(src.load(&missing), Err(LoadError::MissingImage { id, .. }) if id == "nope"));
    }
}
