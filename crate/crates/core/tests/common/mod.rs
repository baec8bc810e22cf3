//! Reference implementations and fixtures shared by the integration tests.
//! The oracles here are written from the textbook definitions, not from the
//! library code.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retina_pipeline::augment::AugmentConfig;
use retina_pipeline::dataset::{DiagnosisGrade, ImageRecord};
use retina_pipeline::loader::InMemorySource;
use retina_pipeline::ImageBuffer;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut r = rng(seed);
    ImageBuffer::from_fn(w, h, |_, _| [r.random(), r.random(), r.random()])
}

// ---- image oracles -------------------------------------------------------

/// Direct 2-D Gaussian convolution, window `ceil(3σ)`, weights normalised
/// over the full square window, out-of-frame samples clamped to the edge.
pub fn blur_oracle(img: &ImageBuffer, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        }
    }
    let mut out = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        let sy = (y + dy).clamp(0, h - 1) as usize;
                        acc += wgt * img.get(sx, sy, c) as f64;
                    }
                }
                out.push(acc / norm);
            }
        }
    }
    out
}

pub fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn blend_oracle(img: &ImageBuffer, alpha: f64, sigma: f64, bias: f64) -> Vec<u8> {
    blur_oracle(img, sigma)
        .into_iter()
        .zip(img.data())
        .map(|(g, &v)| to_u8(alpha * (v as f64 - g) + bias))
        .collect()
}

/// Bilinear resampling written as a tent-kernel sum over every source pixel.
/// Output pixel centres map to `(x + 0.5)·in/out − 0.5` in source space,
/// clamped into the frame.
pub fn bilinear_oracle(img: &ImageBuffer, out_w: usize, out_h: usize) -> Vec<u8> {
    let (in_w, in_h) = (img.width(), img.height());
    let src = |d: usize, n_in: usize, n_out: usize| {
        ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h * 3);
    for y in 0..out_h {
        let v = src(y, in_h, out_h);
        for x in 0..out_w {
            let u = src(x, in_w, out_w);
            for c in 0..3 {
                let mut acc = 0.0;
                for sy in 0..in_h {
                    let wy = (1.0 - (v - sy as f64).abs()).max(0.0);
                    if wy == 0.0 {
                        continue;
                    }
                    for sx in 0..in_w {
                        let wx = (1.0 - (u - sx as f64).abs()).max(0.0);
                        acc += wx * wy * img.get(sx, sy, c) as f64;
                    }
                }
                out.push(to_u8(acc));
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[u8], b: &[u8]) -> u8 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).max().unwrap_or(0)
}

/// A fundus-like photograph: a bright orange disk with darker lesions and a
/// vignette, on a black frame with uneven margins.
pub fn fundus_like(seed: u64) -> ImageBuffer {
    let mut r = rng(seed);
    let w = r.random_range(80..160);
    let h = r.random_range(70..140);
    let cx = w as f64 / 2.0 + r.random_range(-6.0..6.0);
    let cy = h as f64 / 2.0 + r.random_range(-6.0..6.0);
    let radius = (w.min(h) as f64 / 2.0 - 8.0).max(10.0);
    let base = [r.random_range(150..230) as f64, r.random_range(60..120) as f64, r.random_range(20..60) as f64];
    let lesions: Vec<(f64, f64, f64)> = (0..r.random_range(0..6))
        .map(|_| (cx + r.random_range(-0.6..0.6) * radius, cy + r.random_range(-0.6..0.6) * radius, r.random_range(1.5..5.0)))
        .collect();
    let noise_seed: u64 = r.random();
    let mut nr = rng(noise_seed);
    ImageBuffer::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let d = (dx * dx + dy * dy).sqrt();
        if d > radius {
            let n: u8 = nr.random_range(0..4);
            return [n, n, n];
        }
        let mut k = 1.0 - 0.45 * (d / radius).powi(2);
        if lesions.iter().any(|&(lx, ly, lr)| (x as f64 - lx).hypot(y as f64 - ly) < lr) {
            k *= 0.5;
        }
        let jitter: f64 = nr.random_range(-6.0..6.0);
        [to_u8(base[0] * k + jitter), to_u8(base[1] * k + jitter), to_u8(base[2] * k + jitter)]
    })
}

// ---- metric oracles ------------------------------------------------------

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn pairwise_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positives).filter(|(_, &p)| p).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(positives).filter(|(_, &p)| !p).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Random probability rows over `k` classes drawn from a coarse grid so that
/// ties are common, and labels covering every class.
pub fn random_prob_rows(n: usize, k: usize, r: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| r.random_range(1..6) as f64).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let labels = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
    (rows, labels)
}

// ---- optimizer references ------------------------------------------------

pub fn sgd_reference(p: f64, g: f64, lr: f64) -> f64 {
    p - lr * g
}

/// One scalar Adam step; returns `(p, m, v)`.
#[allow(clippy::too_many_arguments)]
pub fn adam_reference(p: f64, g: f64, m: f64, v: f64, t: i32, lr: f64, b1: f64, b2: f64, eps: f64) -> (f64, f64, f64) {
    let m = b1 * m + (1.0 - b1) * g;
    let v = b2 * v + (1.0 - b2) * g * g;
    let m_hat = m / (1.0 - b1.powf(t as f64));
    let v_hat = v / (1.0 - b2.powf(t as f64));
    (p - lr * m_hat / (v_hat.sqrt() + eps), m, v)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
}

// ---- brightness-coded disks ---------------------------------------------

pub const DISK_LEVELS: [f64; 3] = [60.0, 135.0, 210.0];

/// A 32×32 image of a fixed-size disk whose brightness encodes `class`.
pub fn brightness_disk(class: usize, seed: u64) -> ImageBuffer {
    let mut r = rng(seed);
    let level = DISK_LEVELS[class] + r.random_range(-12.0..12.0);
    let cx = 15.5 + r.random_range(-2.0..2.0);
    let cy = 15.5 + r.random_range(-2.0..2.0);
    let tint = [1.0, r.random_range(0.55..0.75), r.random_range(0.25..0.45)];
    ImageBuffer::from_fn(32, 32, |x, y| {
        if (x as f64 - cx).hypot(y as f64 - cy) > 11.0 {
            return [0, 0, 0];
        }
        let n: f64 = r.random_range(-8.0..8.0);
        [to_u8(level * tint[0] + n), to_u8(level * tint[1] + n), to_u8(level * tint[2] + n)]
    })
}

/// Grades used for the three brightness classes (one per grade group).
pub const CLASS_GRADES: [u8; 3] = [0, 1, 3];

/// `n` brightness-disk records (classes round-robin) and their pixels.
pub fn brightness_dataset(n: usize, seed: u64) -> (Vec<ImageRecord>, InMemorySource) {
    let mut images = HashMap::new();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        let id = format!("disk{i:04}");
        images.insert(id.clone(), brightness_disk(class, seed.wrapping_mul(1000).wrapping_add(i as u64)));
        let mut rec = ImageRecord::new(id, format!("{i}.png"), DiagnosisGrade::new(CLASS_GRADES[class]).unwrap());
        rec.task_label = Some(class);
        records.push(rec);
    }
    (records, InMemorySource::new(images, AugmentConfig::default()))
}

/// Softmax regression on a single standardised feature, fitted by full-batch
/// gradient descent. Returns accuracy on the test pairs.
pub fn logistic_oracle(train: &[(f64, usize)], test: &[(f64, usize)], k: usize) -> f64 {
    let n = train.len() as f64;
    let mean = train.iter().map(|p| p.0).sum::<f64>() / n;
    let sd = (train.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    let z = |x: f64| (x - mean) / sd;
    let (mut w, mut b) = (vec![0.0; k], vec![0.0; k]);
    let probs = |w: &[f64], b: &[f64], x: f64| {
        let logits: Vec<f64> = (0..k).map(|c| w[c] * x + b[c]).collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    for _ in 0..3000 {
        let (mut gw, mut gb) = (vec![0.0; k], vec![0.0; k]);
        for &(x, y) in train {
            let x = z(x);
            for (c, p) in probs(&w, &b, x).into_iter().enumerate() {
                let d = p - if c == y { 1.0 } else { 0.0 };
                gw[c] += d * x / n;
                gb[c] += d / n;
            }
        }
        for c in 0..k {
            w[c] -= 2.0 * gw[c];
            b[c] -= 2.0 * gb[c];
        }
    }
    let hits = test
        .iter()
        .filter(|&&(x, y)| {
            let p = probs(&w, &b, z(x));
            let best = (0..k).fold(0, |bi, c| if p[c] > p[bi] { c } else { bi });
            best == y
        })
        .count();
    hits as f64 / test.len() as f64
}

// ---- on-disk fixtures ----------------------------------------------------

/// Writes `n` brightness-disk PNGs plus an `id_code,diagnosis` manifest.
/// Grade `g` uses disk level `class_of(g)`.
pub fn write_disk_dataset(dir: &Path, n: usize, grades: &[u8], seed: u64) -> (PathBuf, PathBuf) {
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).unwrap();
    let mut manifest = String::from("id_code,diagnosis\n");
    for i in 0..n {
        let grade = grades[i % grades.len()];
        let class = match grade {
            0 => 0,
            1 | 2 => 1,
            _ => 2,
        };
        let id = format!("img{i:04}");
        brightness_disk(class, seed.wrapping_mul(7919).wrapping_add(i as u64))
            .save_png(&image_dir.join(format!("{id}.png")))
            .unwrap();
        let _ = writeln!(manifest, "{id},{grade}");
    }
    let manifest_path = dir.join("train.csv");
    fs::write(&manifest_path, manifest).unwrap();
    (manifest_path, image_dir)
}
