//! Seeded random fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng as _;
use sraseg::rng::{substream, Rng};
use sraseg::{ClassMap, EmbeddingBatch, HardLabelMap, ImageSlice};

pub fn rng(tag: &str) -> Rng {
    substream(20240917, tag)
}

pub fn random_labels(rng: &mut Rng, h: usize, w: usize, classes: u32) -> HardLabelMap {
    let labels = (0..h * w).map(|_| rng.gen_range(0..classes)).collect();
    HardLabelMap::new(h, w, labels).unwrap()
}

/// Blobby masks: random rectangles OR-ed together.
pub fn random_mask(rng: &mut Rng, h: usize, w: usize) -> Vec<bool> {
    let mut m = vec![false; h * w];
    for _ in 0..rng.gen_range(0..4) {
        let (y0, x0) = (rng.gen_range(0..h), rng.gen_range(0..w));
        let (y1, x1) = ((y0 + rng.gen_range(1..7)).min(h), (x0 + rng.gen_range(1..7)).min(w));
        for y in y0..y1 {
            for x in x0..x1 {
                m[y * w + x] = true;
            }
        }
    }
    m
}

/// Per-pixel distributions bounded away from zero.
pub fn random_simplex(rng: &mut Rng, classes: usize, h: usize, w: usize) -> ClassMap {
    let n = h * w;
    let mut m = ClassMap::zeros(classes, h, w);
    for p in 0..n {
        let v: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        for (c, x) in v.iter().enumerate() {
            m.data[c * n + p] = x / s;
        }
    }
    m
}

pub fn random_image(rng: &mut Rng, channels: usize, h: usize, w: usize) -> ImageSlice {
    let data = (0..channels * h * w).map(|_| rng.gen::<f64>()).collect();
    ImageSlice::from_vec(channels, h, w, data).unwrap()
}

pub fn random_embeddings(rng: &mut Rng, rows: usize, dim: usize) -> EmbeddingBatch {
    let data = (0..rows * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    EmbeddingBatch::from_vec(rows, dim, data).unwrap()
}

/// `|a − b| ≤ tol · max(1, |a|, |b|)`.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
