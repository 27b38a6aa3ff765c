//! Procedural toy benchmark: disks and rings on a noisy background, with a
//! shifted and blurred "synthetic" pool.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.tsv
//! shapes.json
//! labeled/{images,masks}/real_0000.png
//! unlabeled_synthetic/images/syn_0000.png
//! val/{images,masks}/val_0000.png
//! test/{images,masks}/test_0000.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_io::{save_image_u8, save_mask, DatasetManifest, ManifestEntry, Pool};
use crate::error::{Error, Result};
use crate::rng::{normal, stream, substream, Rng};
use crate::tensor::{HardLabelMap, ImageSlice};

pub const TOY_SIZE: usize = 64;
pub const BACKGROUND: f64 = 0.15;
pub const RING: f64 = 0.55;
pub const DISK: f64 = 0.75;
pub const NOISE_STD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// Filled ellipse, class 1.
    Disk,
    /// Elliptic annulus, class 2.
    Ring,
}

/// Axis-aligned ellipse; a ring excludes the concentric ellipse scaled by `inner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyShape {
    pub kind: ShapeKind,
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
    pub inner: f64,
}

impl ToyShape {
    /// Class covering pixel `(y, x)`, if any. Pixel centres sit at `+0.5`.
    pub fn class_at(&self, y: usize, x: usize) -> Option<u32> {
        let dy = (y as f64 + 0.5 - self.cy) / self.ry;
        let dx = (x as f64 + 0.5 - self.cx) / self.rx;
        let e = dy * dy + dx * dx;
        match self.kind {
            ShapeKind::Disk if e <= 1.0 => Some(1),
            ShapeKind::Ring if e <= 1.0 && e > self.inner * self.inner => Some(2),
            _ => None,
        }
    }

    fn extent(&self) -> f64 {
        self.ry.max(self.rx)
    }
}

/// Geometry of one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRecord {
    pub pool: String,
    pub file: String,
    pub shapes: Vec<ToyShape>,
}

/// Summary returned by [`make_toy_data`].
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub records: Vec<ToyRecord>,
}

/// Sample 1 to 3 non-overlapping shapes on a `size × size` canvas.
pub fn sample_shapes(rng: &mut Rng, size: usize) -> Vec<ToyShape> {
    let count = rng.gen_range(1..=3);
    let s = size as f64;
    let mut shapes: Vec<ToyShape> = Vec::with_capacity(count);
    let mut attempts = 0;
    while shapes.len() < count && attempts < 200 {
        attempts += 1;
        let ry = rng.gen_range(6.0..13.0);
        let rx = rng.gen_range(6.0..13.0);
        let r = f64::max(ry, rx);
        let cy = rng.gen_range(r + 1.0..s - r - 1.0);
        let cx = rng.gen_range(r + 1.0..s - r - 1.0);
        let kind = if rng.gen_bool(0.5) { ShapeKind::Disk } else { ShapeKind::Ring };
        let inner = match kind {
            ShapeKind::Disk => 0.0,
            ShapeKind::Ring => rng.gen_range(0.45..0.6),
        };
        let cand = ToyShape { kind, cy, cx, ry, rx, inner };
        let clear = shapes
            .iter()
            .all(|o| ((o.cy - cy).powi(2) + (o.cx - cx).powi(2)).sqrt() > o.extent() + r + 2.0);
        if clear {
            shapes.push(cand);
        }
    }
    shapes
}

/// Exact label map of a set of shapes.
pub fn rasterize(shapes: &[ToyShape], size: usize) -> HardLabelMap {
    let mut m = HardLabelMap::filled(size, size, 0);
    for y in 0..size {
        for x in 0..size {
            if let Some(c) = shapes.iter().find_map(|s| s.class_at(y, x)) {
                m.set(y, x, c);
            }
        }
    }
    m
}

/// Clean intensities plus Gaussian noise, clamped to `[0, 1]`.
pub fn render(labels: &HardLabelMap, rng: &mut Rng) -> ImageSlice {
    let mut img = ImageSlice::zeros(1, labels.height, labels.width);
    for (v, &l) in img.data.iter_mut().zip(&labels.labels) {
        let base = match l {
            1 => DISK,
            2 => RING,
            _ => BACKGROUND,
        };
        *v = (base + NOISE_STD * normal(rng)).clamp(0.0, 1.0);
    }
    img
}

fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * plane[y * w + clampi(x as isize + d, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * tmp[clampi(y as isize + d, h) * w + x])
                .sum();
        }
    }
    out
}

/// Emulate the synthetic-real gap: add `shift`, clamp, then blur with
/// standard deviation `2·shift` pixels.
pub fn apply_domain_shift(img: &ImageSlice, shift: f64) -> ImageSlice {
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v = (*v + shift).clamp(0.0, 1.0));
    let n = out.plane_len();
    for c in 0..out.channels {
        let b = gaussian_blur(&out.data[c * n..(c + 1) * n], out.height, out.width, 2.0 * shift);
        out.data[c * n..(c + 1) * n].copy_from_slice(&b);
    }
    out
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Generate the toy dataset under `out_dir`.
///
/// `n_images` real training images and as many synthetic ones, plus
/// `max(n/5, 4)` validation and test images. Every image is its own group.
pub fn make_toy_data(out_dir: &Path, n_images: usize, shift: f64, seed: u64) -> Result<ToyDataset> {
    if n_images < 20 {
        return Err(Error::invalid(format!("need at least 20 images, got {n_images}")));
    }
    if !(0.0..=1.0).contains(&shift) {
        return Err(Error::invalid(format!("shift {shift} outside [0, 1]")));
    }
    let n_eval = (n_images / 5).max(4);
    let plan = [
        (Pool::Labeled, "real", n_images),
        (Pool::UnlabeledSynthetic, "syn", n_images),
        (Pool::Val, "val", n_eval),
        (Pool::Test, "test", n_eval),
    ];
    let mut entries = Vec::new();
    let mut records = Vec::new();
    for (pool, prefix, count) in plan {
        let dir = out_dir.join(pool.as_str());
        mkdir(&dir.join("images"))?;
        if pool != Pool::UnlabeledSynthetic {
            mkdir(&dir.join("masks"))?;
        }
        for i in 0..count {
            let mut rng = substream(seed, &format!("{}/{prefix}/{i}", stream::TOY));
            let shapes = sample_shapes(&mut rng, TOY_SIZE);
            let labels = rasterize(&shapes, TOY_SIZE);
            let mut img = render(&labels, &mut rng);
            let file = format!("{prefix}_{i:04}.png");
            let rel_img = PathBuf::from(pool.as_str()).join("images").join(&file);
            let mut rel_mask = None;
            if pool == Pool::UnlabeledSynthetic {
                img = apply_domain_shift(&img, shift);
            } else {
                let m = PathBuf::from(pool.as_str()).join("masks").join(&file);
                save_mask(&out_dir.join(&m), &labels)?;
                rel_mask = Some(m);
            }
            save_image_u8(&out_dir.join(&rel_img), &img)?;
            entries.push(ManifestEntry {
                image_path: rel_img,
                mask_path: rel_mask,
                group_id: format!("{prefix}_{i:04}"),
                pool,
            });
            records.push(ToyRecord {
                pool: pool.as_str().to_string(),
                file,
                shapes,
            });
        }
    }
    let manifest_path = out_dir.join("manifest.tsv");
    fs::write(&manifest_path, DatasetManifest::new(entries)?.to_tsv()).map_err(|e| Error::io(&manifest_path, e))?;
    let shapes_path = out_dir.join("shapes.json");
    let json = serde_json::to_string_pretty(&records).expect("shapes serialize");
    fs::write(&shapes_path, json).map_err(|e| Error::io(&shapes_path, e))?;
    Ok(ToyDataset {
        root: out_dir.to_path_buf(),
        manifest: DatasetManifest::load(&manifest_path)?,
        records,
    })
}

/// Read back `shapes.json`.
pub fn load_shapes(root: &Path) -> Result<Vec<ToyRecord>> {
    let p = root.join("shapes.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
}
