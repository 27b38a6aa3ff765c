//! Raster image and mask files.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{HardLabelMap, ImageSlice};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Rescale all values linearly onto `[0, 1]`; a constant image maps to 0.
pub fn min_max_normalize(img: &mut ImageSlice) {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        img.data.fill(0.0);
        return;
    }
    img.data.iter_mut().for_each(|v| *v = (*v - lo) / range);
}

/// Load a 1- or 3-channel 8/16-bit raster, min-max normalised per image.
pub fn load_image(path: &Path) -> Result<ImageSlice> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut slice = match img {
        DynamicImage::ImageLuma8(b) => {
            ImageSlice::from_vec(1, h, w, b.into_raw().into_iter().map(f64::from).collect())?
        }
        DynamicImage::ImageLuma16(b) => {
            ImageSlice::from_vec(1, h, w, b.into_raw().into_iter().map(f64::from).collect())?
        }
        DynamicImage::ImageRgb8(b) => interleaved_to_planar(&b.into_raw().into_iter().map(f64::from).collect::<Vec<_>>(), h, w),
        DynamicImage::ImageRgb16(b) => interleaved_to_planar(&b.into_raw().into_iter().map(f64::from).collect::<Vec<_>>(), h, w),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("unsupported pixel layout {:?}", other.color()),
            })
        }
    };
    min_max_normalize(&mut slice);
    Ok(slice)
}

fn interleaved_to_planar(raw: &[f64], h: usize, w: usize) -> ImageSlice {
    let mut out = ImageSlice::zeros(3, h, w);
    for p in 0..h * w {
        for c in 0..3 {
            out.data[c * h * w + p] = raw[p * 3 + c];
        }
    }
    out
}

/// Load a single-channel integer mask with values in `0..classes`.
pub fn load_mask(path: &Path, classes: usize) -> Result<HardLabelMap> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("mask must be single-channel, found {:?}", other.color()),
            })
        }
    };
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("mask value {bad} out of range for {classes} classes"),
        });
    }
    HardLabelMap::new(h, w, labels)
}

/// Load an image and its mask, checking they agree in size.
pub fn load_pair(image: &Path, mask: &Path, classes: usize) -> Result<(ImageSlice, HardLabelMap)> {
    let img = load_image(image)?;
    let m = load_mask(mask, classes)?;
    if img.height != m.height || img.width != m.width {
        return Err(Error::shape(format!(
            "{}: image {}x{} vs mask {}x{}",
            image.display(),
            img.height,
            img.width,
            m.height,
            m.width
        )));
    }
    Ok((img, m))
}

fn save_err(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write a 1- or 3-channel image with values in `[0, 1]` as 8-bit PNG.
pub fn save_image_u8(path: &Path, img: &ImageSlice) -> Result<()> {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => {
            let buf: GrayImage =
                ImageBuffer::from_raw(w, h, img.data.iter().map(|&v| q(v)).collect()).expect("buffer size");
            buf.save(path).map_err(|e| save_err(path, e))
        }
        3 => {
            let n = img.plane_len();
            let mut raw = Vec::with_capacity(3 * n);
            for p in 0..n {
                for c in 0..3 {
                    raw.push(q(img.data[c * n + p]));
                }
            }
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size");
            buf.save(path).map_err(|e| save_err(path, e))
        }
        c => Err(Error::invalid(format!("cannot save {c}-channel image"))),
    }
}

/// Write a label map as a single-channel 8-bit PNG of class indices.
pub fn save_mask(path: &Path, labels: &HardLabelMap) -> Result<()> {
    if labels.labels.iter().any(|&l| l > 255) {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
            labels.width as u32,
            labels.height as u32,
            labels.labels.iter().map(|&l| l as u16).collect(),
        )
        .expect("buffer size");
        return buf.save(path).map_err(|e| save_err(path, e));
    }
    let buf: GrayImage = ImageBuffer::from_raw(
        labels.width as u32,
        labels.height as u32,
        labels.labels.iter().map(|&l| l as u8).collect(),
    )
    .expect("buffer size");
    buf.save(path).map_err(|e| save_err(path, e))
}
