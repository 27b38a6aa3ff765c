//! Overlap and boundary-distance segmentation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::HardLabelMap;

/// Dice and Jaccard of one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub dice: f64,
    pub jaccard: f64,
}

/// Overlap of two binary masks. Both empty scores 100, exactly one empty 0.
pub fn binary_overlap(pred: &[bool], gt: &[bool]) -> Result<Overlap> {
    if pred.len() != gt.len() {
        return Err(Error::shape("masks differ in size"));
    }
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        a += p as usize;
        b += g as usize;
        inter += (p && g) as usize;
    }
    if a == 0 && b == 0 {
        return Ok(Overlap {
            dice: 100.0,
            jaccard: 100.0,
        });
    }
    let union = a + b - inter;
    Ok(Overlap {
        dice: 100.0 * 2.0 * inter as f64 / (a + b) as f64,
        jaccard: 100.0 * inter as f64 / union as f64,
    })
}

/// Per-class overlap for foreground classes `1..classes` (index 0 of the
/// result is class 1).
pub fn overlap_metrics(pred: &HardLabelMap, gt: &HardLabelMap, classes: usize) -> Result<Vec<Overlap>> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    (1..classes as u32)
        .map(|c| binary_overlap(&pred.class_mask(c), &gt.class_mask(c)))
        .collect()
}

/// Mask pixels with at least one 4-neighbour outside the mask; the image
/// border counts as outside.
pub fn boundary(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if !mask[p] {
                continue;
            }
            out[p] = y == 0
                || x == 0
                || y + 1 == height
                || x + 1 == width
                || !mask[p - width]
                || !mask[p + width]
                || !mask[p - 1]
                || !mask[p + 1];
        }
    }
    out
}

// 1D squared distance transform: lower envelope of parabolas rooted at the
// finite entries of `f`.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let mut roots: Vec<usize> = Vec::new();
    let mut starts: Vec<f64> = Vec::new();
    for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
        while let Some(&p) = roots.last() {
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= *starts.last().unwrap() {
                roots.pop();
                starts.pop();
            } else {
                roots.push(q);
                starts.push(s);
                break;
            }
        }
        if roots.is_empty() {
            roots.push(q);
            starts.push(f64::NEG_INFINITY);
        }
    }
    if roots.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < roots.len() && starts[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - roots[k] as f64;
        *o = d * d + f[roots[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest `true` pixel.
pub fn squared_distance_transform(sites: &[bool], height: usize, width: usize) -> Vec<f64> {
    let mut col_in = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    let mut grid = vec![0.0; height * width];
    for x in 0..width {
        for y in 0..height {
            col_in[y] = if sites[y * width + x] { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col_in, &mut col_out);
        for y in 0..height {
            grid[y * width + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; width];
    for y in 0..height {
        let row = grid[y * width..(y + 1) * width].to_vec();
        edt_1d(&row, &mut row_out);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

/// 95th-style percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Boundary distances between two binary masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistance {
    pub hd95: f64,
    pub asd: f64,
}

/// 95th-percentile Hausdorff and average symmetric surface distance.
///
/// Pools the directed boundary distances in both directions. Both masks
/// empty gives zeros; exactly one empty gives `None` (undefined).
pub fn surface_metrics(pred: &[bool], gt: &[bool], height: usize, width: usize) -> Result<Option<SurfaceDistance>> {
    if pred.len() != gt.len() || pred.len() != height * width {
        return Err(Error::shape("masks differ in size"));
    }
    let (pa, ga) = (pred.iter().any(|&b| b), gt.iter().any(|&b| b));
    match (pa, ga) {
        (false, false) => return Ok(Some(SurfaceDistance { hd95: 0.0, asd: 0.0 })),
        (true, false) | (false, true) => return Ok(None),
        _ => {}
    }
    let bp = boundary(pred, height, width);
    let bg = boundary(gt, height, width);
    let dt_p = squared_distance_transform(&bp, height, width);
    let dt_g = squared_distance_transform(&bg, height, width);
    let mut d = Vec::new();
    d.extend(bp.iter().zip(&dt_g).filter(|(&b, _)| b).map(|(_, &s)| s.sqrt()));
    d.extend(bg.iter().zip(&dt_p).filter(|(&b, _)| b).map(|(_, &s)| s.sqrt()));
    let asd = d.iter().sum::<f64>() / d.len() as f64;
    Ok(Some(SurfaceDistance {
        hd95: percentile(&d, 95.0),
        asd,
    }))
}
