//! Soft-mix augmentation.
//!
//! A rectangular hole covering a fraction `β` of each image dimension is
//! set to 0 in an otherwise-1 mask, the mask is smoothed with a `k × k`
//! mean filter, and the smoothed mask is used as a per-pixel convex blend
//! coefficient between a labeled image and a pseudo-labeled unlabeled one.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ClassMap, ImageSlice, SoftLabelMap};

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }
}

/// Binary hole mask and its smoothed blend coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMask {
    pub height: usize,
    pub width: usize,
    /// 0 inside `rect`, 1 outside.
    pub raw: Vec<f64>,
    /// Per-pixel blend coefficient in `[0, 1]`.
    pub smooth: Vec<f64>,
    pub rect: Rect,
}

impl BlendMask {
    /// Mask with a fixed coefficient everywhere, mostly useful in tests.
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            raw: vec![value; height * width],
            smooth: vec![value; height * width],
            rect: Rect {
                top: 0,
                left: 0,
                height: 0,
                width: 0,
            },
        }
    }
}

/// Rectangle of `round(β·H) × round(β·W)` at a uniformly random position.
pub fn sample_blend_region(height: usize, width: usize, beta: f64, rng: &mut Rng) -> Result<Rect> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("patch fraction {beta} outside (0, 1]")));
    }
    let rh = (beta * height as f64).round() as usize;
    let rw = (beta * width as f64).round() as usize;
    if rh < 1 || rw < 1 || rh > height || rw > width {
        return Err(Error::invalid(format!(
            "degenerate blend region {rh}x{rw} for {height}x{width} image"
        )));
    }
    let top = rng.gen_range(0..=height - rh);
    let left = rng.gen_range(0..=width - rw);
    Ok(Rect {
        top,
        left,
        height: rh,
        width: rw,
    })
}

/// `k × k` mean filter with edge-clamped (replicate) padding, stride 1.
pub fn mean_filter(src: &[f64], height: usize, width: usize, k: usize) -> Result<Vec<f64>> {
    if k % 2 == 0 {
        return Err(Error::invalid(format!("smoothing kernel {k} must be odd")));
    }
    let r = (k / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    // Separable: rows then columns.
    let mut tmp = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for d in -r..=r {
                s += src[y * width + clamp(x as isize + d, width)];
            }
            tmp[y * width + x] = s / k as f64;
        }
    }
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for d in -r..=r {
                s += tmp[clamp(y as isize + d, height) * width + x];
            }
            out[y * width + x] = s / k as f64;
        }
    }
    Ok(out)
}

/// Hole mask for `rect` smoothed with a `kernel × kernel` mean filter.
pub fn build_blend_mask(height: usize, width: usize, rect: Rect, kernel: usize) -> Result<BlendMask> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::invalid(format!(
            "smoothing kernel must be odd and >= 1, got {kernel}"
        )));
    }
    if rect.top + rect.height > height || rect.left + rect.width > width {
        return Err(Error::invalid("blend region exceeds image bounds"));
    }
    let mut raw = vec![1.0; height * width];
    for y in rect.top..rect.top + rect.height {
        for x in rect.left..rect.left + rect.width {
            raw[y * width + x] = 0.0;
        }
    }
    let smooth = mean_filter(&raw, height, width, kernel)?;
    Ok(BlendMask {
        height,
        width,
        raw,
        smooth,
        rect,
    })
}

// `m·a + (1 − m)·b` arranged so that `mix(m, a, b) + mix(m, b, a)` rounds to
// exactly `a + b`. For non-negative inputs the smaller-first blend is snapped
// to the ulp grid of `s = a + b`, which makes `s − v` exact; the reversed
// blend is then that difference. Equal inputs and coefficients 0 and 1 pass
// values through untouched.
fn mix(m: f64, a: f64, b: f64) -> f64 {
    if a == b || m == 1.0 {
        return a;
    }
    if m == 0.0 {
        return b;
    }
    if a < 0.0 || b < 0.0 || !(a + b).is_finite() {
        return (m * a + (1.0 - m) * b).clamp(a.min(b), a.max(b));
    }
    let s = a + b;
    let snapped = |m: f64, lo: f64, hi: f64| {
        let v = (m * lo + (1.0 - m) * hi).clamp(lo, hi);
        let q = f64::from_bits(s.to_bits() + 1) - s;
        ((v / q).round() * q).clamp(0.0, s)
    };
    if a < b {
        snapped(m, a, b)
    } else {
        s - snapped(m, b, a)
    }
}

/// `mask ⊙ a + (1 − mask) ⊙ b`, broadcasting the mask over channels.
pub fn blend_images(a: &ImageSlice, b: &ImageSlice, mask: &BlendMask) -> Result<ImageSlice> {
    if !a.same_shape(b) || a.height != mask.height || a.width != mask.width {
        return Err(Error::shape(format!(
            "blend of {}x{}x{} and {}x{}x{} with {}x{} mask",
            a.channels, a.height, a.width, b.channels, b.height, b.width, mask.height, mask.width
        )));
    }
    let n = a.plane_len();
    let mut out = ImageSlice::zeros(a.channels, a.height, a.width);
    for (i, o) in out.data.iter_mut().enumerate() {
        let m = mask.smooth[i % n];
        *o = mix(m, a.data[i], b.data[i]);
    }
    Ok(out)
}

/// Per-class convex combination of two label maps with the mask coefficient.
pub fn blend_labels(a: &SoftLabelMap, b: &SoftLabelMap, mask: &BlendMask) -> Result<SoftLabelMap> {
    if !a.same_shape(b) || a.height != mask.height || a.width != mask.width {
        return Err(Error::shape("label blend shape mismatch"));
    }
    let n = a.plane_len();
    let mut out = ClassMap::zeros(a.classes, a.height, a.width);
    for (i, o) in out.data.iter_mut().enumerate() {
        let m = mask.smooth[i % n];
        *o = mix(m, a.data[i], b.data[i]);
    }
    Ok(out)
}

/// Both directions of one soft-mixed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPair {
    /// Unlabeled image outside the hole, labeled image inside.
    pub v1: ImageSlice,
    /// Labeled image outside the hole, unlabeled image inside.
    pub v2: ImageSlice,
    pub l1: SoftLabelMap,
    pub l2: SoftLabelMap,
    pub mask: BlendMask,
}

/// Build the two complementary mixtures for one labeled/pseudo-labeled pair.
pub fn make_complementary_mixtures(
    labeled: (&ImageSlice, &SoftLabelMap),
    pseudo: (&ImageSlice, &SoftLabelMap),
    mask: BlendMask,
) -> Result<MixedPair> {
    let (v_lab, l_lab) = labeled;
    let (v_syn, l_pseudo) = pseudo;
    if l_lab.height != v_lab.height || l_lab.width != v_lab.width {
        return Err(Error::shape("labeled image and label differ in size"));
    }
    Ok(MixedPair {
        v1: blend_images(v_syn, v_lab, &mask)?,
        v2: blend_images(v_lab, v_syn, &mask)?,
        l1: blend_labels(l_pseudo, l_lab, &mask)?,
        l2: blend_labels(l_lab, l_pseudo, &mask)?,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn region_sizing() {
        let mut rng = substream(0, "mask");
        let r = sample_blend_region(12, 12, 2.0 / 3.0, &mut rng).unwrap();
        assert_eq!((r.height, r.width), (8, 8));
        for _ in 0..200 {
            let r = sample_blend_region(9, 9, 2.0 / 3.0, &mut rng).unwrap();
            assert_eq!((r.height, r.width), (6, 6));
            assert!(r.top <= 3 && r.left <= 3);
        }
        assert!(sample_blend_region(1, 1, 0.2, &mut rng).is_err());
        assert!(sample_blend_region(8, 8, 0.0, &mut rng).is_err());
    }

    #[test]
    fn identity_kernel_and_even_kernel() {
        let rect = Rect {
            top: 1,
            left: 2,
            height: 3,
            width: 2,
        };
        let m = build_blend_mask(6, 6, rect, 1).unwrap();
        assert_eq!(m.raw, m.smooth);
        assert_eq!(m.raw.iter().filter(|&&v| v == 0.0).count(), 6);
        assert!(build_blend_mask(6, 6, rect, 2).is_err());
    }

    #[test]
    fn corner_of_hole_averages_six_ones() {
        let rect = Rect {
            top: 2,
            left: 2,
            height: 4,
            width: 4,
        };
        let m = build_blend_mask(8, 8, rect, 3).unwrap();
        // (y=3, x=1): left of the hole, neighbours x in 0..=2, y in 2..=4;
        // x = 2 column is inside the hole -> 3 zeros, 6 ones.
        assert!((m.smooth[3 * 8 + 1] - 6.0 / 9.0).abs() < 1e-15);
        assert!((m.smooth[3 * 8 + 1] - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn paper_blend_example() {
        let a = ImageSlice::filled(1, 1, 1, 100.0);
        let b = ImageSlice::filled(1, 1, 1, 50.0);
        let m = BlendMask::constant(1, 1, 0.6);
        assert_eq!(blend_images(&a, &b, &m).unwrap().data, vec![80.0]);
    }

    #[test]
    fn convex_label_blend() {
        let mut a = ClassMap::zeros(4, 1, 1);
        a.data[1] = 1.0;
        let mut b = ClassMap::zeros(4, 1, 1);
        b.data[2] = 1.0;
        let m = BlendMask::constant(1, 1, 0.6);
        let out = blend_labels(&a, &b, &m).unwrap();
        assert_eq!((out.data[0], out.data[3]), (0.0, 0.0));
        assert!((out.data[1] - 0.6).abs() < 1e-15 && (out.data[2] - 0.4).abs() < 1e-15);
        assert_eq!(out.data[1] + out.data[2], 1.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = ImageSlice::zeros(1, 2, 2);
        let b = ImageSlice::zeros(1, 2, 3);
        let m = BlendMask::constant(2, 2, 0.5);
        assert!(blend_images(&a, &b, &m).is_err());
    }
}
