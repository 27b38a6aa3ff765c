//! Frozen feature extractors and the construction of their inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal, substream, stream};
use crate::tensor::{ClassMap, EmbeddingBatch, ImageSlice, SoftLabelMap};

/// Per-channel input normalisation applied before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    None,
    MeanStd { mean: Vec<f64>, std: Vec<f64> },
}

/// What an extractor expects to be fed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub normalization: Normalization,
}

/// A frozen image-embedding network.
///
/// `embed` must be deterministic and must not change any internal state.
pub trait FeatureExtractor: Send + Sync {
    fn input_spec(&self) -> &InputSpec;

    fn dim(&self) -> usize;

    fn embed(&self, images: &[ImageSlice]) -> Result<EmbeddingBatch>;

    /// Gradient of `⟨grad, embed(images)⟩` with respect to `images`.
    ///
    /// `None` means the extractor offers no input gradient; such an
    /// extractor only supports the `raw_image` alignment input in training.
    fn embed_vjp(&self, _images: &[ImageSlice], _grad: &EmbeddingBatch) -> Result<Option<Vec<ImageSlice>>> {
        Ok(None)
    }
}

/// Source taps and weights of 1D bilinear resampling (half-pixel centres).
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of one plane.
pub fn resize_bilinear(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let ty = axis_taps(h, oh);
    let tx = axis_taps(w, ow);
    let mut out = vec![0.0; oh * ow];
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Transpose of [`resize_bilinear`]: scatter an output-size gradient back.
pub fn resize_bilinear_transpose(grad: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let ty = axis_taps(h, oh);
    let tx = axis_taps(w, ow);
    let mut out = vec![0.0; h * w];
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let g = grad[oy * ow + ox];
            out[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
            out[y0 * w + x1] += g * (1.0 - fy) * fx;
            out[y1 * w + x0] += g * fy * (1.0 - fx);
            out[y1 * w + x1] += g * fy * fx;
        }
    }
    out
}

/// Deterministic linear stand-in for a pretrained extractor.
///
/// Averages channels, resizes to 16×16 bilinearly and applies a fixed
/// seeded random projection. Being linear, it is exactly differentiable.
#[derive(Debug, Clone)]
pub struct StubExtractor {
    spec: InputSpec,
    dim: usize,
    /// `dim × (16·16)` row-major.
    projection: Vec<f64>,
}

impl StubExtractor {
    pub const SIDE: usize = 16;

    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be >= 1"));
        }
        let n = Self::SIDE * Self::SIDE;
        let mut rng = substream(seed, stream::EXTRACTOR);
        let std = 1.0 / (n as f64).sqrt();
        let projection = (0..dim * n).map(|_| std * normal(&mut rng)).collect();
        Ok(Self {
            spec: InputSpec {
                height: Self::SIDE,
                width: Self::SIDE,
                channels: 1,
                normalization: Normalization::None,
            },
            dim,
            projection,
        })
    }

    fn reduce(&self, img: &ImageSlice) -> Vec<f64> {
        let n = img.plane_len();
        let mut mean = vec![0.0; n];
        for c in 0..img.channels {
            for (m, v) in mean.iter_mut().zip(img.plane(c)) {
                *m += v;
            }
        }
        let inv = 1.0 / img.channels as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        resize_bilinear(&mean, img.height, img.width, Self::SIDE, Self::SIDE)
    }
}

impl FeatureExtractor for StubExtractor {
    fn input_spec(&self) -> &InputSpec {
        &self.spec
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, images: &[ImageSlice]) -> Result<EmbeddingBatch> {
        let n = Self::SIDE * Self::SIDE;
        let mut out = EmbeddingBatch::zeros(images.len(), self.dim);
        for (i, img) in images.iter().enumerate() {
            if img.plane_len() == 0 || img.channels == 0 {
                return Err(Error::shape("empty image"));
            }
            let v = self.reduce(img);
            for (d, o) in out.row_mut(i).iter_mut().enumerate() {
                let row = &self.projection[d * n..(d + 1) * n];
                *o = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    fn embed_vjp(&self, images: &[ImageSlice], grad: &EmbeddingBatch) -> Result<Option<Vec<ImageSlice>>> {
        if grad.rows != images.len() || grad.dim != self.dim {
            return Err(Error::shape("embedding gradient does not match batch"));
        }
        let n = Self::SIDE * Self::SIDE;
        let mut out = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let mut g_small = vec![0.0; n];
            for (d, &g) in grad.row(i).iter().enumerate() {
                let row = &self.projection[d * n..(d + 1) * n];
                for (s, &p) in g_small.iter_mut().zip(row) {
                    *s += g * p;
                }
            }
            let g_plane = resize_bilinear_transpose(&g_small, img.height, img.width, Self::SIDE, Self::SIDE);
            let inv = 1.0 / img.channels as f64;
            let mut gi = ImageSlice::zeros(img.channels, img.height, img.width);
            for c in 0..img.channels {
                let np = img.plane_len();
                for (o, &g) in gi.data[c * np..(c + 1) * np].iter_mut().zip(&g_plane) {
                    *o = g * inv;
                }
            }
            out.push(gi);
        }
        Ok(Some(out))
    }
}

/// Which tensor is embedded for the alignment loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaInputMode {
    /// The image itself; the alignment term then has no parameter gradient.
    RawImage,
    /// Image scaled by the predicted foreground probability `1 − p₀`.
    #[default]
    ProbWeightedImage,
    /// The class probabilities: stacked when the extractor takes one channel
    /// per class, otherwise the expected normalised class index on every
    /// channel.
    ProbMap,
}

fn check_sa_shapes(image: &ImageSlice, probs: &SoftLabelMap) -> Result<()> {
    if image.height != probs.height || image.width != probs.width {
        return Err(Error::shape("alignment input: image and probabilities differ in size"));
    }
    Ok(())
}

/// Build the extractor input for one image and its class probabilities.
pub fn sa_input(image: &ImageSlice, probs: &SoftLabelMap, mode: SaInputMode, channels: usize) -> Result<ImageSlice> {
    check_sa_shapes(image, probs)?;
    let n = image.plane_len();
    match mode {
        SaInputMode::RawImage => Ok(image.clone()),
        SaInputMode::ProbWeightedImage => {
            let mut out = image.clone();
            for c in 0..image.channels {
                for (o, &p0) in out.data[c * n..(c + 1) * n].iter_mut().zip(probs.plane(0)) {
                    *o *= 1.0 - p0;
                }
            }
            Ok(out)
        }
        SaInputMode::ProbMap => {
            if channels == probs.classes {
                return ImageSlice::from_vec(channels, probs.height, probs.width, probs.data.clone());
            }
            let denom = (probs.classes - 1) as f64;
            let mut plane = vec![0.0; n];
            for k in 1..probs.classes {
                let wk = k as f64 / denom;
                for (o, &p) in plane.iter_mut().zip(probs.plane(k)) {
                    *o += wk * p;
                }
            }
            let data = (0..channels).flat_map(|_| plane.iter().copied()).collect();
            ImageSlice::from_vec(channels, probs.height, probs.width, data)
        }
    }
}

/// Gradient of [`sa_input`] with respect to the probabilities.
pub fn sa_input_backward(
    image: &ImageSlice,
    probs: &SoftLabelMap,
    mode: SaInputMode,
    grad_out: &ImageSlice,
) -> Result<ClassMap> {
    check_sa_shapes(image, probs)?;
    let n = image.plane_len();
    let mut g = ClassMap::zeros(probs.classes, probs.height, probs.width);
    match mode {
        SaInputMode::RawImage => {}
        SaInputMode::ProbWeightedImage => {
            if !grad_out.same_shape(image) {
                return Err(Error::shape("alignment gradient does not match image"));
            }
            for c in 0..image.channels {
                let img = image.plane(c);
                let go = grad_out.plane(c);
                for p in 0..n {
                    g.data[p] -= img[p] * go[p];
                }
            }
        }
        SaInputMode::ProbMap => {
            if grad_out.channels == probs.classes {
                g.data.copy_from_slice(&grad_out.data);
            } else {
                let denom = (probs.classes - 1) as f64;
                for c in 0..grad_out.channels {
                    let go = grad_out.plane(c);
                    for k in 1..probs.classes {
                        let wk = k as f64 / denom;
                        for p in 0..n {
                            g.data[k * n + p] += wk * go[p];
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}
