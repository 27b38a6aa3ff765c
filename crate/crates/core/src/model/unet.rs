//! Small encoder-decoder segmentation network with skip connections.
//!
//! Each encoder level applies two 3×3 conv + ReLU blocks; levels are joined
//! by 2×2 max pooling. Each decoder level upsamples ×2 (nearest), concatenates
//! the matching encoder output and applies one 3×3 conv + ReLU. A 1×1 head
//! produces per-class logits.

use serde::{Deserialize, Serialize};

use super::layers::{
    maxpool2, maxpool2_backward, relu_backward, relu_inplace, upsample2, upsample2_backward, Conv2d,
};
use super::{Mode, SegmentationModel};
use crate::error::{Error, Result};
use crate::rng::{normal, substream, stream};
use crate::tensor::{ClassMap, ImageSlice, LogitMap, ParameterVector};

/// Architecture of [`ReferenceNet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceNetSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Channel width of each resolution level, finest first.
    pub widths: Vec<usize>,
}

impl Default for ReferenceNetSpec {
    fn default() -> Self {
        Self {
            in_channels: 1,
            num_classes: 3,
            widths: vec![16, 32, 64],
        }
    }
}

impl ReferenceNetSpec {
    /// Inputs must be divisible by this along both axes.
    pub fn divisor(&self) -> usize {
        1 << (self.widths.len() - 1)
    }
}

#[derive(Debug, Clone)]
struct Level {
    conv_a: Conv2d,
    conv_b: Conv2d,
}

#[derive(Debug, Default)]
struct EncoderCache {
    input: Vec<f64>,
    mid: Vec<f64>,
    out: Vec<f64>,
    pool_idx: Vec<u32>,
}

#[derive(Debug, Default)]
struct DecoderCache {
    concat: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Default)]
struct SampleCache {
    enc: Vec<EncoderCache>,
    dec: Vec<DecoderCache>,
    head_input: Vec<f64>,
}

/// Reference segmentation network with hand-written backpropagation.
#[derive(Debug)]
pub struct ReferenceNet {
    spec: ReferenceNetSpec,
    encoder: Vec<Level>,
    /// `decoder[i]` produces level `i` from level `i + 1`.
    decoder: Vec<Conv2d>,
    head: Conv2d,
    params: Vec<f64>,
    mode: Mode,
    cache: Option<(usize, usize, Vec<SampleCache>)>,
}

impl ReferenceNet {
    /// Network with He-normal weights drawn from the seed's `init` stream.
    pub fn new(spec: ReferenceNetSpec, seed: u64) -> Result<Self> {
        if spec.widths.is_empty() || spec.widths.contains(&0) {
            return Err(Error::invalid("network widths must be non-empty and positive"));
        }
        if spec.in_channels == 0 || spec.num_classes < 2 {
            return Err(Error::invalid("need >= 1 input channel and >= 2 classes"));
        }
        let mut off = 0;
        let mut encoder = Vec::new();
        let mut cin = spec.in_channels;
        for &w in &spec.widths {
            let conv_a = Conv2d::new(cin, w, 3, &mut off);
            let conv_b = Conv2d::new(w, w, 3, &mut off);
            encoder.push(Level { conv_a, conv_b });
            cin = w;
        }
        let levels = spec.widths.len();
        let mut decoder = Vec::new();
        for i in 0..levels - 1 {
            let below = spec.widths[i + 1];
            decoder.push(Conv2d::new(below + spec.widths[i], spec.widths[i], 3, &mut off));
        }
        let head = Conv2d::new(spec.widths[0], spec.num_classes, 1, &mut off);

        let mut params = vec![0.0; off];
        let mut rng = substream(seed, stream::INIT);
        let mut init = |conv: &Conv2d, gain: f64| {
            let std = (gain / conv.fan_in() as f64).sqrt();
            for p in &mut params[conv.w_off..conv.b_off] {
                *p = std * normal(&mut rng);
            }
        };
        for level in &encoder {
            init(&level.conv_a, 2.0);
            init(&level.conv_b, 2.0);
        }
        for conv in &decoder {
            init(conv, 2.0);
        }
        init(&head, 1.0);

        Ok(Self {
            spec,
            encoder,
            decoder,
            head,
            params,
            mode: Mode::Train,
            cache: None,
        })
    }

    pub fn spec(&self) -> &ReferenceNetSpec {
        &self.spec
    }

    fn check_input(&self, images: &[ImageSlice]) -> Result<(usize, usize)> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("empty image batch"))?;
        let (h, w) = (first.height, first.width);
        let d = self.spec.divisor();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} not divisible by {d}"
            )));
        }
        for img in images {
            if img.channels != self.spec.in_channels || img.height != h || img.width != w {
                return Err(Error::shape(format!(
                    "expected {}x{h}x{w} input, got {}x{}x{}",
                    self.spec.in_channels, img.channels, img.height, img.width
                )));
            }
        }
        Ok((h, w))
    }

    fn forward_one(&self, image: &ImageSlice, keep: bool) -> (LogitMap, Option<SampleCache>) {
        let params = &self.params;
        let levels = self.encoder.len();
        let mut cols = Vec::new();
        let mut cache = SampleCache::default();
        let (mut h, mut w) = (image.height, image.width);
        let mut x = image.data.clone();
        let mut skips: Vec<Vec<f64>> = Vec::with_capacity(levels);

        for (i, level) in self.encoder.iter().enumerate() {
            let mut mid = vec![0.0; level.conv_a.cout * h * w];
            level.conv_a.forward(params, &x, h, w, &mut mid, &mut cols);
            relu_inplace(&mut mid);
            let mut out = vec![0.0; level.conv_b.cout * h * w];
            level.conv_b.forward(params, &mid, h, w, &mut out, &mut cols);
            relu_inplace(&mut out);
            let mut pool_idx = Vec::new();
            let next = if i + 1 < levels {
                let (p, idx) = maxpool2(&out, level.conv_b.cout, h, w);
                pool_idx = idx;
                Some(p)
            } else {
                None
            };
            skips.push(out.clone());
            if keep {
                cache.enc.push(EncoderCache {
                    input: std::mem::take(&mut x),
                    mid,
                    out,
                    pool_idx,
                });
            }
            if let Some(p) = next {
                x = p;
                h /= 2;
                w /= 2;
            }
        }

        let mut below = skips.pop().unwrap_or_default();
        let mut dec_caches: Vec<DecoderCache> = Vec::new();
        for i in (0..levels - 1).rev() {
            let conv = &self.decoder[i];
            let below_c = self.spec.widths[i + 1];
            let up = upsample2(&below, below_c, h, w);
            h *= 2;
            w *= 2;
            let skip = skips.pop().unwrap_or_default();
            let mut concat = up;
            concat.extend_from_slice(&skip);
            let mut out = vec![0.0; conv.cout * h * w];
            conv.forward(params, &concat, h, w, &mut out, &mut cols);
            relu_inplace(&mut out);
            below = out.clone();
            if keep {
                dec_caches.push(DecoderCache { concat, out });
            }
        }
        dec_caches.reverse();
        cache.dec = dec_caches;

        let mut logits = vec![0.0; self.spec.num_classes * h * w];
        self.head.forward(params, &below, h, w, &mut logits, &mut cols);
        if keep {
            cache.head_input = below;
        }
        let map = ClassMap {
            classes: self.spec.num_classes,
            height: h,
            width: w,
            data: logits,
        };
        (map, keep.then_some(cache))
    }

    fn backward_one(&self, cache: &SampleCache, h0: usize, w0: usize, grad: &LogitMap, grads: &mut [f64]) {
        let params = &self.params;
        let levels = self.encoder.len();
        let mut cols = Vec::new();
        let (mut h, mut w) = (h0, w0);

        let mut d_below = vec![0.0; self.spec.widths[0] * h * w];
        self.head
            .backward(params, &cache.head_input, h, w, &grad.data, grads, Some(&mut d_below), &mut cols);

        // Gradient arriving at each encoder output through its skip.
        let mut d_skip: Vec<Vec<f64>> = vec![Vec::new(); levels];
        for i in 0..levels - 1 {
            let conv = &self.decoder[i];
            let dc = &cache.dec[i];
            relu_backward(&dc.out, &mut d_below);
            let mut d_concat = vec![0.0; conv.cin * h * w];
            conv.backward(params, &dc.concat, h, w, &d_below, grads, Some(&mut d_concat), &mut cols);
            let below_c = self.spec.widths[i + 1];
            let split = below_c * h * w;
            d_skip[i] = d_concat[split..].to_vec();
            d_below = upsample2_backward(&d_concat[..split], below_c, h / 2, w / 2);
            h /= 2;
            w /= 2;
        }
        // d_below now holds the gradient at the deepest encoder output.
        d_skip[levels - 1] = d_below;

        let mut d_next: Option<Vec<f64>> = None;
        for i in (0..levels).rev() {
            let level = &self.encoder[i];
            let ec = &cache.enc[i];
            let mut d_out = std::mem::take(&mut d_skip[i]);
            if let Some(dp) = d_next.take() {
                maxpool2_backward(&dp, &ec.pool_idx, &mut d_out);
            }
            relu_backward(&ec.out, &mut d_out);
            let mut d_mid = vec![0.0; level.conv_a.cout * h * w];
            level
                .conv_b
                .backward(params, &ec.mid, h, w, &d_out, grads, Some(&mut d_mid), &mut cols);
            relu_backward(&ec.mid, &mut d_mid);
            if i > 0 {
                let mut d_in = vec![0.0; level.conv_a.cin * h * w];
                level
                    .conv_a
                    .backward(params, &ec.input, h, w, &d_mid, grads, Some(&mut d_in), &mut cols);
                d_next = Some(d_in);
                h *= 2;
                w *= 2;
            } else {
                level
                    .conv_a
                    .backward(params, &ec.input, h, w, &d_mid, grads, None, &mut cols);
            }
        }
    }
}

impl SegmentationModel for ReferenceNet {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn in_channels(&self) -> usize {
        self.spec.in_channels
    }

    fn forward(&mut self, images: &[ImageSlice]) -> Result<Vec<LogitMap>> {
        let (h, w) = self.check_input(images)?;
        let keep = self.mode == Mode::Train;
        let mut out = Vec::with_capacity(images.len());
        let mut caches = Vec::new();
        for img in images {
            let (logits, cache) = self.forward_one(img, keep);
            out.push(logits);
            caches.extend(cache);
        }
        self.cache = keep.then_some((h, w, caches));
        Ok(out)
    }

    fn backward(&mut self, grad_logits: &[LogitMap]) -> Result<ParameterVector> {
        let (h, w, caches) = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("backward without a cached training-mode forward"))?;
        if caches.len() != grad_logits.len() {
            return Err(Error::shape(format!(
                "{} logit gradients for a batch of {}",
                grad_logits.len(),
                caches.len()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        for (cache, g) in caches.iter().zip(grad_logits) {
            if g.classes != self.spec.num_classes || g.height != h || g.width != w {
                return Err(Error::shape("logit gradient shape differs from forward output"));
            }
            self.backward_one(cache, h, w, g, &mut grads);
        }
        Ok(ParameterVector(grads))
    }

    fn infer(&self, images: &[ImageSlice]) -> Result<Vec<LogitMap>> {
        self.check_input(images)?;
        Ok(images.iter().map(|img| self.forward_one(img, false).0).collect())
    }

    fn params(&self) -> ParameterVector {
        ParameterVector(self.params.clone())
    }

    fn set_params(&mut self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "model has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        self.cache = None;
        Ok(())
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        if mode == Mode::Inference {
            self.cache = None;
        }
    }
}
