//! Plugging in a different frozen feature extractor.
//!
//! This one embeds an image as its 8-bin intensity histogram. It offers no
//! input gradient, so the alignment loss is computed on raw images and only
//! reported, not optimised.
//!
//! cargo run --release --example custom_extractor

use sraseg::data_io::RunConfig;
use sraseg::model::{reference_net, FeatureExtractor, InputSpec, Normalization};
use sraseg::rng::substream;
use sraseg::toy::{apply_domain_shift, rasterize, render, sample_shapes};
use sraseg::trainer::{LabeledBatch, Learner};
use sraseg::{EmbeddingBatch, ImageSlice};

struct Histogram {
    spec: InputSpec,
}

impl FeatureExtractor for Histogram {
    fn input_spec(&self) -> &InputSpec {
        &self.spec
    }

    fn dim(&self) -> usize {
        8
    }

    fn embed(&self, images: &[ImageSlice]) -> sraseg::Result<EmbeddingBatch> {
        let mut out = EmbeddingBatch::zeros(images.len(), 8);
        for (i, img) in images.iter().enumerate() {
            let row = out.row_mut(i);
            for v in &img.data {
                row[((v * 8.0) as usize).min(7)] += 1.0 / img.data.len() as f64;
            }
        }
        Ok(out)
    }
}

fn main() -> sraseg::Result<()> {
    let cfg = RunConfig::resolve(
        None,
        &["widths=[4,8]".into(), "sa_input_mode=\"raw_image\"".into(), "batch_labeled=2".into(), "batch_unlabeled=2".into()],
    )?;
    let net = || reference_net(cfg.net_spec(), cfg.seed).map(Box::new);
    let hist = Histogram {
        spec: InputSpec {
            height: 32,
            width: 32,
            channels: 1,
            normalization: Normalization::None,
        },
    };
    let mut learner = Learner::with_parts(&cfg, net()?, net()?, Box::new(hist))?;

    let mut rng = substream(1, "toy");
    let mut images = Vec::new();
    let mut masks = Vec::new();
    for _ in 0..2 {
        let m = rasterize(&sample_shapes(&mut rng, 32), 32);
        images.push(render(&m, &mut rng));
        masks.push(m);
    }
    let synthetic: Vec<ImageSlice> = images.iter().map(|i| apply_domain_shift(i, 0.3)).collect();
    let batch = LabeledBatch::from_masks(images, &masks, cfg.num_classes)?;
    let mut mask_rng = substream(cfg.seed, "mask");
    for _ in 0..5 {
        println!("{}", learner.train_step(&batch, &synthetic, &mut mask_rng)?);
    }
    Ok(())
}
