//! Segmentation models, frozen feature extractors and checkpoints.

mod checkpoint;
mod extractor;
mod layers;
mod unet;

pub use checkpoint::Checkpoint;
pub use extractor::{
    resize_bilinear, resize_bilinear_transpose, sa_input, sa_input_backward, FeatureExtractor, InputSpec,
    Normalization, SaInputMode, StubExtractor,
};
pub use unet::{ReferenceNet, ReferenceNetSpec};

use crate::error::Result;
use crate::tensor::{ImageSlice, LogitMap, ParameterVector};

/// Whether a model records activations for a later backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// A trainable per-pixel classifier.
pub trait SegmentationModel: Send + Sync {
    fn num_classes(&self) -> usize;

    fn in_channels(&self) -> usize;

    /// Logits for a batch. In [`Mode::Train`] the activations are kept for
    /// the next [`backward`](Self::backward).
    fn forward(&mut self, images: &[ImageSlice]) -> Result<Vec<LogitMap>>;

    /// Parameter gradient given the gradient of the loss with respect to
    /// the logits of the most recent training-mode forward.
    fn backward(&mut self, grad_logits: &[LogitMap]) -> Result<ParameterVector>;

    /// Forward pass that leaves the model untouched.
    fn infer(&self, images: &[ImageSlice]) -> Result<Vec<LogitMap>>;

    fn params(&self) -> ParameterVector;

    fn set_params(&mut self, params: &ParameterVector) -> Result<()>;

    fn mode(&self) -> Mode;

    fn set_mode(&mut self, mode: Mode);
}

/// Build the reference network from its spec and seed.
pub fn reference_net(spec: ReferenceNetSpec, seed: u64) -> Result<ReferenceNet> {
    ReferenceNet::new(spec, seed)
}

/// Build the linear stub extractor.
pub fn stub_extractor(seed: u64, dim: usize) -> Result<StubExtractor> {
    StubExtractor::new(seed, dim)
}
