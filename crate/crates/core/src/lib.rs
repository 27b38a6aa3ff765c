//! Semi-supervised medical image segmentation with synthetic unlabeled data.
//!
//! An EMA teacher pseudo-labels unlabeled images, soft-mix augmentation
//! blends them with labeled images under a smoothed rectangular mask, and
//! the student minimises soft Dice + soft cross-entropy together with a
//! similarity-alignment term that pulls embeddings of the mixed images
//! toward their nearest labeled-image embedding in a frozen feature space.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod pseudo_label;
pub mod rng;
pub mod soft_mix;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{ClassMap, EmbeddingBatch, HardLabelMap, ImageSlice, LogitMap, ParameterVector, SoftLabelMap};
