//! Dataset ingestion, splits, configuration and the embedding file format.

mod config;
mod embeddings;
mod manifest;
mod raster;

pub use config::{LrSchedule, RunConfig};
pub use embeddings::{read_embeddings, write_embeddings, EMBEDDING_MAGIC, EMBEDDING_VERSION};
pub use manifest::{
    make_splits, DatasetManifest, ManifestEntry, Pool, SplitManifest, SplitPool, MANIFEST_HEADER, SPLIT_HEADER,
};
pub use raster::{load_image, load_mask, load_pair, min_max_normalize, save_image_u8, save_mask};
