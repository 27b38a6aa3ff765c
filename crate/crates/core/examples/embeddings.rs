//! The binary embedding exchange file: header plus little-endian f32 rows.
//!
//! cargo run --example embeddings

use sraseg::data_io::{read_embeddings, write_embeddings};
use sraseg::model::{stub_extractor, FeatureExtractor};
use sraseg::ImageSlice;

fn main() -> sraseg::Result<()> {
    let extractor = stub_extractor(0, 8)?;
    let images: Vec<ImageSlice> = (0..3).map(|i| ImageSlice::filled(1, 32, 32, 0.25 * i as f64)).collect();
    let emb = extractor.embed(&images)?;
    let bytes = write_embeddings(&emb)?;
    println!("{} x {} embeddings -> {} bytes, magic {:?}", emb.rows, emb.dim, bytes.len(), &bytes[..4]);
    let back = read_embeddings(&bytes)?;
    for i in 0..back.rows {
        let row: Vec<String> = back.row(i).iter().map(|v| format!("{v:+.3}")).collect();
        println!("  {}", row.join(" "));
    }
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    println!("corrupted header: {}", read_embeddings(&bad).unwrap_err());
    Ok(())
}
