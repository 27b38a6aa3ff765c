//! Binary embedding exchange format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SRAE"
//! 4       4     version (u32 LE) = 1
//! 8       4     row count M (u32 LE)
//! 12      4     dimension D (u32 LE)
//! 16      4·M·D row-major f32 LE payload
//! ```

use crate::error::{Error, Result};
use crate::tensor::EmbeddingBatch;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SRAE";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Serialize a batch as 32-bit floats.
pub fn write_embeddings(batch: &EmbeddingBatch) -> Result<Vec<u8>> {
    if batch.data.len() != batch.rows * batch.dim {
        return Err(Error::shape("embedding buffer does not match its dimensions"));
    }
    let rows = u32::try_from(batch.rows).map_err(|_| Error::invalid("too many embedding rows"))?;
    let dim = u32::try_from(batch.dim).map_err(|_| Error::invalid("embedding dimension too large"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * batch.data.len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (i, &v) in batch.data.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!(
                "embedding value at row {} column {}",
                i / batch.dim.max(1),
                i % batch.dim.max(1)
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Parse a batch written by [`write_embeddings`].
pub fn read_embeddings(bytes: &[u8]) -> Result<EmbeddingBatch> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("embedding file shorter than its header".into()));
    }
    if &bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("bad embedding magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let rows = word(8) as usize;
    let dim = word(12) as usize;
    let expect = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("embedding size overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expect {
        return Err(Error::Format(format!(
            "embedding payload is {} bytes, header implies {expect}",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * dim);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite("embedding payload".into()));
        }
        data.push(f64::from(v));
    }
    EmbeddingBatch::from_vec(rows, dim, data)
}
