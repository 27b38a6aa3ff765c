//! Versioned binary checkpoint container.
//!
//! Layout (little-endian): magic `SRAC`, version `u32`, iteration `u64`,
//! best score `f64`, network spec (`in_channels`, `num_classes`, level
//! count, widths; all `u32`), RNG count `u32` then per RNG a 32-byte seed,
//! `u64` stream and `u128` word position, vector count `u32` then per
//! vector a `u64` length and its `f64` values. Vectors are student,
//! teacher and optimizer velocity in that order.

use std::io::Write;
use std::path::Path;

use super::ReferenceNetSpec;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::ParameterVector;

const MAGIC: &[u8; 4] = b"SRAC";
const VERSION: u32 = 1;

/// Everything needed to resume or deploy a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub best_score: f64,
    pub spec: ReferenceNetSpec,
    pub student: ParameterVector,
    pub teacher: ParameterVector,
    pub velocity: ParameterVector,
    pub rngs: Vec<RngState>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.best_score.to_le_bytes());
        out.extend_from_slice(&(self.spec.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.widths.len() as u32).to_le_bytes());
        for &w in &self.spec.widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.rngs.len() as u32).to_le_bytes());
        for r in &self.rngs {
            out.extend_from_slice(&r.seed);
            out.extend_from_slice(&r.stream.to_le_bytes());
            out.extend_from_slice(&r.word_pos.to_le_bytes());
        }
        let vectors = [&self.student, &self.teacher, &self.velocity];
        out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
        for v in vectors {
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let iteration = r.u64()?;
        let best_score = r.f64()?;
        let in_channels = r.u32()? as usize;
        let num_classes = r.u32()? as usize;
        let levels = r.u32()? as usize;
        let widths = (0..levels)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_rng = r.u32()? as usize;
        let mut rngs = Vec::with_capacity(n_rng);
        for _ in 0..n_rng {
            let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
            let stream = r.u64()?;
            let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
            rngs.push(RngState {
                seed,
                stream,
                word_pos,
            });
        }
        let n_vec = r.u32()?;
        if n_vec != 3 {
            return Err(Error::Format(format!("expected 3 parameter vectors, found {n_vec}")));
        }
        let mut vecs = Vec::with_capacity(3);
        for _ in 0..3 {
            let len = r.u64()? as usize;
            if len.saturating_mul(8) > buf.len() {
                return Err(Error::Format("truncated checkpoint".into()));
            }
            let v = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            vecs.push(ParameterVector(v));
        }
        if r.pos != buf.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let velocity = vecs.pop().unwrap();
        let teacher = vecs.pop().unwrap();
        let student = vecs.pop().unwrap();
        Ok(Self {
            iteration,
            best_score,
            spec: ReferenceNetSpec {
                in_channels,
                num_classes,
                widths,
            },
            student,
            teacher,
            velocity,
            rngs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
