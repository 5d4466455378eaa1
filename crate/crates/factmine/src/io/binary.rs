//! Little-endian binary checkpoints for encoder parameters and indexes.

use std::path::Path;

use factmine_core::index::RowMeta;
use factmine_core::{EmbeddingIndex, EncoderParams};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"FMCKPT\0\0";
const INDEX_MAGIC: &[u8; 8] = b"FMINDEX\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const INDEX_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    /// Seed the parameters were trained with.
    pub seed: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: &str) -> Error {
        Error::BadBinary {
            path: self.path.to_path_buf(),
            message: format!("{message} at byte {}", self.at),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| self.fail("unexpected end of file"))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.fail("size out of range"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.fail("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.fail("invalid UTF-8"))
    }

    fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<()> {
        if self.take(8)? != magic {
            return Err(self.fail("bad magic"));
        }
        let found = self.u32()?;
        if found != version {
            return Err(Error::SchemaVersion {
                path: self.path.to_path_buf(),
                found: found.to_string(),
                expected: version.to_string(),
            });
        }
        Ok(())
    }

    fn end(&self) -> Result<()> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(self.fail("trailing bytes"))
        }
    }
}

/// Layout: magic, version u32, E, D_img, D_txt (u64), tau f64, seed u64,
/// then W_q and W_d as row-major f64.
pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let mut w = Writer(Vec::with_capacity(48 + 8 * p.param_count()));
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(p.embed_dim as u64);
    w.u64(p.image_dim as u64);
    w.u64(p.text_dim as u64);
    w.f64s(&[p.temperature]);
    w.u64(ckpt.seed);
    w.f64s(&p.query_proj);
    w.f64s(&p.doc_proj);
    w.0
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_bytes(path, &checkpoint_bytes(ckpt))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = read_bytes(path)?;
    let mut r = Reader { path, buf: &buf, at: 0 };
    r.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let e = r.usize()?;
    let d_img = r.usize()?;
    let d_txt = r.usize()?;
    let tau = r.f64()?;
    let seed = r.u64()?;
    let q = r.f64s(d_img.saturating_mul(e))?;
    let d = r.f64s((d_img + d_txt).saturating_mul(e))?;
    r.end()?;
    let params = EncoderParams::new(d_img, d_txt, e, tau, q, d)?;
    Ok(Checkpoint { params, seed })
}

/// Layout: magic, version u32, n, E (u64), n ids, n (patient id, report
/// chars) entries, then the n x E matrix.
pub fn write_index(path: &Path, index: &EmbeddingIndex) -> Result<()> {
    let mut w = Writer(Vec::with_capacity(28 + index.len() * (8 * index.dim() + 32)));
    w.0.extend_from_slice(INDEX_MAGIC);
    w.u32(INDEX_VERSION);
    w.u64(index.len() as u64);
    w.u64(index.dim() as u64);
    for id in index.doc_ids() {
        w.str(id);
    }
    for m in index.meta() {
        w.str(&m.patient_id);
        w.u64(m.report_chars as u64);
    }
    w.f64s(index.matrix());
    write_bytes(path, &w.0)
}

pub fn read_index(path: &Path) -> Result<EmbeddingIndex> {
    let buf = read_bytes(path)?;
    let mut r = Reader { path, buf: &buf, at: 0 };
    r.header(INDEX_MAGIC, INDEX_VERSION)?;
    let n = r.usize()?;
    let e = r.usize()?;
    let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let meta = (0..n)
        .map(|_| {
            Ok(RowMeta {
                patient_id: r.str()?,
                report_chars: r.usize()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = r.f64s(n.saturating_mul(e))?;
    r.end()?;
    Ok(EmbeddingIndex::from_parts(e, ids, meta, matrix)?)
}
