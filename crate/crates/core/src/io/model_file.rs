//! Binary model format.
//!
//! ```text
//! "ALSF"                      4 bytes
//! version                     u32
//! d, C                        u32, u32
//! k_1 .. k_C, k_0             u32 each
//! C labels                    u32 byte length + UTF-8 bytes each
//! D_1 .. D_C, D_0             row-major f64
//! A_1 .. A_C, A_0             row-major f64
//! CRC-32 of all bytes above   u32
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::AlsfModel;
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"ALSF";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::CorruptModel(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

pub fn encode_model(model: &AlsfModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, model.dim())?;
    put_u32(&mut out, model.num_classes())?;
    for k in model.class_atoms() {
        put_u32(&mut out, k)?;
    }
    put_u32(&mut out, model.shared_atoms())?;
    for label in &model.labels {
        put_u32(&mut out, label.len())?;
        out.extend_from_slice(label.as_bytes());
    }
    for d in &model.class_dicts {
        put_matrix(&mut out, d);
    }
    put_matrix(&mut out, &model.shared_dict);
    for a in &model.class_analysis {
        put_matrix(&mut out, a);
    }
    put_matrix(&mut out, &model.shared_analysis);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptModel("truncated model file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CorruptModel("block size overflow".into()))?;
        let raw = self.take(len)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix::from_row_slice(rows, cols, &values))
    }
}

/// Parses a model file. The version is checked before the checksum so a
/// file from another format version reports [`Error::VersionMismatch`].
pub fn decode_model(bytes: &[u8]) -> Result<AlsfModel> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::CorruptModel("missing ALSF magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumFailure);
    }

    let mut r = Reader { bytes: body, at: 8 };
    let d = r.usize()?;
    let c = r.usize()?;
    if c == 0 || d == 0 {
        return Err(Error::CorruptModel(format!("d = {d}, C = {c}")));
    }
    let ks = (0..c).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let k0 = r.usize()?;
    let mut labels = Vec::with_capacity(c);
    for _ in 0..c {
        let n = r.usize()?;
        let raw = r.take(n)?;
        labels.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::CorruptModel("label is not UTF-8".into()))?,
        );
    }
    let class_dicts = ks.iter().map(|&k| r.matrix(d, k)).collect::<Result<Vec<_>>>()?;
    let shared_dict = r.matrix(d, k0)?;
    let class_analysis = ks.iter().map(|&k| r.matrix(k, d)).collect::<Result<Vec<_>>>()?;
    let shared_analysis = r.matrix(k0, d)?;
    if r.at != body.len() {
        return Err(Error::CorruptModel(format!(
            "{} trailing bytes after the last block",
            body.len() - r.at
        )));
    }
    let model = AlsfModel {
        class_dicts,
        shared_dict,
        class_analysis,
        shared_analysis,
        labels,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &AlsfModel, path: &Path) -> Result<()> {
    super::atomic_write(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<AlsfModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
