//! Binary model checkpoint.
//!
//! Layout: magic `SCENECKP`, `u32` version, `u32` header length, a JSON
//! header, then for every tensor: `u32` name length, name bytes, `u32` rows,
//! `u32` cols, `rows * cols` little-endian `f32` values. All integers are
//! little-endian.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::boundary::{init_bnet_params, BNetConfig};
use crate::data::Modality;
use crate::error::{Error, Result};
use crate::sequence::init_seq_params;
use crate::train::Model;

const MAGIC: &[u8; 8] = b"SCENECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub bnet: BNetConfig,
    pub modality_dims: IndexMap<Modality, usize>,
    pub hidden: usize,
    pub w_t: usize,
    /// Free-form provenance such as the training seed.
    #[serde(default)]
    pub meta: IndexMap<String, String>,
}

impl CheckpointHeader {
    pub fn of(model: &Model) -> Self {
        Self {
            bnet: model.bnet.config,
            modality_dims: model.bnet.modalities().collect(),
            hidden: model.seq.hidden(),
            w_t: model.seq.w_t,
            meta: IndexMap::new(),
        }
    }
}

pub fn checkpoint_bytes(model: &Model, header: &CheckpointHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, m) in model.tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols as u32).to_le_bytes());
        for &v in &m.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model, header: &CheckpointHeader, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &checkpoint_bytes(model, header)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointHeader)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

    let bnet = init_bnet_params(&header.modality_dims, header.bnet, 0)?;
    let seq = init_seq_params(bnet.output_dim(), header.hidden, header.w_t, 0)?;
    let mut model = Model::new(bnet, seq)?;
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    for (expected, m) in names.iter().zip(model.tensors_mut()) {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8_lossy(r.take(nlen)?).into_owned();
        if &name != expected {
            return Err(Error::Checkpoint(format!("expected tensor {expected}, found {name}")));
        }
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if (rows, cols) != (m.rows, m.cols) {
            return Err(Error::Checkpoint(format!(
                "tensor {name} is {rows}x{cols}, header implies {}x{}",
                m.rows, m.cols
            )));
        }
        let raw = r.take(4 * rows * cols)?;
        for (dst, c) in m.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((model, header))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let dims = IndexMap::from([(Modality::Place, 3), (Modality::Audio, 2)]);
        let cfg = BNetConfig { w_b: 2, e_m: 4, ..BNetConfig::default() };
        let bnet = init_bnet_params(&dims, cfg, 5).unwrap();
        let seq = init_seq_params(bnet.output_dim(), 3, 4, 6).unwrap();
        Model::new(bnet, seq).unwrap()
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let m = model();
        let mut h = CheckpointHeader::of(&m);
        h.meta.insert("seed".into(), "5".into());
        let bytes = checkpoint_bytes(&m, &h).unwrap();
        let (back, h2) = parse_checkpoint(&bytes).unwrap();
        assert_eq!(h, h2);
        for ((n1, a), (n2, b)) in m.tensors().iter().zip(back.tensors()) {
            assert_eq!(n1, &n2);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!((*x as f32) as f64, *y);
            }
        }
        // saving the loaded model reproduces the bytes
        assert_eq!(checkpoint_bytes(&back, &h2).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = model();
        let bytes = checkpoint_bytes(&m, &CheckpointHeader::of(&m)).unwrap();
        assert!(matches!(parse_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_checkpoint(&bad), Err(Error::Checkpoint(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(parse_checkpoint(&long), Err(Error::Checkpoint(_))));
    }
}
