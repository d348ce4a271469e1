//! Binary checkpoint container.
//!
//! ```text
//! "SYNL" | version u16 | meta_len u64 | meta (UTF-8 JSON)
//! then per tensor: name_len u64 | name | rank u64 | dims u64 * rank | f64 * prod(dims)
//! ```
//!
//! All integers and floats little-endian. Records run to end of file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::trainer::config::ModelConfig;
use crate::trainer::model::Model;
use crate::trainer::train::{Checkpoint, EpochStats};

pub const MAGIC: &[u8; 4] = b"SYNL";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vocabulary,
    best_epoch: usize,
    best_dev_f1: f64,
    history: Vec<EpochStats>,
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let meta = Meta {
        config: ckpt.model.config.clone(),
        vocab: ckpt.model.vocab.clone(),
        best_epoch: ckpt.best_epoch,
        best_dev_f1: ckpt.best_dev_f1,
        history: ckpt.history.clone(),
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(meta.len() + 8 * ckpt.model.store.num_scalars() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, name, t) in ckpt.model.store.iter() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("truncated checkpoint while reading {what} at byte {}", self.pos)));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Format(format!("{what} does not fit in memory")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Parses a checkpoint. Nothing is returned unless the whole buffer is
/// well formed and every model parameter is present with the right shape.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.usize("metadata length")?;
    let meta: Meta = serde_json::from_slice(r.take(meta_len, "metadata")?).map_err(|e| Error::Format(e.to_string()))?;
    let mut model = Model::new(meta.config, meta.vocab, None)?;
    let mut seen = vec![false; model.store.len()];
    while !r.done() {
        let name_len = r.usize("name length")?;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.usize("rank")?;
        let dims = (0..rank).map(|_| r.usize("dimension")).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count.ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?, "tensor data")?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let id = model
            .store
            .id(&name)
            .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
        let target = model.store.get_mut(id);
        if target.shape() != dims.as_slice() {
            return Err(Error::Format(format!("tensor {name} has shape {dims:?}, model expects {:?}", target.shape())));
        }
        let trainable = target.requires_grad();
        *target = Tensor::new(dims, data)?.with_requires_grad(trainable);
        seen[id.index()] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let name = model.store.iter().nth(missing).map(|(_, n, _)| n.to_string()).unwrap_or_default();
        return Err(Error::Format(format!("checkpoint lacks tensor {name}")));
    }
    Ok(Checkpoint { model, best_epoch: meta.best_epoch, best_dev_f1: meta.best_dev_f1, history: meta.history })
}

pub fn save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
