//! Binary tensor container.
//!
//! Layout: the 8-byte magic `RAVTNSR1`, a little-endian `u64` header length,
//! a JSON header `{meta, tensors: [{name, shape}]}`, then every tensor's
//! values as little-endian `f64` in header order. Values round-trip exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{NnError, Result};
use crate::model::{Model, ModelConfig};
use crate::tape::Tensor;

const MAGIC: &[u8; 8] = b"RAVTNSR1";
pub const MODEL_KIND: &str = "reachavoid-model";

#[derive(Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_tensors<W: Write>(mut w: W, meta: &Value, tensors: &[(&str, &Tensor)]) -> Result<()> {
    let header = Header {
        meta: meta.clone(),
        tensors: tensors.iter().map(|(n, t)| Entry { name: n.to_string(), shape: t.shape.clone() }).collect(),
    };
    let hb = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(hb.len() as u64).to_le_bytes())?;
    w.write_all(&hb)?;
    for (_, t) in tensors {
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<(Value, Vec<(String, Tensor)>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| NnError::Checkpoint("file too short for a header".into()))?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("not a tensor file (bad magic)".into()));
    }
    let mut lb = [0u8; 8];
    r.read_exact(&mut lb)?;
    let hlen = u64::from_le_bytes(lb);
    if hlen > 1 << 30 {
        return Err(NnError::Checkpoint(format!("implausible header length {hlen}")));
    }
    let mut hb = vec![0u8; hlen as usize];
    r.read_exact(&mut hb).map_err(|_| NnError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&hb).map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    let mut out = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| NnError::Checkpoint(format!("truncated data in tensor {}", e.name)))?;
            data.push(f64::from_le_bytes(buf));
        }
        out.push((e.name, Tensor { shape: e.shape, data }));
    }
    if r.read(&mut buf)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok((header.meta, out))
}

pub fn save_tensors(path: &Path, meta: &Value, tensors: &[(&str, &Tensor)]) -> Result<()> {
    write_tensors(BufWriter::new(File::create(path)?), meta, tensors)
}

pub fn load_tensors(path: &Path) -> Result<(Value, Vec<(String, Tensor)>)> {
    read_tensors(BufReader::new(File::open(path)?))
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let meta = serde_json::json!({ "kind": MODEL_KIND, "version": 1, "config": model.config() });
    let tensors: Vec<(&str, &Tensor)> = model.params().iter().collect();
    save_tensors(path, &meta, &tensors)
}

/// Loads a model, checking every tensor name and shape against its config.
pub fn load_model(path: &Path) -> Result<Model> {
    let (meta, tensors) = load_tensors(path)?;
    model_from_parts(&meta, tensors)
}

pub fn model_from_parts(meta: &Value, tensors: Vec<(String, Tensor)>) -> Result<Model> {
    if meta.get("kind").and_then(Value::as_str) != Some(MODEL_KIND) {
        return Err(NnError::Checkpoint("file does not hold a model".into()));
    }
    let cfg: ModelConfig = serde_json::from_value(meta.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| NnError::Checkpoint(format!("bad model config: {e}")))?;
    let mut model = Model::new(cfg, &mut reachavoid_core::seed::rng_from(0))?;
    let expected = model.params().len();
    if tensors.len() != expected {
        return Err(NnError::Checkpoint(format!("expected {expected} tensors, found {}", tensors.len())));
    }
    for (name, t) in tensors {
        let id = model.params().id(&name).ok_or_else(|| NnError::Checkpoint(format!("unexpected tensor {name}")))?;
        let slot = model.params_mut().get_mut(id);
        if slot.shape != t.shape {
            return Err(NnError::Checkpoint(format!("tensor {name}: shape {:?}, config expects {:?}", t.shape, slot.shape)));
        }
        *slot = t;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use reachavoid_core::seed::rng_from;

    #[test]
    fn model_round_trip_is_exact() {
        let cfg = ModelConfig { embed_dim: 8, max_seq_len: 16, ..ModelConfig::new(3, 2) };
        let m = Model::new(cfg, &mut rng_from(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = ModelConfig { embed_dim: 8, max_seq_len: 16, ..ModelConfig::new(3, 2) };
        let m = Model::new(cfg.clone(), &mut rng_from(9)).unwrap();
        let mut tensors: Vec<(String, Tensor)> = m.params().iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        tensors[0].1 = Tensor::zeros(vec![3, 8]);
        let meta = serde_json::json!({ "kind": MODEL_KIND, "version": 1, "config": cfg });
        let err = model_from_parts(&meta, tensors).err().unwrap();
        assert!(err.to_string().contains("emb.z"), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let t = Tensor::zeros(vec![4]);
        let mut buf = Vec::new();
        write_tensors(&mut buf, &Value::Null, &[("t", &t)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_tensors(&buf[..]).is_err());
        assert!(read_tensors(&b"garbage!"[..]).is_err());
    }
}
