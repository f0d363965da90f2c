//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes   "LBNC"
//! version      u32       1
//! step         u64
//! config_len   u32       followed by that many UTF-8 bytes of key = value
//! param_count  u32
//! per param:   name_len u32, name bytes, rank u32, extents rank x u32,
//!              values numel x f32
//! opt_flag     u8        0 none, 1 adam state follows
//! if adam:     t u64, then per param in file order: m numel x f32,
//!              v numel x f32
//! ```
//!
//! Values are stored as f32; loading widens back to f64, so a save/load
//! cycle quantizes once and is byte-stable afterwards.

use std::collections::HashMap;
use std::path::Path;

use super::adam::Adam;
use crate::error::{Error, Result};
use crate::model::{LBNet, ModelConfig, ParamSet};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"LBNC";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub step: u64,
    pub config: ModelConfig,
    pub params: ParamSet,
    pub opt: Option<Adam>,
}

impl Checkpoint {
    /// Reassemble the model, verifying parameters against the config.
    pub fn into_model(self) -> Result<(LBNet, u64, Option<Adam>)> {
        let model = LBNet::from_parts(self.config, self.params)?;
        Ok((model, self.step, self.opt))
    }
}

pub fn save_checkpoint(path: &Path, model: &LBNet, step: u64, opt: Option<&Adam>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&step.to_le_bytes());
    let config = model.config().to_kv_text();
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(config.as_bytes());
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, t) in model.params().iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    match opt {
        None => buf.push(0),
        Some(adam) => {
            buf.push(1);
            buf.extend_from_slice(&adam.steps().to_le_bytes());
            for (name, t) in model.params().iter() {
                let n = t.numel();
                let zeros = vec![0.0; n];
                let (m, v) = adam
                    .moments(name)
                    .unwrap_or((&zeros, &zeros));
                for &x in m {
                    buf.extend_from_slice(&(x as f32).to_le_bytes());
                }
                for &x in v {
                    buf.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("non-UTF-8 string field".to_string()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint (bad magic)", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let step = r.u64()?;
    let config_text = r.string()?;
    let config = ModelConfig::from_kv_text(&config_text)?;
    let count = r.u32()? as usize;
    let mut names = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > 4 {
            return Err(Error::Checkpoint(format!("{name}: rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r.f32s(numel)?;
        tensors.push(Tensor::param(&shape, data)?);
        names.push(name);
    }
    let params = ParamSet::from_pairs(&names, &tensors)?;
    let opt = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let mut m = HashMap::new();
            let mut v = HashMap::new();
            for (name, tensor) in names.iter().zip(&tensors) {
                let n = tensor.numel();
                m.insert(name.clone(), r.f32s(n)?);
                v.insert(name.clone(), r.f32s(n)?);
            }
            Some(Adam::from_state(t, m, v))
        }
        other => return Err(Error::Checkpoint(format!("unknown optimizer flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after optimizer state",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { step, config, params, opt })
}
