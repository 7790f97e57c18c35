//! Binary checkpoint: magic, version, step, config snapshot, then
//! length-prefixed `(name, shape, data)` triples for parameters and optimizer
//! velocity. Little-endian throughout, 64-bit reals.

use std::path::Path;

use stcx_core::head::{ContextHead, Sgd};
use stcx_core::nn::ParamStore;
use stcx_core::tensor::Tensor;

use crate::config::RunConfig;
use crate::error::{read_file, write_file, CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"STCXCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub step: u64,
    pub config_text: String,
    pub params: Vec<(String, Tensor)>,
    pub velocity: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, head: &ContextHead, sgd: &Sgd, step: u64) -> Self {
        let params: Vec<(String, Tensor)> = head.params().iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect();
        let velocity = params
            .iter()
            .zip(sgd.velocity())
            .map(|((name, _), v)| (name.clone(), v.clone()))
            .collect();
        Checkpoint {
            version: VERSION,
            step,
            config_text: config.to_text(),
            params,
            velocity,
        }
    }

    pub fn config(&self) -> CliResult<RunConfig> {
        RunConfig::parse(&self.config_text)
    }

    pub fn param_store(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, t) in &self.params {
            store.add(name.clone(), t.clone());
        }
        store
    }

    /// Rebuilds the head and optimizer described by `config`, then loads the
    /// stored tensors into them.
    pub fn restore(&self, config: &RunConfig) -> CliResult<(ContextHead, Sgd)> {
        let mut head = ContextHead::new(config.head_config(), config.seed)?;
        head.load_params(self.param_store())
            .map_err(|e| CliError::Config(format!("checkpoint does not match config: {e}")))?;
        let mut sgd = Sgd::new(head.params(), config.lr, config.momentum);
        sgd.set_velocity(self.velocity.iter().map(|(_, t)| t.clone()).collect())
            .map_err(|e| CliError::Config(format!("checkpoint optimizer state does not match config: {e}")))?;
        Ok((head, sgd))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        put_str(&mut out, &self.config_text);
        for group in [&self.params, &self.velocity] {
            out.extend_from_slice(&(group.len() as u32).to_le_bytes());
            for (name, t) in group {
                put_str(&mut out, name);
                out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
                for &d in t.shape() {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CliError::Config("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Config(format!("unsupported checkpoint version {version}")));
        }
        let step = r.u64()?;
        let config_text = r.string()?;
        let params = r.tensors()?;
        let velocity = r.tensors()?;
        if r.pos != bytes.len() {
            return Err(CliError::Config(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            version,
            step,
            config_text,
            params,
            velocity,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_file(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Config("truncated checkpoint".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> CliResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CliError::Config("checkpoint string is not UTF-8".into()))
    }

    fn tensors(&mut self) -> CliResult<Vec<(String, Tensor)>> {
        let count = self.u32()?;
        let mut out = Vec::new();
        for _ in 0..count {
            let name = self.string()?;
            let rank = self.u32()? as usize;
            let shape = (0..rank).map(|_| Ok(self.u64()? as usize)).collect::<CliResult<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
                .ok_or_else(|| CliError::Config(format!("tensor `{name}` shape {shape:?} exceeds file size")))?;
            let data = self
                .take(len * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| CliError::Config(format!("tensor `{name}`: {e}")))?;
            out.push((name, tensor));
        }
        Ok(out)
    }
}
