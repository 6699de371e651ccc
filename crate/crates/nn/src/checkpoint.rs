//! `LACK` checkpoint files.
//!
//! Layout (little-endian): magic `LACK`, u32 version, config JSON
//! (u32 length + UTF-8), u32 tensor count, then per tensor its name
//! (u32 length + UTF-8), u32 rank, u32 dims and f32 data. A u32 flag
//! follows; when set, the optimizer state is appended as u64 step, Adam
//! hyperparameters as JSON and a tensor list in the same encoding.

use std::path::Path;

use lact_core::io::{self, ByteReader, PutLe};

use crate::adam::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::graph::BatchNormStats;
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LACK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    /// `adam.m.<param>` and `adam.v.<param>` moments.
    pub tensors: Vec<(String, Tensor<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Parameters followed by `<layer>.running_mean` / `<layer>.running_var`.
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optimizer: Option<OptimizerState>,
}

fn put_tensors(out: &mut Vec<u8>, tensors: &[(String, Tensor<f32>)]) {
    out.put_u32(tensors.len() as u32);
    for (name, t) in tensors {
        out.put_string(name);
        out.put_u32(t.shape().len() as u32);
        for &d in t.shape() {
            out.put_u32(d as u32);
        }
        out.put_f32s(t.data());
    }
}

fn read_tensors(r: &mut ByteReader<'_>) -> Result<Vec<(String, Tensor<f32>)>> {
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(r.malformed(&format!("tensor {name} has rank {rank}")).into());
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| r.malformed(&format!("tensor {name} is too large")))?;
        let data = r.f32s(len)?;
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}

fn stats_tensors(name: &str, s: &BatchNormStats<f32>) -> [(String, Tensor<f32>); 2] {
    let c = s.mean.len();
    [
        (format!("{name}.running_mean"), Tensor::from_vec(&[c], s.mean.clone()).expect("vector")),
        (format!("{name}.running_var"), Tensor::from_vec(&[c], s.var.clone()).expect("vector")),
    ]
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, optimizer: Option<&Adam<f32>>) -> Self {
        let p = model.params();
        let mut tensors: Vec<_> = p.names().iter().cloned().zip(p.tensors().iter().cloned()).collect();
        for (name, s) in model.bn_stats() {
            tensors.extend(stats_tensors(name, s));
        }
        let optimizer = optimizer.map(|adam| {
            let (m, v) = adam.moments();
            let mut t: Vec<_> = p.names().iter().zip(m).map(|(n, x)| (format!("adam.m.{n}"), x.clone())).collect();
            t.extend(p.names().iter().zip(v).map(|(n, x)| (format!("adam.v.{n}"), x.clone())));
            OptimizerState { config: adam.config, step: adam.step_count(), tensors: t }
        });
        Self { config: model.config().clone(), tensors, optimizer }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.put_u32(CHECKPOINT_VERSION);
        out.put_string(&serde_json::to_string(&self.config)?);
        put_tensors(&mut out, &self.tensors);
        match &self.optimizer {
            None => out.put_u32(0),
            Some(opt) => {
                out.put_u32(1);
                out.put_u64(opt.step);
                out.put_string(&serde_json::to_string(&opt.config)?);
                put_tensors(&mut out, &opt.tensors);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "LACK");
        r.magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let config: ModelConfig = serde_json::from_str(&r.string()?)?;
        let tensors = read_tensors(&mut r)?;
        let optimizer = match r.u32()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config: AdamConfig = serde_json::from_str(&r.string()?)?;
                Some(OptimizerState { config, step, tensors: read_tensors(&mut r)? })
            }
            f => return Err(r.malformed(&format!("optimizer flag {f}")).into()),
        };
        r.finish()?;
        Ok(Self { config, tensors, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_atomic(path.as_ref(), &self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| lact_core::Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Rebuilds the model (and optimizer, when saved). Every tensor must
    /// match a model entry by name and shape, and every entry must be
    /// present exactly once.
    pub fn restore(&self) -> Result<(Model<f32>, Option<Adam<f32>>)> {
        let mut model = Model::<f32>::new(self.config.clone(), 0)?;
        let mut lookup: std::collections::HashMap<&str, &Tensor<f32>> = std::collections::HashMap::new();
        for (name, t) in &self.tensors {
            if lookup.insert(name, t).is_some() {
                return Err(Error::CheckpointMismatch(format!("duplicate tensor {name}")));
            }
        }
        let mut take = |name: &str| {
            lookup.remove(name).ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))
        };
        for i in 0..model.params().len() {
            let name = model.params().name(i).to_string();
            let t = take(&name)?.clone();
            model.params_mut().set(i, t)?;
        }
        for (name, s) in model.bn_stats_mut() {
            for (suffix, dst) in [("running_mean", &mut s.mean), ("running_var", &mut s.var)] {
                let t = take(&format!("{name}.{suffix}"))?;
                if t.shape() != [dst.len()] {
                    return Err(Error::CheckpointMismatch(format!("{name}.{suffix} has shape {:?}", t.shape())));
                }
                dst.copy_from_slice(t.data());
            }
        }
        if let Some(extra) = lookup.keys().next() {
            return Err(Error::CheckpointMismatch(format!("unexpected tensor {extra}")));
        }

        let optimizer = match &self.optimizer {
            None => None,
            Some(opt) => {
                let mut adam = Adam::new(opt.config, model.params());
                let find = |name: String| {
                    opt.tensors
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, t)| t.clone())
                        .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))
                };
                let names = model.params().names();
                let m = names.iter().map(|n| find(format!("adam.m.{n}"))).collect::<Result<Vec<_>>>()?;
                let v = names.iter().map(|n| find(format!("adam.v.{n}"))).collect::<Result<Vec<_>>>()?;
                if opt.tensors.len() != 2 * names.len() {
                    return Err(Error::CheckpointMismatch("unexpected optimizer tensors".into()));
                }
                adam.restore(opt.step, m, v)?;
                Some(adam)
            }
        };
        Ok((model, optimizer))
    }
}
