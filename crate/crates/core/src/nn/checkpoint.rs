//! Binary checkpoint format.
//!
//! ```text
//! magic "PROBIDCK" | version u32 | tensor count u64
//! per tensor: name length u64 | name bytes | rank u64 | dims u64 * rank | values
//! ```
//! All integers and values are little-endian; values use the model's scalar
//! width. The first tensor records that width so a mismatched reader fails
//! early.

use std::path::Path;

use super::graph::Tensor;
use super::model::{ModelConfig, Normalizer, PolicyModel};
use super::params::ParameterSet;
use crate::scalar::{lit, to_f64, Scalar};
use crate::types::STATE_DIM;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PROBIDCK";
pub const VERSION: u32 = 1;

const META_WIDTH: &str = "meta.value_bytes";
const META_CONFIG: &str = "meta.config";
const NORM_SCALES: &str = "norm.scales";
const NORM_MEAN: &str = "norm.state_mean";
const NORM_STD: &str = "norm.state_std";

fn config_tensor<T: Scalar>(c: &ModelConfig) -> Tensor<T> {
    let vals = [
        c.d_model as f64,
        c.n_layers as f64,
        c.n_heads as f64,
        c.ffn_mult as f64,
        c.context_steps as f64,
        c.max_timestep as f64,
        c.action_bound,
        c.sigma_floor,
        c.sigma_cap,
        if c.cost_stream { 1.0 } else { 0.0 },
        STATE_DIM as f64,
    ];
    Tensor::new(vec![vals.len()], vals.iter().map(|&v| lit(v)).collect())
}

fn config_from<T: Scalar>(t: &Tensor<T>) -> Result<ModelConfig> {
    let v: Vec<f64> = t.data.iter().map(|&x| to_f64(x)).collect();
    if v.len() != 11 {
        return Err(Error::Checkpoint(format!("config tensor has {} entries, expected 11", v.len())));
    }
    let int = |x: f64, what: &str| -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
            Ok(x as usize)
        } else {
            Err(Error::Checkpoint(format!("config field {what} is not a count: {x}")))
        }
    };
    if int(v[10], "state_dim")? != STATE_DIM {
        return Err(Error::Checkpoint(format!("state width {} differs from {STATE_DIM}", v[10])));
    }
    Ok(ModelConfig {
        d_model: int(v[0], "d_model")?,
        n_layers: int(v[1], "n_layers")?,
        n_heads: int(v[2], "n_heads")?,
        ffn_mult: int(v[3], "ffn_mult")?,
        context_steps: int(v[4], "context_steps")?,
        max_timestep: int(v[5], "max_timestep")?,
        action_bound: v[6],
        sigma_floor: v[7],
        sigma_cap: v[8],
        cost_stream: v[9] != 0.0,
    })
}

/// Serializes a model to bytes.
pub fn encode<T: Scalar>(model: &PolicyModel<T>) -> Vec<u8> {
    let mut tensors: Vec<(&str, Tensor<T>)> = vec![
        (META_WIDTH, Tensor::scalar(lit(T::BYTES as f64))),
        (META_CONFIG, config_tensor(&model.config)),
        (NORM_SCALES, Tensor::new(vec![2], vec![model.norm.rtg_scale, model.norm.ctg_scale])),
        (NORM_MEAN, Tensor::new(vec![STATE_DIM], model.norm.state_mean.clone())),
        (NORM_STD, Tensor::new(vec![STATE_DIM], model.norm.state_std.clone())),
    ];
    tensors.extend(model.params.iter().map(|(n, t)| (n, t.clone())));
    let mut out = Vec::with_capacity(64 + model.params.num_values() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated file while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        // any count larger than the remaining bytes is corrupt
        if v > (self.buf.len() - self.pos) as u64 {
            return Err(Error::Checkpoint(format!("{what} {v} exceeds file size")));
        }
        Ok(v as usize)
    }

    fn tensor<T: Scalar>(&mut self) -> Result<(String, Tensor<T>)> {
        let n = self.count("name length")?;
        let name = String::from_utf8(self.take(n, "name")?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = self.count("rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.count("dimension")?);
        }
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len
            .and_then(|l| l.checked_mul(T::BYTES))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is too large")))?;
        let bytes = self.take(len, &format!("values of {name}"))?;
        let data = bytes.chunks(T::BYTES).map(T::read_le).collect();
        Ok((name, Tensor::new(shape, data)))
    }
}

/// Parses bytes produced by [`encode`] with the same scalar type.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<PolicyModel<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.count("tensor count")?;
    let (name, width) = r.tensor::<T>()?;
    if name != META_WIDTH || width.len() != 1 || width.data[0] != lit(T::BYTES as f64) {
        return Err(Error::Checkpoint(format!("file does not hold {} values", T::NAME)));
    }
    let mut fixed = Vec::new();
    for want in [META_CONFIG, NORM_SCALES, NORM_MEAN, NORM_STD] {
        let (name, t) = r.tensor::<T>()?;
        if name != want {
            return Err(Error::Checkpoint(format!("expected tensor {want}, found {name}")));
        }
        fixed.push(t);
    }
    let config = config_from(&fixed[0])?;
    if fixed[1].len() != 2 {
        return Err(Error::Checkpoint("norm.scales must hold 2 values".into()));
    }
    let norm = Normalizer {
        rtg_scale: fixed[1].data[0],
        ctg_scale: fixed[1].data[1],
        state_mean: fixed[2].data.clone(),
        state_std: fixed[3].data.clone(),
    };
    let mut params = ParameterSet::new();
    for _ in 5..count {
        let (name, t) = r.tensor::<T>()?;
        if params.index_of(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        params.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    PolicyModel::from_parts(config, params, norm)
}

pub fn save_checkpoint<T: Scalar>(model: &PolicyModel<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<PolicyModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

/// Scalar width (4 or 8) stored in a checkpoint file.
pub fn checkpoint_value_bytes(path: &Path) -> Result<usize> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let probe = |b: &[u8]| -> Result<usize> {
        let mut r = Reader { buf: b, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        r.count("tensor count")?;
        if let Ok((n, t)) = r.tensor::<f32>() {
            if n == META_WIDTH && t.len() == 1 && t.data[0] == 4.0 {
                return Ok(4);
            }
        }
        let mut r = Reader { buf: b, pos: 20 };
        if let Ok((n, t)) = r.tensor::<f64>() {
            if n == META_WIDTH && t.len() == 1 && t.data[0] == 8.0 {
                return Ok(8);
            }
        }
        Err(Error::Checkpoint("unrecognized value width".into()))
    };
    probe(&bytes)
}
