//! Binary weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SQAW" | u32 version
//! u32 len | variant name | u32 frames | u32 bins | u32 scale num | u32 scale den
//! f64 dropout | u64 config hash
//! u32 tensor count, then per tensor:
//!     u32 len | name | u32 rank | rank x u32 dims | f32 values
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{variant, ChannelScale, Model, ModelConfig};
use crate::nn::{Network, Tensor};

pub const MAGIC: &[u8; 4] = b"SQAW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("not a weight bundle (bad magic)")]
    BadMagic,
    #[error("weight format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("weight bundle checksum failure")]
    ChecksumFailure,
    #[error("weight bundle does not match the architecture: {0}")]
    ShapeMismatch(String),
    #[error("config hash {found:016x} does not match the model ({expected:016x})")]
    ConfigHashMismatch { found: u64, expected: u64 },
    #[error("malformed weight bundle: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub version: u32,
    pub config: ModelConfig,
    pub config_hash: u64,
    pub tensors: Vec<NamedTensor>,
}

impl WeightBundle {
    pub fn from_model(model: &Model) -> Self {
        Self::from_network(model.config().clone(), model.network())
    }

    pub fn from_network(config: ModelConfig, net: &Network<f32>) -> Self {
        let tensors = net
            .param_names()
            .into_iter()
            .zip(net.params())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect();
        Self {
            version: FORMAT_VERSION,
            config_hash: config.hash(),
            config,
            tensors,
        }
    }

    /// Copies tensors into `net`, checking names and shapes first and the
    /// config hash second.
    pub fn apply_to(&self, net: &mut Network<f32>, expected_hash: u64) -> Result<(), WeightError> {
        let names = net.param_names();
        if names.len() != self.tensors.len() {
            return Err(WeightError::ShapeMismatch(format!(
                "bundle has {} tensors, network has {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, param), t) in names.iter().zip(net.params()).zip(&self.tensors) {
            if *name != t.name || param.shape() != t.shape.as_slice() {
                return Err(WeightError::ShapeMismatch(format!(
                    "{} {:?} vs bundle {} {:?}",
                    name,
                    param.shape(),
                    t.name,
                    t.shape
                )));
            }
        }
        if self.config_hash != expected_hash {
            return Err(WeightError::ConfigHashMismatch {
                found: self.config_hash,
                expected: expected_hash,
            });
        }
        for (param, t) in net.params_mut().zip(&self.tensors) {
            param.data_mut().copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.version);
        put_str(&mut out, self.config.variant.name());
        put_u32(&mut out, self.config.input_frames as u32);
        put_u32(&mut out, self.config.input_bins as u32);
        put_u32(&mut out, self.config.channel_scale.num());
        put_u32(&mut out, self.config.channel_scale.den());
        out.extend_from_slice(&self.config.dropout_rate.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                put_u32(&mut out, d as u32);
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(WeightError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(WeightError::ChecksumFailure);
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(WeightError::ChecksumFailure);
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(WeightError::FormatVersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let variant_name = r.string()?;
        let variant = variant(&variant_name)
            .ok_or_else(|| WeightError::Malformed(format!("unknown variant {variant_name:?}")))?;
        let input_frames = r.u32()? as usize;
        let input_bins = r.u32()? as usize;
        let channel_scale = ChannelScale::new(r.u32()?, r.u32()?)
            .map_err(|e| WeightError::Malformed(e.to_string()))?;
        let dropout_rate = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let config_hash = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let config = ModelConfig {
            variant,
            input_frames,
            input_bins,
            channel_scale,
            dropout_rate,
        };
        if config.hash() != config_hash {
            return Err(WeightError::ConfigHashMismatch {
                found: config_hash,
                expected: config.hash(),
            });
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let values = r
                .take(len * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, values });
        }
        if r.pos != body.len() {
            return Err(WeightError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            version,
            config,
            config_hash,
            tensors,
        })
    }

    /// Hex digest of the serialized bundle, used to identify weights in reports.
    pub fn digest(&self) -> String {
        hex::encode(&Sha256::digest(self.to_bytes())[..8])
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Parameter tensors in network order.
    pub fn to_tensors(&self) -> Vec<Tensor<f32>> {
        self.tensors
            .iter()
            .map(|t| Tensor::new(t.shape.clone(), t.values.clone()).expect("bundle tensor shape"))
            .collect()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WeightError::Malformed("unexpected end of data".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, WeightError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WeightError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| WeightError::Malformed("non-UTF-8 name".into()))
    }
}

pub fn save_weights(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<(), WeightError> {
    std::fs::write(path, bundle.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightBundle, WeightError> {
    WeightBundle::from_bytes(&std::fs::read(path)?)
}
