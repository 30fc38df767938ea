//! Weight checkpoint container. Everything is little-endian.
//!
//! ```text
//! magic        8 bytes  "DIPL0WTS"
//! version      u32      1
//! step_count   u64      Adam steps taken
//! layer_count  u32
//! per layer:
//!   name_len   u32, name (UTF-8)
//!   kind       u8       0 = conv, 1 = norm
//!   conv:      in u32, out u32, kernel u32, stride u32, bias u8
//!   norm:      channels u32
//!   tensor_count u32
//!   per tensor:
//!     ndim     u32, dims u64 * ndim
//!     value    f64 * numel
//!     adam_m   f64 * numel
//!     adam_v   f64 * numel
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::network::{layer_schema, tensor_shapes};
use crate::net::params::{LayerKind, LayerParams, ParamStore, ParamTensor};
use crate::net::spec::NetSpec;

pub const MAGIC: &[u8; 8] = b"DIPL0WTS";
pub const FORMAT_VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 4096;
const MAX_NDIM: usize = 8;

/// Decoded checkpoint contents, not yet matched against a network spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step_count: u64,
    pub layers: Vec<LayerParams>,
}

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_weights() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&params.step_count().to_le_bytes());
    out.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for layer in params.layers() {
        out.extend_from_slice(&(layer.name.len() as u32).to_le_bytes());
        out.extend_from_slice(layer.name.as_bytes());
        out.push(layer.kind.tag());
        match layer.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                bias,
            } => {
                for v in [in_channels, out_channels, kernel, stride] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                out.push(bias as u8);
            }
            LayerKind::Norm { channels } => out.extend_from_slice(&(channels as u32).to_le_bytes()),
        }
        out.extend_from_slice(&(layer.tensors.len() as u32).to_le_bytes());
        for t in &layer.tensors {
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for arr in [&t.value, &t.adam_m, &t.adam_v] {
                for v in arr.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
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

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        let out: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite value".into()));
        }
        Ok(out)
    }
}

/// Parses a checkpoint. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let step_count = r.u64()?;
    let layer_count = r.usize32()?;
    // Every layer needs at least a name length, a kind and a tensor count.
    if layer_count > r.remaining() / 9 {
        return Err(Error::Checkpoint(format!(
            "layer count {layer_count} exceeds data"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let name_len = r.usize32()?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::Checkpoint(format!("layer name of {name_len} bytes")));
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("layer name is not UTF-8".into()))?
            .to_string();
        let kind = match r.u8()? {
            0 => {
                let in_channels = r.usize32()?;
                let out_channels = r.usize32()?;
                let kernel = r.usize32()?;
                let stride = r.usize32()?;
                let bias = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Checkpoint(format!("bias flag {b}"))),
                };
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    bias,
                }
            }
            1 => LayerKind::Norm {
                channels: r.usize32()?,
            },
            t => return Err(Error::Checkpoint(format!("unknown layer kind {t}"))),
        };
        let tensor_count = r.usize32()?;
        if tensor_count > 2 {
            return Err(Error::Checkpoint(format!(
                "{tensor_count} tensors in layer {name}"
            )));
        }
        let mut tensors = Vec::with_capacity(tensor_count);
        for _ in 0..tensor_count {
            let ndim = r.usize32()?;
            if ndim == 0 || ndim > MAX_NDIM {
                return Err(Error::Checkpoint(format!("tensor rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            let mut numel: usize = 1;
            for _ in 0..ndim {
                let d = usize::try_from(r.u64()?)
                    .map_err(|_| Error::Checkpoint("dimension too large".into()))?;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
                shape.push(d);
            }
            if numel.checked_mul(24).is_none_or(|b| b > r.remaining()) {
                return Err(Error::Checkpoint(format!(
                    "tensor of {numel} elements exceeds data"
                )));
            }
            let value = r.f64s(numel)?;
            let adam_m = r.f64s(numel)?;
            let adam_v = r.f64s(numel)?;
            tensors.push(ParamTensor {
                shape,
                value,
                adam_m,
                adam_v,
            });
        }
        let expected = tensor_shapes(&kind);
        if expected.len() != tensors.len()
            || expected.iter().zip(&tensors).any(|(s, t)| *s != t.shape)
        {
            return Err(Error::Checkpoint(format!(
                "tensor shapes of {name} disagree with its kind"
            )));
        }
        layers.push(LayerParams {
            name,
            kind,
            tensors,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    Ok(Checkpoint { step_count, layers })
}

/// Decodes a checkpoint and checks it matches the layer layout of `spec`.
pub fn restore(spec: &NetSpec, bytes: &[u8]) -> Result<ParamStore> {
    spec.validate()?;
    let ckpt = decode(bytes)?;
    let schema = layer_schema(spec);
    if schema.len() != ckpt.layers.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} layers, network has {}",
            ckpt.layers.len(),
            schema.len()
        )));
    }
    for ((name, kind), layer) in schema.iter().zip(&ckpt.layers) {
        if *name != layer.name || *kind != layer.kind {
            return Err(Error::Checkpoint(format!(
                "layer {} does not match network layer {name}",
                layer.name
            )));
        }
    }
    Ok(ParamStore::from_parts(
        spec.clone(),
        ckpt.layers,
        ckpt.step_count,
    ))
}

pub fn save(params: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(spec: &NetSpec, path: &Path) -> Result<ParamStore> {
    restore(spec, &std::fs::read(path)?)
}
