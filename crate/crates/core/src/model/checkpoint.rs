//! Binary checkpoint layout:
//!
//! ```text
//! magic    8 bytes  "GPARTCKP"
//! version  u32 LE
//! hlen     u32 LE
//! header   hlen bytes of JSON: {"config": {...}, "blocks": [{"name", "shape"}]}
//! data     every block as row-major f64 LE, in header order
//! ```
//!
//! Each layer contributes a `<net>.<i>.weight` block (`k x k`) followed by a
//! `<net>.<i>.bias` block (`k`), nets ordered feature, g_s, g_d.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{DenseLayer, Mlp, ModelCheckpoint, ModelConfig};
use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: &[u8; 8] = b"GPARTCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    blocks: Vec<BlockInfo>,
}

fn block_infos(config: &ModelConfig) -> Vec<BlockInfo> {
    let k = config.k;
    let mut out = Vec::new();
    for (net, layers) in [
        ("feature", config.feature_layers),
        ("g_s", config.classifier_layers),
        ("g_d", config.classifier_layers),
    ] {
        for i in 0..layers {
            out.push(BlockInfo {
                name: format!("{net}.{i}.weight"),
                shape: vec![k, k],
            });
            out.push(BlockInfo {
                name: format!("{net}.{i}.bias"),
                shape: vec![k],
            });
        }
    }
    out
}

pub fn encode(ckpt: &ModelCheckpoint) -> Result<Vec<u8>> {
    ckpt.check_shapes()?;
    let header = serde_json::to_vec(&Header {
        config: ckpt.config.clone(),
        blocks: block_infos(&ckpt.config),
    })?;
    let mut buf = Vec::with_capacity(16 + header.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for (_, layer) in ckpt.blocks() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

fn malformed(msg: impl Into<String>) -> Error {
    CheckpointError::Malformed(msg.into()).into()
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(malformed("truncated"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

fn read_f64s(bytes: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    let raw = take(bytes, n * 8)?;
    let vals: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(malformed("non-finite parameter"));
    }
    Ok(vals)
}

pub fn decode(mut bytes: &[u8]) -> Result<ModelCheckpoint> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = read_u32(&mut bytes)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let hlen = read_u32(&mut bytes)? as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, hlen)?)
        .map_err(|e| malformed(format!("header: {e}")))?;
    header.config.validate()?;
    if header.blocks != block_infos(&header.config) {
        return Err(CheckpointError::Shape("block list does not match config".into()).into());
    }
    let k = header.config.k;
    let mut read_mlp = |layers: usize| -> Result<Mlp> {
        let mut out = Vec::with_capacity(layers);
        for _ in 0..layers {
            let w = read_f64s(&mut bytes, k * k)?;
            let b = read_f64s(&mut bytes, k)?;
            out.push(DenseLayer {
                weight: Array2::from_shape_vec((k, k), w).unwrap(),
                bias: Array1::from(b),
            });
        }
        Ok(Mlp {
            layers: out,
            activation: header.config.activation,
        })
    };
    let feature_mlp = read_mlp(header.config.feature_layers)?;
    let g_s = read_mlp(header.config.classifier_layers)?;
    let g_d = read_mlp(header.config.classifier_layers)?;
    if !bytes.is_empty() {
        return Err(malformed(format!("{} trailing bytes", bytes.len())));
    }
    Ok(ModelCheckpoint {
        config: header.config,
        feature_mlp,
        g_s,
        g_d,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
