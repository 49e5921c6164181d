//! `.patm`: detector architecture and weights.
//!
//! ```text
//! "PATM" | version u32 = 1
//! H u32 | W u32 | C u32 | input mode u32 (0 transition, 1 original) | trained u32 (0/1)
//! layer count u32
//! per layer: tag u32 (1 conv block, 2 dense) | in u32 | out u32 | flags u32 (dense: 1 = rectifier)
//! per layer: weights f32 x (in*out, or 9*in*out for conv) | biases f32 x out
//! ```
//! Little-endian throughout; nothing follows the last bias.

use std::fs;
use std::path::Path;

use super::{DataError, Reader};
use crate::detector::{DetectorArchitecture, DetectorModel, InputMode, LayerSpec, Network, Params};

pub const MODEL_MAGIC: [u8; 4] = *b"PATM";
pub const MODEL_VERSION: u32 = 1;

const TAG_CONV: u32 = 1;
const TAG_DENSE: u32 = 2;
const MAX_LAYERS: u32 = 1024;

pub fn encode_model(model: &DetectorModel) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(36 + 16 * arch.layers().len() + 4 * arch.param_count());
    let put = |v: u32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(&MODEL_MAGIC);
    put(MODEL_VERSION, &mut out);
    let (h, w, c) = arch.input_shape();
    put(h as u32, &mut out);
    put(w as u32, &mut out);
    put(c as u32, &mut out);
    put(
        match model.input_mode() {
            InputMode::Transition => 0,
            InputMode::Original => 1,
        },
        &mut out,
    );
    put(model.is_trained() as u32, &mut out);
    put(arch.layers().len() as u32, &mut out);
    for layer in arch.layers() {
        let (tag, a, b, flags) = match *layer {
            LayerSpec::Conv {
                in_channels,
                out_channels,
            } => (TAG_CONV, in_channels, out_channels, 0),
            LayerSpec::Dense {
                inputs,
                outputs,
                relu,
            } => (TAG_DENSE, inputs, outputs, relu as u32),
        };
        put(tag, &mut out);
        put(a as u32, &mut out);
        put(b as u32, &mut out);
        put(flags, &mut out);
    }
    for t in model.network().params().tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<DetectorModel, DataError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let input_mode = match r.u32()? {
        0 => InputMode::Transition,
        1 => InputMode::Original,
        other => return Err(DataError::InvalidHeader(format!("input mode {other}"))),
    };
    let trained = match r.u32()? {
        0 => false,
        1 => true,
        other => return Err(DataError::InvalidHeader(format!("trained flag {other}"))),
    };
    let count = r.u32()?;
    if count == 0 || count > MAX_LAYERS {
        return Err(DataError::InvalidHeader(format!("layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for i in 0..count {
        let tag = r.u32()?;
        let a = r.u32()? as usize;
        let b = r.u32()? as usize;
        let flags = r.u32()?;
        layers.push(match (tag, flags) {
            (TAG_CONV, 0) => LayerSpec::Conv {
                in_channels: a,
                out_channels: b,
            },
            (TAG_DENSE, 0 | 1) => LayerSpec::Dense {
                inputs: a,
                outputs: b,
                relu: flags == 1,
            },
            _ => {
                return Err(DataError::InvalidHeader(format!(
                    "layer {i}: tag {tag} flags {flags}"
                )))
            }
        });
    }
    let arch = DetectorArchitecture::from_layers((h, w, c), layers)?;
    let needed = arch.param_count() * 4;
    if r.remaining() < needed {
        return Err(DataError::Truncated {
            needed: bytes.len() - r.remaining() + needed,
            available: bytes.len(),
        });
    }
    let mut tensors = Vec::with_capacity(2 * arch.layers().len());
    for layer in arch.layers() {
        let (wc, bc) = layer.param_counts();
        tensors.push(r.f32s(wc)?);
        tensors.push(r.f32s(bc)?);
    }
    r.finish()?;
    let network = Network::from_params(arch, Params::new(tensors))?;
    Ok(DetectorModel::new(network, input_mode, trained)?)
}

pub fn save_model(path: impl AsRef<Path>, model: &DetectorModel) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| DataError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DetectorModel, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_model(&bytes)
}
