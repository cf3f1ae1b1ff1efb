//! Flat binary weights file.
//!
//! Layout: the 8-byte magic `MPNOWT01`, a little-endian `u32` header length,
//! a UTF-8 JSON header describing each layer, then every layer's `R` as
//! interleaved `(re, im)` pairs followed by its `W`, all as little-endian `f64`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, SpectralLayer};
use super::mode::PrecisionMode;
use super::stabilizer::StabilizerKind;
use super::train::{Model, MAX_LAYERS};
use crate::contract::{LoweringMode, PlanCache};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::{FreqIndex, ModeMask};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"MPNOWT01";
const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerHeader {
    c_in: usize,
    c_out: usize,
    d: usize,
    m: usize,
    modes: Vec<Vec<i64>>,
    stabilizer: StabilizerKind,
    precision: PrecisionMode,
    activation: Activation,
    lowering: LoweringMode,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    layers: Vec<LayerHeader>,
}

pub fn encode_weights(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        version: 1,
        layers: model
            .layers
            .iter()
            .map(|l| LayerHeader {
                c_in: l.c_in,
                c_out: l.c_out,
                d: l.grid().d(),
                m: l.grid().m(),
                modes: l.modes().iter().map(|w| w.0.clone()).collect(),
                stabilizer: l.stabilizer,
                precision: l.precision.clone(),
                activation: l.activation,
                lowering: l.lowering,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.num_params());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in &model.layers {
        for z in &l.r {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        for w in &l.w {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse(format!("weights: {}", msg.into()))
}

pub fn decode_weights(bytes: &[u8]) -> Result<Model> {
    let rest = bytes.strip_prefix(WEIGHTS_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
    let (len, rest) = rest.split_first_chunk::<4>().ok_or_else(|| bad("truncated header length"))?;
    let len = u32::from_le_bytes(*len) as usize;
    if len > MAX_HEADER || len > rest.len() {
        return Err(bad(format!("header length {len} out of range")));
    }
    let (json, mut payload) = rest.split_at(len);
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(e.to_string()))?;
    if header.version != 1 {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.layers.is_empty() || header.layers.len() > MAX_LAYERS {
        return Err(bad(format!("layer count {} out of range", header.layers.len())));
    }
    let cache = Arc::new(PlanCache::new());
    let mut layers = Vec::with_capacity(header.layers.len());
    let next = |payload: &mut &[u8]| -> Result<f64> {
        let (b, rest) = payload.split_first_chunk::<8>().ok_or_else(|| bad("truncated payload"))?;
        *payload = rest;
        let v = f64::from_le_bytes(*b);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad("non-finite weight"))
        }
    };
    for h in &header.layers {
        let grid = Grid::new(h.d, h.m)?;
        let modes: Vec<FreqIndex> = h.modes.iter().cloned().map(FreqIndex).collect();
        if modes.iter().any(|w| w.d() != h.d) {
            return Err(bad("mode dimension differs from grid"));
        }
        let mask = ModeMask::from_modes(&grid, &modes)?;
        let count = h
            .c_in
            .checked_mul(h.c_out)
            .and_then(|c| c.checked_mul(modes.len()))
            .filter(|&c| c.saturating_mul(16) <= payload.len())
            .ok_or_else(|| bad("weight count exceeds payload"))?;
        let mut layer = SpectralLayer::zeros(h.c_in, h.c_out, &mask, Arc::clone(&cache))?;
        layer.set_modes(modes)?;
        for k in 0..count {
            let re = next(&mut payload)?;
            let im = next(&mut payload)?;
            layer.r[k] = Complex64::new(re, im);
        }
        for k in 0..h.c_in * h.c_out {
            layer.w[k] = next(&mut payload)?;
        }
        layer.stabilizer = h.stabilizer;
        layer.precision = h.precision.clone();
        layer.activation = h.activation;
        layer.lowering = h.lowering;
        layers.push(layer);
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes", payload.len())));
    }
    for pair in layers.windows(2) {
        if pair[0].c_out != pair[1].c_in || pair[0].grid() != pair[1].grid() {
            return Err(bad("consecutive layers do not chain"));
        }
    }
    Ok(Model { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fno::ModelConfig;

    #[test]
    fn round_trip() {
        let grid = Grid::new(1, 16).unwrap();
        let model = Model::new(&ModelConfig { depth: 2, width: 3, modes: 4, ..ModelConfig::default() }, grid, 5).unwrap();
        let bytes = encode_weights(&model).unwrap();
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(encode_weights(&back).unwrap(), bytes);
        for (a, b) in model.layers.iter().zip(&back.layers) {
            assert_eq!(a.r, b.r);
            assert_eq!(a.w, b.w);
            assert_eq!(a.modes(), b.modes());
        }
        assert!(decode_weights(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_weights(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_weights(&magic).is_err());
        assert!(decode_weights(&[]).is_err());
    }
}
