//! Affine parameter quantization of score models.
//!
//! Split thresholds and leaf values form one real vector `θ`. It is mapped to
//! `2^b` evenly spaced levels spanning `[min θ, max θ]`; each parameter takes
//! the nearest level, ties going to the lower code. Topology (feature
//! indices, child links) is sent unquantized.

mod ledger;
mod wire;

pub use ledger::{CommLedger, PayloadKind, Traffic};
pub use wire::{deserialize, payload_size, serialize, unquantized_payload_size, MAGIC, VERSION};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{LearnerId, Node, ScoreModel, Tree, LEAF};

/// Widest code the packer supports.
pub const MAX_BITS: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum QuantMode {
    #[default]
    AffinePerModel,
}

/// Bit width per real parameter; `bits == None` sends raw 64-bit floats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct QuantSpec {
    pub bits: Option<u8>,
    pub mode: QuantMode,
}

impl QuantSpec {
    pub const fn none() -> Self {
        Self {
            bits: None,
            mode: QuantMode::AffinePerModel,
        }
    }

    pub const fn bits(bits: u8) -> Self {
        Self {
            bits: Some(bits),
            mode: QuantMode::AffinePerModel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bits {
            Some(0) => Err(Error::InvalidSpec("bit width must be at least 1".into())),
            Some(b) if b > MAX_BITS => Err(Error::InvalidSpec(format!(
                "bit width {b} exceeds {MAX_BITS}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for QuantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bits {
            None => f.write_str("none"),
            Some(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for QuantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("unquantized") {
            return Ok(Self::none());
        }
        let bits: u8 = s
            .trim_end_matches("-bit")
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("cannot parse bit width {s:?}")))?;
        let spec = Self::bits(bits);
        spec.validate()?;
        Ok(spec)
    }
}

/// Topology of one node as it travels on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRecord {
    pub feature: u16,
    pub left: u16,
    pub right: u16,
}

/// Low-precision surrogate of a [`ScoreModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub learner: LearnerId,
    /// `None` for raw 64-bit parameters.
    pub bits: Option<u8>,
    pub trees: Vec<Vec<NodeRecord>>,
    /// Level spacing; 0 when unquantized.
    pub scale: f64,
    /// Lowest level; 0 when unquantized.
    pub offset: f64,
    pub param_count: u32,
    /// Packed codes (LSB first) or little-endian `f64`s.
    pub payload: Vec<u8>,
}

impl QuantizedModel {
    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    /// Integer codes of a quantized payload.
    pub fn codes(&self) -> Option<Vec<u32>> {
        self.bits
            .map(|b| unpack_codes(&self.payload, self.param_count as usize, b))
    }

    /// Real parameters as the receiver reconstructs them.
    pub fn decoded_params(&self) -> Vec<f64> {
        match self.codes() {
            Some(codes) => codes.into_iter().map(|c| level(self.offset, self.scale, c)).collect(),
            None => self
                .payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        }
    }
}

#[inline]
fn level(offset: f64, scale: f64, code: u32) -> f64 {
    offset + code as f64 * scale
}

/// Nearest-level code of `x`, ties to the lower code.
fn nearest_code(x: f64, offset: f64, scale: f64, top: u32) -> u32 {
    let t = ((x - offset) / scale).floor();
    let low = if t <= 0.0 {
        0
    } else if t >= top as f64 {
        top
    } else {
        t as u32
    };
    if low == top {
        return top;
    }
    let d_low = (x - level(offset, scale, low)).abs();
    let d_high = (level(offset, scale, low + 1) - x).abs();
    if d_high < d_low {
        low + 1
    } else {
        low
    }
}

fn structure(model: &ScoreModel) -> Result<Vec<Vec<NodeRecord>>> {
    if model.trees.len() > u16::MAX as usize {
        return Err(Error::InvalidInput(format!("{} trees exceed u16", model.trees.len())));
    }
    model
        .trees
        .iter()
        .map(|tree| {
            if tree.nodes.len() > u16::MAX as usize {
                return Err(Error::InvalidInput(format!(
                    "tree with {} nodes exceeds u16",
                    tree.nodes.len()
                )));
            }
            Ok(tree
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    feature: n.feature,
                    left: n.left,
                    right: n.right,
                })
                .collect())
        })
        .collect()
}

/// `θ̂ = q(θ)` for a trained model.
pub fn quantize_model(model: &ScoreModel, spec: QuantSpec) -> Result<QuantizedModel> {
    spec.validate()?;
    let params = model.params();
    if params.is_empty() {
        return Err(Error::InvalidInput("model has no real parameters".into()));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("non-finite model parameter".into()));
    }
    let param_count = u32::try_from(params.len())
        .map_err(|_| Error::InvalidInput("too many parameters".into()))?;
    let trees = structure(model)?;

    let Some(bits) = spec.bits else {
        return Ok(QuantizedModel {
            learner: model.learner,
            bits: None,
            trees,
            scale: 0.0,
            offset: 0.0,
            param_count,
            payload: params.iter().flat_map(|p| p.to_le_bytes()).collect(),
        });
    };

    let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = (1u32 << bits) - 1;
    let mut scale = (hi - lo) / top as f64;
    if !scale.is_finite() {
        return Err(Error::InvalidInput("parameter range overflows".into()));
    }
    if scale <= 0.0 {
        scale = 1.0;
    }
    let codes: Vec<u32> = params.iter().map(|&p| nearest_code(p, lo, scale, top)).collect();
    Ok(QuantizedModel {
        learner: model.learner,
        bits: Some(bits),
        trees,
        scale,
        offset: lo,
        param_count,
        payload: pack_codes(&codes, bits),
    })
}

/// Rebuilds an evaluatable surrogate `f(·; θ̂)` for points of dimension
/// `dim`, which the receiver knows from the shared feature space.
pub fn dequantize(qm: &QuantizedModel, dim: usize) -> Result<ScoreModel> {
    if qm.param_count as usize != qm.node_count() {
        return Err(Error::corrupt(
            0,
            format!("{} parameters for {} nodes", qm.param_count, qm.node_count()),
        ));
    }
    let expected = match qm.bits {
        Some(b) => packed_len(qm.param_count as usize, b),
        None => qm.param_count as usize * 8,
    };
    if qm.payload.len() != expected {
        return Err(Error::corrupt(
            0,
            format!("payload holds {} bytes, expected {expected}", qm.payload.len()),
        ));
    }
    let mut values = qm.decoded_params().into_iter();
    let trees = qm
        .trees
        .iter()
        .map(|records| Tree {
            nodes: records
                .iter()
                .map(|r| {
                    let value = values.next().expect("param count checked");
                    if r.feature == LEAF {
                        Node::leaf(value)
                    } else {
                        Node::split(r.feature, value, r.left, r.right)
                    }
                })
                .collect(),
        })
        .collect();
    ScoreModel::from_trees(dim, trees, 0).map_err(|e| Error::corrupt(0, e.to_string()))
}

pub(crate) fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Packs `bits`-wide codes LSB first; the tail is zero-padded.
pub(crate) fn pack_codes(codes: &[u32], bits: u8) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    let mut pos = 0usize;
    for &code in codes {
        for b in 0..bits as usize {
            if code >> b & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

pub(crate) fn unpack_codes(bytes: &[u8], count: usize, bits: u8) -> Vec<u32> {
    let mut pos = 0usize;
    (0..count)
        .map(|_| {
            let mut code = 0u32;
            for b in 0..bits as usize {
                if bytes[pos / 8] >> (pos % 8) & 1 == 1 {
                    code |= 1 << b;
                }
                pos += 1;
            }
            code
        })
        .collect()
}
