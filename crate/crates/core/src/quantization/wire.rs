//! Little-endian wire format for [`QuantizedModel`].
//!
//! ```text
//! magic "QMX1" | version u8 | learner u8 | bits u8 (0 = raw f64)
//! tree_count u16
//! per tree: node_count u16, then (feature, left, right) as u16 each
//! scale f64 | offset f64 | param_count u32
//! payload: packed codes, LSB first, zero-padded; or param_count f64s
//! ```

use super::{packed_len, NodeRecord, QuantizedModel, MAX_BITS};
use crate::error::{Error, Result};
use crate::scoring::{LearnerId, ScoreModel, LEAF};

pub const MAGIC: [u8; 4] = *b"QMX1";
pub const VERSION: u8 = 1;

const HEADER: usize = 4 + 1 + 1 + 1 + 2;
const TRAILER: usize = 8 + 8 + 4;
const RECORD: usize = 6;

pub fn serialize(qm: &QuantizedModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload_size(qm));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(qm.learner as u8);
    out.push(qm.bits.unwrap_or(0));
    out.extend_from_slice(&(qm.trees.len() as u16).to_le_bytes());
    for tree in &qm.trees {
        out.extend_from_slice(&(tree.len() as u16).to_le_bytes());
        for r in tree {
            out.extend_from_slice(&r.feature.to_le_bytes());
            out.extend_from_slice(&r.left.to_le_bytes());
            out.extend_from_slice(&r.right.to_le_bytes());
        }
    }
    out.extend_from_slice(&qm.scale.to_le_bytes());
    out.extend_from_slice(&qm.offset.to_le_bytes());
    out.extend_from_slice(&qm.param_count.to_le_bytes());
    out.extend_from_slice(&qm.payload);
    out
}

/// Serialized length in bytes, without serializing.
pub fn payload_size(qm: &QuantizedModel) -> usize {
    HEADER
        + qm.trees.iter().map(|t| 2 + RECORD * t.len()).sum::<usize>()
        + TRAILER
        + qm.payload.len()
}

/// Size of a model sent at full precision.
pub fn unquantized_payload_size(model: &ScoreModel) -> usize {
    HEADER
        + model.trees.iter().map(|t| 2 + RECORD * t.nodes.len()).sum::<usize>()
        + TRAILER
        + 8 * model.node_count()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::corrupt(
                self.pos,
                format!("truncated while reading {what}"),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn read_tree(r: &mut Reader<'_>) -> Result<Vec<NodeRecord>> {
    let start = r.pos;
    let count = r.u16("node count")? as usize;
    if count == 0 {
        return Err(Error::corrupt(start, "empty tree"));
    }
    let mut nodes = Vec::with_capacity(count);
    for i in 0..count {
        let at = r.pos;
        let rec = NodeRecord {
            feature: r.u16("node feature")?,
            left: r.u16("left child")?,
            right: r.u16("right child")?,
        };
        if rec.feature == LEAF {
            if rec.left != 0 || rec.right != 0 {
                return Err(Error::corrupt(at, format!("leaf {i} carries child links")));
            }
        } else {
            let ok = |c: u16| (c as usize) > i && (c as usize) < count;
            if !ok(rec.left) || !ok(rec.right) || rec.left == rec.right {
                return Err(Error::corrupt(
                    at,
                    format!("node {i} has invalid children {} and {}", rec.left, rec.right),
                ));
            }
        }
        nodes.push(rec);
    }
    Ok(nodes)
}

pub fn deserialize(bytes: &[u8]) -> Result<QuantizedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::corrupt(0, "bad magic"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::corrupt(4, format!("unsupported version {version}")));
    }
    let tag = r.u8("learner id")?;
    let learner =
        LearnerId::from_u8(tag).ok_or_else(|| Error::corrupt(5, format!("unknown learner {tag}")))?;
    let bits = match r.u8("bit width")? {
        0 => None,
        b if b <= MAX_BITS => Some(b),
        b => return Err(Error::corrupt(6, format!("bit width {b} out of range"))),
    };
    let tree_count = r.u16("tree count")? as usize;
    if tree_count == 0 {
        return Err(Error::corrupt(7, "no trees"));
    }
    let trees = (0..tree_count)
        .map(|_| read_tree(&mut r))
        .collect::<Result<Vec<_>>>()?;

    let at = r.pos;
    let scale = r.f64("scale")?;
    let offset = r.f64("offset")?;
    if !scale.is_finite() || !offset.is_finite() {
        return Err(Error::corrupt(at, "non-finite scale or offset"));
    }
    if bits.is_some() && scale <= 0.0 {
        return Err(Error::corrupt(at, "non-positive scale"));
    }
    let at = r.pos;
    let param_count = r.u32("parameter count")?;
    let nodes: usize = trees.iter().map(Vec::len).sum();
    if param_count as usize != nodes {
        return Err(Error::corrupt(
            at,
            format!("{param_count} parameters for {nodes} nodes"),
        ));
    }
    let len = match bits {
        Some(b) => packed_len(nodes, b),
        None => 8 * nodes,
    };
    let at = r.pos;
    let payload = r.take(len, "payload")?.to_vec();
    if let Some(b) = bits {
        let used = nodes * b as usize;
        if !used.is_multiple_of(8) && payload[len - 1] >> (used % 8) != 0 {
            return Err(Error::corrupt(at + len - 1, "non-zero padding bits"));
        }
    } else if payload
        .chunks_exact(8)
        .any(|c| !f64::from_le_bytes(c.try_into().unwrap()).is_finite())
    {
        return Err(Error::corrupt(at, "non-finite parameter"));
    }
    if r.pos != bytes.len() {
        return Err(Error::corrupt(r.pos, "trailing bytes"));
    }
    Ok(QuantizedModel {
        learner,
        bits,
        trees,
        scale,
        offset,
        param_count,
        payload,
    })
}
