//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "DKDNET\0\x01"
//! layers     u32
//! per layer  u32 inputs, u32 outputs, u8 activation (0 = identity, 1 = relu)
//! per layer  inputs*outputs f64 weights (row-major), outputs f64 biases
//! ```
//!
//! Parameters are stored as raw IEEE-754 bits, so a save/load round trip is
//! bit-exact. Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use super::network::{Activation, Layer, TargetNetwork};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DKDNET\0\x01";

pub fn to_bytes(net: &TargetNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.num_parameters() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
        out.push(match layer.activation() {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
    }
    for layer in net.layers() {
        for v in layer.weights().iter().chain(layer.biases()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TargetNetwork> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not a network checkpoint".into()));
    }
    let n = r.u32()? as usize;
    if n == 0 || n > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let activation = match r.take(1)?[0] {
            0 => Activation::Identity,
            1 => Activation::Relu,
            tag => return Err(Error::Checkpoint(format!("unknown activation tag {tag}"))),
        };
        shapes.push((inputs, outputs, activation));
    }
    let mut layers = Vec::with_capacity(n);
    for (inputs, outputs, activation) in shapes {
        let count = inputs
            .checked_mul(outputs)
            .filter(|&c| c.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("layer {inputs}x{outputs} too large")))?;
        let weights = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let biases = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let layer = Layer::new(inputs, outputs, weights, biases, activation)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    TargetNetwork::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn is_checkpoint(bytes: &[u8]) -> bool {
    bytes.starts_with(CHECKPOINT_MAGIC)
}

pub fn save_checkpoint(net: &TargetNetwork, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TargetNetwork> {
    from_bytes(&fs::read(path)?)
}
