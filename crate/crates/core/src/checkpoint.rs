//! Portable binary checkpoint for [`DenseAutoencoder`].
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size        | field                                         |
//! |--------|-------------|-----------------------------------------------|
//! | 0      | 8           | magic `b"STRADAE\0"`                          |
//! | 8      | 4           | format version, `u32`, currently `1`          |
//! | 12     | 4           | number of layer sizes `L`, `u32`              |
//! | 16     | `4 L`       | layer sizes, `u32` each, input first          |
//! | ...    | `8 P`       | parameters, `f64` each                        |
//!
//! Parameters are written layer by layer: the `out x in` weight matrix in
//! row-major order, then the `out` biases. No trailing bytes are allowed.

use std::io::Write;

use crate::autoencoder::{Dense, DenseAutoencoder};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STRADAE\0";
pub const VERSION: u32 = 1;

pub fn encode(model: &DenseAutoencoder) -> Vec<u8> {
    let sizes = model.layer_sizes();
    let mut out = Vec::with_capacity(16 + 4 * sizes.len() + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    for p in model.parameters() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn write<W: Write>(mut writer: W, model: &DenseAutoencoder) -> Result<()> {
    writer.write_all(&encode(model))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<DenseAutoencoder> {
    let mut cur = Cursor { bytes };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = cur.u32("layer count")? as usize;
    if count < 2 || count.saturating_mul(4) > cur.bytes.len() {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {count}"
        )));
    }
    let sizes = (0..count)
        .map(|_| cur.u32("layer size").map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let params = sizes
        .windows(2)
        .try_fold(0usize, |acc, p| {
            p[0].checked_mul(p[1])
                .and_then(|w| w.checked_add(p[1]))
                .and_then(|n| acc.checked_add(n))
        })
        .ok_or_else(|| Error::Checkpoint("parameter count overflows".into()))?;
    if params.checked_mul(8) != Some(cur.bytes.len()) {
        return Err(Error::Checkpoint(format!(
            "expected {params} parameters, found {} payload bytes",
            cur.bytes.len()
        )));
    }
    let mut layers = Vec::with_capacity(count - 1);
    for p in sizes.windows(2) {
        let (inputs, outputs) = (p[0], p[1]);
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = cur.take(8 * n, "parameters")?;
            let vals: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint("non-finite parameter".into()));
            }
            Ok(vals)
        };
        let weights = read(inputs * outputs)?;
        let biases = read(outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    DenseAutoencoder::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}
