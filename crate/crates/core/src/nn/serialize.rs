//! "DPT1" weights container.
//!
//! Layout (little endian): magic `DPT1`, version `u32`, entry count `u32`,
//! then per entry a `u32`-length UTF-8 name, rank `u32`, one `u32` per
//! extent and the raw `f32` values. A CRC32 of every preceding byte closes
//! the file.

use std::fs;
use std::path::Path;

use super::network::{Layer, Sequential};
use super::{ConvLayerParams, DenseLayerParams, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"DPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(entries: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_len(entries.len())?.to_le_bytes());
    for e in entries {
        let n: usize = e.shape.iter().product();
        if n != e.data.len() || e.shape.is_empty() {
            return Err(Error::rejected(format!(
                "entry {} declares shape {:?} but holds {} values",
                e.name,
                e.shape,
                e.data.len()
            )));
        }
        buf.extend_from_slice(&u32_len(e.name.len())?.to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.extend_from_slice(&u32_len(e.shape.len())?.to_le_bytes());
        for &d in &e.shape {
            buf.extend_from_slice(&u32_len(d)?.to_le_bytes());
        }
        for &v in &e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::rejected(format!("{n} does not fit the u32 header field")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::CorruptFile(format!("truncated while reading {what} at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a container; nothing is returned unless the whole file is valid.
pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < 4 {
        return Err(Error::CorruptFile("truncated before the magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CorruptFile(format!(
            "bad magic {:?} (expected \"DPT1\")",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    if bytes.len() < 16 {
        return Err(Error::CorruptFile("truncated header".into()));
    }
    let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let mut r = Reader {
        bytes: payload,
        pos: 4,
    };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::CorruptFile(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::CorruptFile(format!("entry {i} name is not UTF-8")))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::CorruptFile(format!("entry {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::CorruptFile(format!("entry {name} has shape {shape:?}")))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::CorruptFile(format!("entry {name} is too large")))?,
            "values",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(NamedTensor { name, shape, data });
    }
    if r.pos != payload.len() {
        return Err(Error::CorruptFile(format!(
            "{} unexpected bytes after the last entry",
            payload.len() - r.pos
        )));
    }
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::CorruptFile(format!(
            "checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
        )));
    }
    Ok(entries)
}

pub fn write_file(path: &Path, entries: &[NamedTensor]) -> Result<()> {
    let bytes = encode(entries)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Entries `{prefix}.{k}.weight` / `{prefix}.{k}.bias` for the k-th
/// parameterized layer.
pub fn stack_to_named<T: Scalar>(prefix: &str, stack: &Sequential<T>) -> Vec<NamedTensor> {
    let to32 = |xs: &[T]| xs.iter().map(|x| x.to_f32().unwrap_or(f32::NAN)).collect();
    let mut out = Vec::new();
    let mut k = 0;
    for layer in &stack.layers {
        let (w, b) = match layer {
            Layer::Conv(c) => (&c.kernels, &c.biases),
            Layer::Dense(d) => (&d.weights, &d.biases),
            Layer::Relu => continue,
        };
        out.push(NamedTensor {
            name: format!("{prefix}.{k}.weight"),
            shape: w.shape().to_vec(),
            data: to32(w.data()),
        });
        out.push(NamedTensor {
            name: format!("{prefix}.{k}.bias"),
            shape: vec![b.len()],
            data: to32(b),
        });
        k += 1;
    }
    out
}

/// Rebuilds a stack from `{prefix}.*` entries, inserting a ReLU between
/// consecutive parameterized layers (the convention of every stack here).
pub fn stack_from_named<T: Scalar>(prefix: &str, entries: &[NamedTensor]) -> Result<Sequential<T>> {
    let find = |name: String| entries.iter().find(|e| e.name == name);
    let from32 = |xs: &[f32]| xs.iter().map(|&x| T::lit(x as f64)).collect::<Vec<T>>();
    let mut layers = Vec::new();
    let mut k = 0;
    while let Some(w) = find(format!("{prefix}.{k}.weight")) {
        let b = find(format!("{prefix}.{k}.bias")).ok_or_else(|| {
            Error::CorruptFile(format!("{prefix}.{k}.weight has no matching bias"))
        })?;
        let weights = Tensor::from_vec(&w.shape, from32(&w.data))
            .map_err(|e| Error::CorruptFile(format!("{}: {e}", w.name)))?;
        let layer = match w.shape.len() {
            4 => ConvLayerParams::from_parts(weights, from32(&b.data)).map(Layer::Conv),
            2 => DenseLayerParams::from_parts(weights, from32(&b.data)).map(Layer::Dense),
            r => {
                return Err(Error::CorruptFile(format!(
                    "{} has rank {r}, expected 2 or 4",
                    w.name
                )))
            }
        }
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", w.name)))?;
        if k > 0 {
            layers.push(Layer::Relu);
        }
        layers.push(layer);
        k += 1;
    }
    if k == 0 {
        return Err(Error::CorruptFile(format!("no layers with prefix {prefix:?}")));
    }
    let stack = Sequential::new(layers);
    check_chain(prefix, &stack)?;
    Ok(stack)
}

fn check_chain<T: Scalar>(prefix: &str, stack: &Sequential<T>) -> Result<()> {
    let mut prev: Option<(&str, usize)> = None;
    for layer in &stack.layers {
        let (kind, inputs, outputs) = match layer {
            Layer::Conv(c) => ("conv", c.in_channels(), c.out_channels()),
            Layer::Dense(d) => ("dense", d.inputs(), d.outputs()),
            Layer::Relu => continue,
        };
        if let Some((pkind, pout)) = prev {
            // dense inputs after a conv depend on spatial size, checked at use
            if !(pkind == "conv" && kind == "dense") && pout != inputs {
                return Err(Error::CorruptFile(format!(
                    "{prefix}: layer widths do not chain ({pout} -> {inputs})"
                )));
            }
        }
        prev = Some((kind, outputs));
    }
    Ok(())
}
