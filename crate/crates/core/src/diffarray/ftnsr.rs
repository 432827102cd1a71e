//! `FTNSR v1` tensor files: two ASCII header lines followed by raw
//! little-endian `f64` values in channel-major row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub const FTNSR_MAGIC: &str = "FTNSR v1";

pub fn encode_ftnsr(t: &Tensor) -> Vec<u8> {
    let s = t.shape();
    let header = format!(
        "{FTNSR_MAGIC}\ndtype=f64 shape={},{},{}\n",
        s.channels, s.height, s.width
    );
    let mut out = Vec::with_capacity(header.len() + 8 * t.len());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

pub fn decode_ftnsr(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |reason: &str| Error::format(path, reason);
    let (magic, rest) = split_line(bytes).ok_or_else(|| bad("missing magic line"))?;
    if magic != FTNSR_MAGIC.as_bytes() {
        return Err(bad("magic line is not `FTNSR v1`"));
    }
    let (meta, payload) = split_line(rest).ok_or_else(|| bad("missing dtype/shape line"))?;
    let meta = std::str::from_utf8(meta).map_err(|_| bad("header is not ASCII"))?;
    let dims = meta
        .strip_prefix("dtype=f64 shape=")
        .ok_or_else(|| bad("expected `dtype=f64 shape=C,H,W`"))?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("shape entries must be unsigned integers"))?;
    let [c, h, w] = dims[..] else {
        return Err(bad("shape must have exactly three entries"));
    };
    let shape = Shape::new(c, h, w);
    if payload.len() != 8 * shape.len() {
        return Err(bad(&format!(
            "payload holds {} bytes, shape {shape} needs {}",
            payload.len(),
            8 * shape.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_ftnsr(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&encode_ftnsr(t))?;
    Ok(())
}

pub fn read_ftnsr(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_ftnsr(&bytes, path)
}
