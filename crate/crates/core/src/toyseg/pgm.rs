//! Binary PGM (`P5`, maxval 255) images and sample directories.

use std::fs;
use std::path::Path;

use super::Sample;
use crate::diffarray::{Shape, Tensor};
use crate::error::{Error, Result};

/// Writes a `(1, H, W)` tensor with values clamped to `[0, 1]`.
pub fn write_pgm(path: impl AsRef<Path>, t: &Tensor, comment: Option<&str>) -> Result<()> {
    let s = t.shape();
    if s.channels != 1 {
        return Err(Error::dim(format!("PGM needs one channel, got {s}")));
    }
    let mut out = b"P5\n".to_vec();
    if let Some(c) = comment {
        for line in c.lines() {
            out.extend_from_slice(format!("# {line}\n").as_bytes());
        }
    }
    out.extend_from_slice(format!("{} {}\n255\n", s.width, s.height).as_bytes());
    out.extend(
        t.data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

/// Reads a `P5` image into `(1, H, W)` with values scaled to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |reason: &str| Error::format(path, reason);

    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = &bytes[pos + 1..];
    if raster.len() != w * h {
        return Err(bad(&format!("expected {} pixels, found {}", w * h, raster.len())));
    }
    Tensor::new(
        Shape::new(1, h, w),
        raster.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

/// Writes `img_%04d.pgm` / `mask_%04d.pgm` pairs into `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[Sample], seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let comment = format!("seed={seed}");
    for (i, s) in samples.iter().enumerate() {
        write_pgm(dir.join(format!("img_{i:04}.pgm")), &s.image, Some(&comment))?;
        write_pgm(dir.join(format!("mask_{i:04}.pgm")), &s.mask, Some(&comment))?;
    }
    Ok(())
}

/// Loads consecutive pairs starting at index 0; masks are thresholded at 0.5.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    loop {
        let img = dir.join(format!("img_{:04}.pgm", out.len()));
        if !img.exists() {
            break;
        }
        let mask_path = dir.join(format!("mask_{:04}.pgm", out.len()));
        let image = read_pgm(&img)?;
        let mask = read_pgm(&mask_path)?.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
        out.push(Sample::new(image, mask)?);
    }
    if out.is_empty() {
        return Err(Error::Input(format!("no img_0000.pgm in {}", dir.display())));
    }
    Ok(out)
}
