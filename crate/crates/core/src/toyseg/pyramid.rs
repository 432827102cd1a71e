use crate::diffarray::{resize_bilinear, Shape, Tensor};
use crate::error::{Error, Result};
use crate::fusecore::StageInput;

/// Feature channels produced per stage: value, d/dx, d/dy, 3×3 mean.
pub const ENCODER_CHANNELS: usize = 4;

fn full_resolution_features(image: &Tensor) -> Tensor {
    let (h, w) = image.shape().spatial();
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        image.get(0, y, x)
    };
    Tensor::from_fn(Shape::new(ENCODER_CHANNELS, h, w), |c, y, x| {
        let (y, x) = (y as isize, x as isize);
        match c {
            0 => at(y, x),
            1 => 0.5 * (at(y, x + 1) - at(y, x - 1)),
            2 => 0.5 * (at(y + 1, x) - at(y - 1, x)),
            _ => {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += at(y + dy, x + dx);
                    }
                }
                s / 9.0
            }
        }
    })
}

fn avg_pool(t: &Tensor, factor: usize) -> Tensor {
    if factor == 1 {
        return t.clone();
    }
    let s = t.shape();
    let (oh, ow) = (s.height / factor, s.width / factor);
    let area = (factor * factor) as f64;
    Tensor::from_fn(Shape::new(s.channels, oh, ow), |c, y, x| {
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += t.get(c, y * factor + dy, x * factor + dx);
            }
        }
        acc / area
    })
}

/// Fixed encoder: stage `L` at full resolution, stage `i` pooled by
/// `2^(L-i)`.
pub fn make_pyramid(image: &Tensor, levels: usize) -> Result<Vec<StageInput>> {
    let s = image.shape();
    if s.channels != 1 {
        return Err(Error::dim(format!("encoder expects one channel, got {s}")));
    }
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let factor = 1usize
        .checked_shl(levels as u32 - 1)
        .filter(|f| *f <= s.height.max(s.width))
        .ok_or_else(|| Error::Config(format!("{levels} levels is too deep for {s}")))?;
    if s.height % factor != 0 || s.width % factor != 0 {
        return Err(Error::Config(format!(
            "image {}x{} is not divisible by 2^{}",
            s.height,
            s.width,
            levels - 1
        )));
    }
    let features = full_resolution_features(image);
    Ok((1..=levels)
        .map(|i| StageInput::new(i, avg_pool(&features, 1 << (levels - i))))
        .collect())
}

/// Stage inputs pre-resized to `size`.
///
/// Resizing is parameter-free and resizing to the current size is the
/// identity, so the decoder gives the same result on these inputs as on the
/// raw pyramid while skipping the interpolation on every call.
pub fn align_stages(stages: &[StageInput], size: (usize, usize)) -> Result<Vec<StageInput>> {
    stages
        .iter()
        .map(|s| Ok(StageInput::new(s.index, resize_bilinear(&s.x, size)?)))
        .collect()
}
