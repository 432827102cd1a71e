use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffarray::{Shape, Tensor};
use crate::error::{Error, Result};

/// Grayscale image in `[0, 1]` and its binary mask, both `(1, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Tensor,
}

impl Sample {
    pub fn new(image: Tensor, mask: Tensor) -> Result<Self> {
        if image.shape() != mask.shape() || image.shape().channels != 1 {
            return Err(Error::dim(format!(
                "image {} and mask {} must share a single-channel shape",
                image.shape(),
                mask.shape()
            )));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Contract("mask values must be 0 or 1".into()));
        }
        Ok(Sample { image, mask })
    }

    pub fn coverage(&self) -> f64 {
        self.mask.sum() / self.mask.len() as f64
    }
}

#[derive(Clone, Copy, Debug)]
enum Blob {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Blob::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
            Blob::Rect { cx, cy, hx, hy } => (x - cx).abs() <= hx && (y - cy).abs() <= hy,
        }
    }

    fn random(rng: &mut impl Rng, h: usize, w: usize) -> Self {
        let (hf, wf) = (h as f64, w as f64);
        let cx = rng.random_range(0.2..0.8) * wf;
        let cy = rng.random_range(0.2..0.8) * hf;
        let sx = rng.random_range(0.08..0.22) * wf;
        let sy = rng.random_range(0.08..0.22) * hf;
        if rng.random_bool(0.5) {
            Blob::Ellipse { cx, cy, rx: sx, ry: sy }
        } else {
            Blob::Rect { cx, cy, hx: sx, hy: sy }
        }
    }
}

const SUPERSAMPLE: usize = 4;
const NOISE_SIGMA: f64 = 0.05;

fn render(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Sample {
    let count = rng.random_range(1..=3);
    let blobs: Vec<Blob> = (0..count).map(|_| Blob::random(rng, h, w)).collect();
    let background = rng.random_range(0.1..0.35);
    let foreground = rng.random_range(0.65..0.9);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");

    let shape = Shape::new(1, h, w);
    let mut coverage = vec![0.0; h * w];
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) * step;
                    let py = y as f64 + (sy as f64 + 0.5) * step;
                    if blobs.iter().any(|b| b.contains(px, py)) {
                        hits += 1;
                    }
                }
            }
            coverage[y * w + x] = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
        }
    }
    let image = coverage
        .iter()
        .map(|&c| {
            let v = background + (foreground - background) * c + noise.sample(rng);
            v.clamp(0.0, 1.0)
        })
        .collect();
    let mask = coverage
        .iter()
        .map(|&c| if c >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    Sample {
        image: Tensor::new(shape, image).expect("sized to shape"),
        mask: Tensor::new(shape, mask).expect("sized to shape"),
    }
}

/// `n` anti-aliased shape images; identical output for identical `seed`.
pub fn synth_dataset(n: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Sample>> {
    if height < 16 || width < 16 {
        return Err(Error::Config(format!(
            "synthetic images must be at least 16x16, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| render(&mut rng, height, width)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(5, 32, 32, 11).unwrap();
        let b = synth_dataset(5, 32, 32, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(5, 32, 32, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_and_too_small() {
        assert!(synth_dataset(0, 16, 16, 1).unwrap().is_empty());
        assert!(synth_dataset(3, 8, 32, 1).is_err());
    }

    #[test]
    fn masks_binary_images_in_range() {
        for s in synth_dataset(20, 32, 24, 5).unwrap() {
            assert!(s.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(s.coverage() > 0.0);
        }
    }

    #[test]
    fn mean_coverage_is_moderate() {
        let data = synth_dataset(100, 32, 32, 2024).unwrap();
        let mean = data.iter().map(Sample::coverage).sum::<f64>() / 100.0;
        assert!((0.05..=0.6).contains(&mean), "{mean}");
    }

    #[test]
    fn sample_rejects_soft_mask() {
        let img = Tensor::zeros(Shape::new(1, 2, 2));
        let mask = Tensor::full(Shape::new(1, 2, 2), 0.5);
        assert!(matches!(Sample::new(img, mask), Err(Error::Contract(_))));
    }
}
