//! Dense `channels × height × width` tensors and a reverse-mode tape.
//!
//! Only the operations the fusion decoder actually uses are provided:
//! per-pixel channel projection (a 1×1 convolution), corner-aligned bilinear
//! resizing, elementwise activations, weighted sums, and the few reductions
//! needed to build a segmentation loss.

mod ftnsr;
mod kernels;
mod tape;

use std::fmt;

use crate::error::{Error, Result};

pub use ftnsr::{read_ftnsr, write_ftnsr, FTNSR_MAGIC};
pub use kernels::{
    add, bce_with_logits_mean, channel_project, div, mul, pointwise, resize_bilinear,
    scale_shift, sub, weighted_sum,
};
pub use tape::{Gradients, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in one channel plane.
    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.channels, self.height, self.width)
    }
}

/// Row-major rank-3 array, channel outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dim(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::full(Shape::scalar(), value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for h in 0..shape.height {
                for w in 0..shape.width {
                    data.push(f(c, h, w));
                }
            }
        }
        Tensor { shape, data }
    }

    /// A `rows × cols` matrix stored as a `(rows, cols, 1)` tensor, the layout
    /// used for 1×1 convolution kernels.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::new(rows, cols, 1), data)
    }

    /// A length-`n` vector stored as a `(n, 1, 1)` tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::new(data.len(), 1, 1),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Tensor::from_fn(Shape::new(n, n, 1), |r, c, _| if r == c { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.shape.height + h) * self.shape.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, h, w)]
    }

    /// Single channel `c` as a `(1, H, W)` tensor.
    pub fn channel(&self, c: usize) -> Tensor {
        let plane = self.shape.plane();
        Tensor {
            shape: Shape::new(1, self.shape.height, self.shape.width),
            data: self.data[c * plane..(c + 1) * plane].to_vec(),
        }
    }

    /// Value of a `(1,1,1)` tensor.
    pub fn to_scalar(&self) -> Result<f64> {
        if self.shape != Shape::scalar() {
            return Err(Error::Contract(format!(
                "expected a scalar tensor, got shape {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; `INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y = apply(x)`.
    #[inline]
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The operation set shared by eager evaluation and the gradient tape.
///
/// Code written against this trait (the fusion scheduler in particular) runs
/// unchanged for plain inference and for training.
pub trait TensorOps {
    type Value: Clone;

    /// Bring an input tensor into the backend as a non-trainable value.
    fn constant(&mut self, t: &Tensor) -> Self::Value;

    fn shape_of(&self, v: &Self::Value) -> Shape;

    fn channel_project(
        &mut self,
        x: &Self::Value,
        weight: &Self::Value,
        bias: &Self::Value,
    ) -> Result<Self::Value>;

    fn resize_bilinear(&mut self, x: &Self::Value, target: (usize, usize)) -> Result<Self::Value>;

    fn pointwise(&mut self, x: &Self::Value, act: Activation) -> Self::Value;

    fn weighted_sum(&mut self, coeffs: &[f64], terms: &[&Self::Value]) -> Result<Self::Value>;

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
}

/// Direct evaluation on owned tensors, no recording.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl TensorOps for Eager {
    type Value = Tensor;

    fn constant(&mut self, t: &Tensor) -> Tensor {
        t.clone()
    }

    fn shape_of(&self, v: &Tensor) -> Shape {
        v.shape()
    }

    fn channel_project(&mut self, x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        kernels::channel_project(x, weight, bias)
    }

    fn resize_bilinear(&mut self, x: &Tensor, target: (usize, usize)) -> Result<Tensor> {
        kernels::resize_bilinear(x, target)
    }

    fn pointwise(&mut self, x: &Tensor, act: Activation) -> Tensor {
        kernels::pointwise(x, act)
    }

    fn weighted_sum(&mut self, coeffs: &[f64], terms: &[&Tensor]) -> Result<Tensor> {
        kernels::weighted_sum(coeffs, terms)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::add(a, b)
    }
}

/// Central-difference gradient of a scalar function, one entry at a time.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = x.data[i];
        probe.data[i] = orig + eps;
        let up = f(&probe);
        probe.data[i] = orig - eps;
        let down = f(&probe);
        probe.data[i] = orig;
        grad.data[i] = (up - down) / (2.0 * eps);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(matches!(
            Tensor::new(Shape::new(2, 2, 2), vec![0.0; 7]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn layout_is_channel_major() {
        let t = Tensor::from_fn(Shape::new(2, 2, 3), |c, h, w| (100 * c + 10 * h + w) as f64);
        assert_eq!(t.data()[t.index(1, 1, 2)], 112.0);
        assert_eq!(t.data()[6], 100.0);
        assert_eq!(t.channel(1).get(0, 0, 1), 101.0);
    }

    #[test]
    fn finite_diff_of_sum_is_ones() {
        let x = Tensor::from_fn(Shape::new(2, 3, 2), |c, h, w| (c + h * w) as f64 * 0.3 - 1.0);
        let g = finite_diff_grad(|t| t.sum(), &x, 1e-5);
        assert!(g.data().iter().all(|v| (v - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn finite_diff_of_zero_is_zero() {
        let x = Tensor::full(Shape::new(1, 4, 4), 0.7);
        let g = finite_diff_grad(|_| 0.0, &x, 1e-5);
        assert_eq!(g, Tensor::zeros(x.shape()));
    }

    #[test]
    fn finite_diff_of_half_square_norm_is_identity() {
        let x = Tensor::from_fn(Shape::new(3, 2, 2), |c, h, w| ((c * 7 + h * 3 + w) as f64).sin());
        let g = finite_diff_grad(|t| 0.5 * t.data().iter().map(|v| v * v).sum::<f64>(), &x, 1e-5);
        assert!(g.max_abs_diff(&x) <= 1e-6);
    }

    #[test]
    fn activation_parses() {
        assert_eq!("TANH".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("gelu".parse::<Activation>().is_err());
    }
}
