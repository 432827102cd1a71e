use super::{sigmoid, Activation, Shape, Tensor};
use crate::error::{Error, Result};

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shape {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_projection(x: Shape, weight: Shape, bias: Shape) -> Result<()> {
    if weight.width != 1 {
        return Err(Error::dim(format!(
            "projection weight must be (out, in, 1), got {weight}"
        )));
    }
    if weight.height != x.channels {
        return Err(Error::dim(format!(
            "projection weight has {} input columns, tensor has {} channels",
            weight.height, x.channels
        )));
    }
    if bias != Shape::new(weight.channels, 1, 1) {
        return Err(Error::dim(format!(
            "projection bias must be ({},1,1), got {bias}",
            weight.channels
        )));
    }
    Ok(())
}

/// Per-pixel linear map over channels: `out[c] = Σ_k W[c,k]·x[k] + b[c]`.
///
/// `weight` is a `(C_out, C_in, 1)` tensor and `bias` is `(C_out, 1, 1)`.
pub fn channel_project(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let xs = x.shape();
    check_projection(xs, weight.shape(), bias.shape())?;
    let c_in = xs.channels;
    let c_out = weight.shape().channels;
    let plane = xs.plane();
    let w = weight.data();
    let mut out = vec![0.0; c_out * plane];
    for (co, dst) in out.chunks_exact_mut(plane).enumerate() {
        dst.fill(bias.data()[co]);
        for ci in 0..c_in {
            let k = w[co * c_in + ci];
            if k == 0.0 {
                continue;
            }
            let src = &x.data()[ci * plane..(ci + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    Ok(Tensor::from_parts(Shape::new(c_out, xs.height, xs.width), out))
}

/// Gradients of `channel_project` with respect to input, weight and bias.
pub(crate) fn channel_project_backward(
    x: &Tensor,
    weight: &Tensor,
    upstream: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let xs = x.shape();
    let c_in = xs.channels;
    let c_out = weight.shape().channels;
    let plane = xs.plane();
    let w = weight.data();
    let up = upstream.data();

    let mut gx = vec![0.0; xs.len()];
    let mut gw = vec![0.0; c_out * c_in];
    let mut gb = vec![0.0; c_out];
    for co in 0..c_out {
        let u = &up[co * plane..(co + 1) * plane];
        gb[co] = u.iter().sum();
        for ci in 0..c_in {
            let src = &x.data()[ci * plane..(ci + 1) * plane];
            gw[co * c_in + ci] = u.iter().zip(src).map(|(a, b)| a * b).sum();
            let k = w[co * c_in + ci];
            if k != 0.0 {
                for (g, a) in gx[ci * plane..(ci + 1) * plane].iter_mut().zip(u) {
                    *g += k * a;
                }
            }
        }
    }
    (
        Tensor::from_parts(xs, gx),
        Tensor::from_parts(weight.shape(), gw),
        Tensor::from_parts(Shape::new(c_out, 1, 1), gb),
    )
}

/// Source position for each destination index along one axis, corner aligned:
/// destination 0 maps to source 0 and the last destination to the last source.
struct AxisMap {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisMap {
    fn new(src: usize, dst: usize) -> Self {
        let mut lo = Vec::with_capacity(dst);
        let mut hi = Vec::with_capacity(dst);
        let mut frac = Vec::with_capacity(dst);
        for i in 0..dst {
            let pos = if dst > 1 && src > 1 {
                (i * (src - 1)) as f64 / (dst - 1) as f64
            } else {
                0.0
            };
            let l = (pos.floor() as usize).min(src - 1);
            let f = pos - l as f64;
            lo.push(l);
            hi.push((l + 1).min(src - 1));
            frac.push(if l + 1 < src { f } else { 0.0 });
        }
        AxisMap { lo, hi, frac }
    }
}

/// Corner-aligned bilinear resampling of every channel to `target = (H, W)`.
///
/// Interpolation is written as nested lerps so constant fields come back
/// exactly; resizing to the current size returns a copy of the input.
pub fn resize_bilinear(x: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let xs = x.shape();
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::dim(format!("resize target {th}x{tw} has a zero side")));
    }
    if xs.height == 0 || xs.width == 0 {
        return Err(Error::dim(format!("cannot resize empty tensor {xs}")));
    }
    if (xs.height, xs.width) == target {
        return Ok(x.clone());
    }
    let ym = AxisMap::new(xs.height, th);
    let xm = AxisMap::new(xs.width, tw);
    let out_shape = Shape::new(xs.channels, th, tw);
    let mut out = Vec::with_capacity(out_shape.len());
    let src_plane = xs.plane();
    for c in 0..xs.channels {
        let src = &x.data()[c * src_plane..(c + 1) * src_plane];
        for oy in 0..th {
            let (r0, r1, fy) = (ym.lo[oy] * xs.width, ym.hi[oy] * xs.width, ym.frac[oy]);
            for ox in 0..tw {
                let (c0, c1, fx) = (xm.lo[ox], xm.hi[ox], xm.frac[ox]);
                let (v00, v01) = (src[r0 + c0], src[r0 + c1]);
                let (v10, v11) = (src[r1 + c0], src[r1 + c1]);
                let top = v00 + fx * (v01 - v00);
                let bottom = v10 + fx * (v11 - v10);
                out.push(top + fy * (bottom - top));
            }
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Adjoint of `resize_bilinear`: scatters `upstream` back onto the source grid.
pub(crate) fn resize_bilinear_backward(src_shape: Shape, upstream: &Tensor) -> Tensor {
    let us = upstream.shape();
    if (src_shape.height, src_shape.width) == (us.height, us.width) {
        return upstream.clone();
    }
    let ym = AxisMap::new(src_shape.height, us.height);
    let xm = AxisMap::new(src_shape.width, us.width);
    let mut g = vec![0.0; src_shape.len()];
    let sp = src_shape.plane();
    let up_plane = us.plane();
    for c in 0..us.channels {
        let dst = &mut g[c * sp..(c + 1) * sp];
        let u = &upstream.data()[c * up_plane..(c + 1) * up_plane];
        for oy in 0..us.height {
            let (r0, r1, fy) = (
                ym.lo[oy] * src_shape.width,
                ym.hi[oy] * src_shape.width,
                ym.frac[oy],
            );
            for ox in 0..us.width {
                let (c0, c1, fx) = (xm.lo[ox], xm.hi[ox], xm.frac[ox]);
                let a = u[oy * us.width + ox];
                dst[r0 + c0] += a * (1.0 - fy) * (1.0 - fx);
                dst[r0 + c1] += a * (1.0 - fy) * fx;
                dst[r1 + c0] += a * fy * (1.0 - fx);
                dst[r1 + c1] += a * fy * fx;
            }
        }
    }
    Tensor::from_parts(src_shape, g)
}

pub fn pointwise(x: &Tensor, act: Activation) -> Tensor {
    x.map(|v| act.apply(v))
}

/// `Σ_j coeffs[j]·terms[j]` over same-shaped tensors.
pub fn weighted_sum(coeffs: &[f64], terms: &[&Tensor]) -> Result<Tensor> {
    if terms.is_empty() {
        return Err(Error::dim("weighted_sum over an empty list"));
    }
    if coeffs.len() != terms.len() {
        return Err(Error::dim(format!(
            "weighted_sum has {} coefficients for {} terms",
            coeffs.len(),
            terms.len()
        )));
    }
    let shape = terms[0].shape();
    for t in &terms[1..] {
        same_shape(terms[0], t, "weighted_sum")?;
    }
    let mut out = vec![0.0; shape.len()];
    for (&c, t) in coeffs.iter().zip(terms) {
        for (o, v) in out.iter_mut().zip(t.data()) {
            *o += c * v;
        }
    }
    Ok(Tensor::from_parts(shape, out))
}

fn zip_with(a: &Tensor, b: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(a, b, op)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape(), data))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "add", |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "sub", |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "mul", |x, y| x * y)
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "div", |x, y| x / y)
}

/// `scale·x + shift` elementwise.
pub fn scale_shift(x: &Tensor, scale: f64, shift: f64) -> Tensor {
    x.map(|v| scale * v + shift)
}

/// Mean binary cross-entropy between `logits` and `target` probabilities,
/// evaluated in the overflow-free form `max(z,0) - z·t + ln(1 + e^{-|z|})`.
pub fn bce_with_logits_mean(logits: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape(logits, target, "bce_with_logits")?;
    let n = logits.len() as f64;
    let total: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    Ok(total / n)
}

pub(crate) fn bce_with_logits_backward(logits: &Tensor, target: &Tensor, upstream: f64) -> Tensor {
    let n = logits.len() as f64;
    let data = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| upstream * (sigmoid(z) - t) / n)
        .collect();
    Tensor::from_parts(logits.shape(), data)
}
