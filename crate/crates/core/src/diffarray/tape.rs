use super::kernels;
use super::{Activation, Shape, Tensor, TensorOps};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Project { x: Var, weight: Var, bias: Var },
    Resize { x: Var },
    Pointwise { x: Var, act: Activation },
    WeightedSum { coeffs: Vec<f64>, terms: Vec<Var> },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    ScaleShift { x: Var, scale: f64 },
    Sum { x: Var },
    BceWithLogits { logits: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of tensor operations for reverse-mode differentiation.
///
/// A value requires a gradient when it is a leaf registered with
/// `requires_grad = true` or depends on one. `backward` visits nodes in
/// reverse insertion order, which is a valid topological order because every
/// op only refers to earlier nodes.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, panicking if the leaf was not registered for grads.
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.get(v)
            .unwrap_or_else(|| panic!("no gradient recorded for {v:?}"))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::mul(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::div(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Div { a, b }, rg))
    }

    pub fn scale_shift(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = kernels::scale_shift(self.value(x), scale, shift);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::ScaleShift { x, scale }, rg)
    }

    /// Sum of all entries as a `(1,1,1)` scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Sum { x }, rg)
    }

    /// Mean binary cross-entropy of `logits` against a fixed target.
    pub fn bce_with_logits_mean(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let v = kernels::bce_with_logits_mean(self.value(logits), target)?;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(v),
            Op::BceWithLogits {
                logits,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every leaf registered with `requires_grad` gets an entry, zero when the
    /// loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.value(loss).shape();
        if ls != Shape::scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {ls}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(up) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &up, &mut grads);
            grads[idx] = Some(up);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            let is_leaf = matches!(node.op, Op::Leaf);
            if is_leaf && node.requires_grad {
                if grads[idx].is_none() {
                    grads[idx] = Some(Tensor::zeros(node.value.shape()));
                }
            } else if !is_leaf {
                // only leaf gradients are part of the public result
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Project { x, weight, bias } => {
                let (gx, gw, gb) =
                    kernels::channel_project_backward(self.value(*x), self.value(*weight), up);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *weight, gw);
                self.accumulate(grads, *bias, gb);
            }
            Op::Resize { x } => {
                let g = kernels::resize_bilinear_backward(self.value(*x).shape(), up);
                self.accumulate(grads, *x, g);
            }
            Op::Pointwise { x, act } => {
                let input = self.value(*x);
                let data = input
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(up.data())
                    .map(|((&xi, &yi), &u)| u * act.derivative(xi, yi))
                    .collect();
                self.accumulate(grads, *x, Tensor::from_parts(input.shape(), data));
            }
            Op::WeightedSum { coeffs, terms } => {
                for (&c, &t) in coeffs.iter().zip(terms) {
                    self.accumulate(grads, t, up.map(|u| c * u));
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = kernels::mul(up, vb).expect("shapes checked on forward");
                let gb = kernels::mul(up, va).expect("shapes checked on forward");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Div { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = kernels::div(up, vb).expect("shapes checked on forward");
                let data = up
                    .data()
                    .iter()
                    .zip(va.data())
                    .zip(vb.data())
                    .map(|((&u, &x), &y)| -u * x / (y * y))
                    .collect();
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, Tensor::from_parts(vb.shape(), data));
            }
            Op::ScaleShift { x, scale } => {
                self.accumulate(grads, *x, up.map(|u| scale * u));
            }
            Op::Sum { x } => {
                let u = up.data()[0];
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), u));
            }
            Op::BceWithLogits { logits, target } => {
                let g = kernels::bce_with_logits_backward(self.value(*logits), target, up.data()[0]);
                self.accumulate(grads, *logits, g);
            }
        }
    }
}

impl TensorOps for Tape {
    type Value = Var;

    fn constant(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone(), false)
    }

    fn shape_of(&self, v: &Var) -> Shape {
        self.value(*v).shape()
    }

    fn channel_project(&mut self, x: &Var, weight: &Var, bias: &Var) -> Result<Var> {
        let value = kernels::channel_project(self.value(*x), self.value(*weight), self.value(*bias))?;
        let rg = self.any_grad(&[*x, *weight, *bias]);
        Ok(self.push(
            value,
            Op::Project {
                x: *x,
                weight: *weight,
                bias: *bias,
            },
            rg,
        ))
    }

    fn resize_bilinear(&mut self, x: &Var, target: (usize, usize)) -> Result<Var> {
        let value = kernels::resize_bilinear(self.value(*x), target)?;
        let rg = self.any_grad(&[*x]);
        Ok(self.push(value, Op::Resize { x: *x }, rg))
    }

    fn pointwise(&mut self, x: &Var, act: Activation) -> Var {
        let value = kernels::pointwise(self.value(*x), act);
        let rg = self.any_grad(&[*x]);
        self.push(value, Op::Pointwise { x: *x, act }, rg)
    }

    fn weighted_sum(&mut self, coeffs: &[f64], terms: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor> = terms.iter().map(|v| self.value(**v)).collect();
        let value = kernels::weighted_sum(coeffs, &values)?;
        let vars: Vec<Var> = terms.iter().map(|v| **v).collect();
        let rg = self.any_grad(&vars);
        Ok(self.push(
            value,
            Op::WeightedSum {
                coeffs: coeffs.to_vec(),
                terms: vars,
            },
            rg,
        ))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let value = kernels::add(self.value(*a), self.value(*b))?;
        let rg = self.any_grad(&[*a, *b]);
        Ok(self.push(value, Op::Add { a: *a, b: *b }, rg))
    }
}
