//! Reverse-mode differentiation over an eagerly evaluated operation list.
//!
//! Every operation computes its value immediately and appends a node; the
//! node list is therefore already in topological order and `backward` walks
//! it in reverse.

use super::kernels;
use super::optim::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    BatchMatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    Concat(Vec<usize>, usize),
    Slice { src: usize, axis: usize, start: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

/// Operation recorder.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every parameter leaf on `tape` into the matching
    /// accumulator of `store`.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) {
        for (i, node) in tape.nodes.iter().enumerate() {
            if let (Some(name), Some(g)) = (&node.param, &self.grads[i]) {
                store.add_grad(name, g);
            }
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::BatchMatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b) => self.nodes[*a].requires_grad || self.nodes[*b].requires_grad,
            Op::Concat(parts, _) => parts.iter().any(|&p| self.nodes[p].requires_grad),
            Op::Affine(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Clamp(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Slice { src: a, .. }
            | Op::Reshape(a) => self.nodes[*a].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that is not differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input not tied to a parameter store.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf bound to parameter `name` of `store`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store
            .get(name)
            .ok_or_else(|| Error::validation("parameter", format!("unknown parameter {name:?}")))?
            .clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param: Some(name.to_string()),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new(vec![m, n], data)?, Op::MatMul(a.0, b.0), "matmul")
    }

    /// Batched product `[B,m,k] x [B,k,n] -> [B,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::Shape {
                op: "bmm",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(batch * m * n);
        for i in 0..batch {
            data.extend(kernels::matmul(
                &av[i * m * k..(i + 1) * m * k],
                &bv[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
            ));
        }
        self.push(Tensor::new(vec![batch, m, n], data)?, Op::BatchMatMul(a.0, b.0), "bmm")
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::Shape {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let period = bv.len().max(1);
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data()[i % period]))
            .collect();
        Tensor::new(av.shape().to_vec(), data).expect("shape preserved")
    }

    /// Elementwise `a + b`; `b` may broadcast over leading axes of `a` (its
    /// shape must be a suffix of `a`'s).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("add", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x + y);
        self.push(out, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("sub", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("mul", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a.0, b.0), "mul")
    }

    /// `a * scale + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * scale + shift);
        self.push(out, Op::Affine(a.0, scale), "affine")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a.0), "tanh")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a.0), "exp")
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a.0), "ln")
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi), "clamp")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Empty("tensor in mean"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a.0), "mean")
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat input"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Shape {
                op: "concat",
                left: base,
                right: vec![axis],
            });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let d = self.shape(p)[axis];
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let ids = parts.iter().map(|p| p.0).collect();
        self.push(Tensor::new(shape, data)?, Op::Concat(ids, axis), "concat")
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                left: shape,
                right: vec![axis, start, len],
            });
        }
        let (outer, d, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * d * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Slice { src: a.0, axis, start },
            "slice",
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape.to_vec())?;
        self.push(out, Op::Reshape(a.0), "reshape")
    }

    /// Gradients of the single-element `loss` with respect to every
    /// differentiable node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(loss).to_vec(),
                right: vec![],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: usize, g: Tensor) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Reduces a gradient of `a`'s shape onto a suffix-broadcast operand.
    fn reduce_broadcast(g: &Tensor, target_shape: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(target_shape);
        let period = out.len().max(1);
        let od = out.data_mut();
        for (i, &x) in g.data().iter().enumerate() {
            od[i % period] += x;
        }
        out
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |i: usize| &self.nodes[i].value;
        let needs = |i: usize| self.nodes[i].requires_grad;
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (sa, sb) = (val(a).shape(), val(b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if needs(a) {
                    let da = kernels::matmul_bt(g.data(), val(b).data(), m, k, n);
                    self.accumulate(grads, a, Tensor::new(vec![m, k], da)?);
                }
                if needs(b) {
                    let db = kernels::matmul_at(val(a).data(), g.data(), m, k, n);
                    self.accumulate(grads, b, Tensor::new(vec![k, n], db)?);
                }
            }
            &Op::BatchMatMul(a, b) => {
                let (sa, sb) = (val(a).shape(), val(b).shape());
                let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (av, bv, gv) = (val(a).data(), val(b).data(), g.data());
                if needs(a) {
                    let mut da = Vec::with_capacity(batch * m * k);
                    for i in 0..batch {
                        da.extend(kernels::matmul_bt(
                            &gv[i * m * n..(i + 1) * m * n],
                            &bv[i * k * n..(i + 1) * k * n],
                            m,
                            k,
                            n,
                        ));
                    }
                    self.accumulate(grads, a, Tensor::new(vec![batch, m, k], da)?);
                }
                if needs(b) {
                    let mut db = Vec::with_capacity(batch * k * n);
                    for i in 0..batch {
                        db.extend(kernels::matmul_at(
                            &av[i * m * k..(i + 1) * m * k],
                            &gv[i * m * n..(i + 1) * m * n],
                            m,
                            k,
                            n,
                        ));
                    }
                    self.accumulate(grads, b, Tensor::new(vec![batch, k, n], db)?);
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let negate = matches!(self.nodes[id].op, Op::Sub(..));
                if needs(a) {
                    self.accumulate(grads, a, g.clone());
                }
                if needs(b) {
                    let mut gb = Self::reduce_broadcast(g, val(b).shape());
                    if negate {
                        gb = gb.map(|x| -x);
                    }
                    self.accumulate(grads, b, gb);
                }
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let period = bv.len().max(1);
                if needs(a) {
                    let data = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| x * bv.data()[i % period])
                        .collect();
                    self.accumulate(grads, a, Tensor::new(av.shape().to_vec(), data)?);
                }
                if needs(b) {
                    let full: Vec<f64> = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    let full = Tensor::new(av.shape().to_vec(), full)?;
                    self.accumulate(grads, b, Self::reduce_broadcast(&full, bv.shape()));
                }
            }
            &Op::Affine(a, scale) => self.accumulate(grads, a, g.map(|x| x * scale)),
            &Op::Sigmoid(a) => {
                let y = &self.nodes[id].value;
                let data = g.data().iter().zip(y.data()).map(|(d, s)| d * s * (1.0 - s)).collect();
                self.accumulate(grads, a, Tensor::new(y.shape().to_vec(), data)?);
            }
            &Op::Tanh(a) => {
                let y = &self.nodes[id].value;
                let data = g.data().iter().zip(y.data()).map(|(d, t)| d * (1.0 - t * t)).collect();
                self.accumulate(grads, a, Tensor::new(y.shape().to_vec(), data)?);
            }
            &Op::Exp(a) => {
                let y = &self.nodes[id].value;
                let data = g.data().iter().zip(y.data()).map(|(d, e)| d * e).collect();
                self.accumulate(grads, a, Tensor::new(y.shape().to_vec(), data)?);
            }
            &Op::Ln(a) => {
                let x = val(a);
                let data = g.data().iter().zip(x.data()).map(|(d, x)| d / x).collect();
                self.accumulate(grads, a, Tensor::new(x.shape().to_vec(), data)?);
            }
            &Op::Clamp(a, lo, hi) => {
                let x = val(a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&d, &x)| if x < lo || x > hi { 0.0 } else { d })
                    .collect();
                self.accumulate(grads, a, Tensor::new(x.shape().to_vec(), data)?);
            }
            &Op::Sum(a) => {
                let d = g.item();
                self.accumulate(grads, a, Tensor::full(val(a).shape(), d));
            }
            &Op::Mean(a) => {
                let d = g.item() / val(a).len() as f64;
                self.accumulate(grads, a, Tensor::full(val(a).shape(), d));
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = split_axis(g.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let shape = val(p).shape().to_vec();
                    let d = shape[*axis];
                    if needs(p) {
                        let mut data = Vec::with_capacity(val(p).len());
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            data.extend_from_slice(&g.data()[base..base + d * inner]);
                        }
                        self.accumulate(grads, p, Tensor::new(shape, data)?);
                    }
                    offset += d;
                }
            }
            &Op::Slice { src, axis, start } => {
                let shape = val(src).shape().to_vec();
                let (outer, d, inner) = split_axis(&shape, axis);
                let len = g.shape()[axis];
                let mut out = Tensor::zeros(&shape);
                let od = out.data_mut();
                for o in 0..outer {
                    let base = o * d * inner + start * inner;
                    let gbase = o * len * inner;
                    od[base..base + len * inner].copy_from_slice(&g.data()[gbase..gbase + len * inner]);
                }
                self.accumulate(grads, src, out);
            }
            &Op::Reshape(a) => {
                let r = g.clone().reshaped(val(a).shape().to_vec())?;
                self.accumulate(grads, a, r);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of d(loss)/d(input) for a tape built by `f`.
    fn check<F>(inputs: &[Tensor], f: F, tol: f64)
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars).unwrap();
        let grads = tape.backward(loss).unwrap();
        let eval = |xs: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
            let l = f(&mut t, &vs).unwrap();
            t.value(l).item()
        };
        let eps = 1e-5;
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
            for e in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[e] += eps;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[e] -= eps;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.data()[e];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < tol, "input {i} entry {e}: analytic {a} numeric {numeric}");
            }
        }
    }

    fn det(shape: &[usize], salt: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|i| ((i as f64 + 1.0) * 0.731 + salt).sin()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let tol = 1e-4;
        check(&[det(&[3, 4], 0.1), det(&[4, 2], 0.2)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            t.sum(y)
        }, tol);
        check(&[det(&[2, 3, 4], 0.3), det(&[2, 4, 2], 0.4)], |t, v| {
            let y = t.bmm(v[0], v[1])?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[3, 4], 0.5), det(&[4], 0.6)], |t, v| {
            let y = t.add(v[0], v[1])?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[3, 4], 0.5), det(&[4], 0.6)], |t, v| {
            let y = t.sub(v[0], v[1])?;
            let y = t.mul(y, y)?;
            t.mean(y)
        }, tol);
        check(&[det(&[3, 4], 0.7), det(&[4], 0.8)], |t, v| {
            let y = t.mul(v[0], v[1])?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 0.9)], |t, v| {
            let y = t.affine(v[0], -1.5, 0.25)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 1.0)], |t, v| {
            let y = t.sigmoid(v[0])?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 1.1)], |t, v| {
            let y = t.tanh(v[0])?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 1.2)], |t, v| {
            let y = t.exp(v[0])?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 1.3)], |t, v| {
            let y = t.exp(v[0])?;
            let y = t.ln(y)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[5], 1.4)], |t, v| {
            let y = t.clamp(v[0], -0.5, 0.5)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[2, 3], 1.5), det(&[2, 2], 1.6)], |t, v| {
            let y = t.concat(&[v[0], v[1]], 1)?;
            let w = t.constant(det(&[2, 5], 9.0));
            let y = t.mul(y, w)?;
            t.sum(y)
        }, tol);
        check(&[det(&[3, 6], 1.7)], |t, v| {
            let y = t.slice(v[0], 1, 2, 3)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }, tol);
        check(&[det(&[3, 4], 1.8)], |t, v| {
            let y = t.reshape(v[0], &[2, 6])?;
            let w = t.constant(det(&[6], 3.0));
            let y = t.mul(y, w)?;
            t.sum(y)
        }, tol);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(err.to_string(), "shape mismatch in matmul: [2, 3] vs [2, 3]");
        let c = t.constant(Tensor::zeros(&[2]));
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![-1.0]));
        assert!(matches!(t.ln(a), Err(Error::NonFinite { op: "ln" })));
        let b = t.constant(Tensor::vector(vec![1000.0]));
        assert!(matches!(t.exp(b), Err(Error::NonFinite { op: "exp" })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::scalar(2.0));
        let x = t.leaf(Tensor::scalar(1.0));
        let y = t.mul(c, x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().item(), 2.0);
    }
}
