//! Reverse-mode differentiation over a linear record of executed primitives.
//!
//! Every primitive evaluates eagerly, stores its output on the tape and checks
//! it for non-finite values. `backward` walks the record once in reverse.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::array::Array;
use super::params::{ParamId, ParameterStore};
use crate::error::{contract, Error, Result};

/// Floor applied inside `log` before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Log,
    LogSigmoid,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Exp => "exp",
            Activation::Log => "log",
            Activation::LogSigmoid => "log_sigmoid",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Exp => libm::exp(x),
            Activation::Log => libm::log(x.max(LOG_FLOOR)),
            Activation::LogSigmoid => log_sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Exp => y,
            Activation::Log => {
                if x > LOG_FLOOR {
                    1.0 / x
                } else {
                    0.0
                }
            }
            Activation::LogSigmoid => sigmoid(-x),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x)
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Map(Var, Activation),
    LeakyRelu(Var, f64),
    Softmax(Var),
    Reshape(Var),
    Permute(Var, [usize; 3]),
    ConcatLast(Box<[Var]>),
    SliceLast(Var, usize),
    Stack(Box<[Var]>),
    Index0(Var, usize),
    Sum(Var),
    Mean(Var),
    TemporalConv {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        pad: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul(..) => "batch_matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::AddBias(..) => "add_bias",
            Op::Affine(..) => "affine",
            Op::Map(_, a) => a.name(),
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Softmax(..) => "softmax",
            Op::Reshape(..) => "reshape",
            Op::Permute(..) => "permute",
            Op::ConcatLast(..) => "concat",
            Op::SliceLast(..) => "slice",
            Op::Stack(..) => "stack",
            Op::Index0(..) => "index",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::TemporalConv { .. } => "temporal_conv",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::BatchMatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddBias(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Affine(a, _)
            | Op::Map(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Softmax(a)
            | Op::Reshape(a)
            | Op::Permute(a, _)
            | Op::SliceLast(a, _)
            | Op::Index0(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::ConcatLast(vs) | Op::Stack(vs) => vs.to_vec(),
            Op::TemporalConv { x, kernel, bias, .. } => {
                let mut v = vec![*x, *kernel];
                v.extend(bias.iter().copied());
                v
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
}

/// Parameters of one [`ParameterStore`] registered as tape leaves.
///
/// Every forward pass that uses the same binding reads the same leaf nodes,
/// so gradients from all passes accumulate onto one set of parameters.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Ordered record of executed primitives.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Reverse-mode gradients for every node of a tape.
#[derive(Debug, Clone)]
pub struct Grads {
    per_node: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    /// Gradient with respect to `v`; exactly zero when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Array {
        let shape = &self.shapes[v.0];
        match &self.per_node[v.0] {
            Some(g) => Array::new(shape, g.clone()).expect("gradient shape"),
            None => Array::zeros(shape),
        }
    }

    /// Gradients for a bound store, in store order.
    pub fn for_binding(&self, binding: &Binding) -> Vec<Array> {
        binding.vars.iter().map(|v| self.wrt(*v)).collect()
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

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Indices of the nodes consumed by `v`.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    /// True when every node's inputs were recorded before it.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.inputs().iter().all(|v| v.0 < i))
    }

    fn push(&mut self, value: Array, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = op
            .inputs()
            .iter()
            .any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Array) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    /// Leaf that receives gradients.
    pub fn variable(&mut self, value: Array) -> Result<Var> {
        let v = self.push(value, Op::Leaf)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    pub fn bind(&mut self, store: &ParameterStore) -> Result<Binding> {
        let vars = store
            .ids()
            .map(|id| self.variable(store.get(id).clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Binding { vars })
    }

    fn dim_err<T>(&self, op: &'static str, a: Var, b: Var) -> Result<T> {
        Err(Error::Dimension {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return self.dim_err("matmul", a, b);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Array::new(&[m, n], out)?, Op::MatMul(a, b))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return self.dim_err("batch_matmul", a, b);
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            matmul_into(
                &da[i * m * k..(i + 1) * m * k],
                &db[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        self.push(Array::new(&[bs, m, n], out)?, Op::BatchMatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: "transpose",
                lhs: s.to_vec(),
                rhs: vec![2],
            });
        }
        let (m, n) = (s[0], s[1]);
        let d = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        self.push(Array::new(&[n, m], out)?, Op::Transpose(a))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return self.dim_err(op.name(), a, b);
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Array::new(&shape, out)?, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise quotient; a zero divisor is a numeric-domain error.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|v| *v == 0.0) {
            return Err(Error::NumericDomain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.zip(a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = self.value(x).cols();
        if self.value(b).len() != c {
            return self.dim_err("add_bias", x, b);
        }
        let bias = self.value(b).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(bias).map(|(u, v)| u + v))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Array::new(&shape, out)?, Op::AddBias(x, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    /// `s * x + c`, elementwise.
    pub fn affine(&mut self, x: Var, s: f64, c: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| s * v + c).collect();
        let shape = self.shape(x).to_vec();
        let v = self.push(Array::new(&shape, out)?, Op::Affine(x, s))?;
        Ok(v)
    }

    pub fn map(&mut self, x: Var, f: Activation) -> Result<Var> {
        if f == Activation::Log {
            if let Some(bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
                return Err(Error::NumericDomain {
                    op: "log",
                    detail: format!("input {bad} is not positive"),
                });
            }
        }
        let out: Vec<f64> = self.value(x).data().iter().map(|v| f.apply(*v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Array::new(&shape, out)?, Op::Map(x, f))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, Activation::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Activation::Relu)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map(x, Activation::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map(x, Activation::Log)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|v| if *v > 0.0 { *v } else { slope * v })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Array::new(&shape, out)?, Op::LeakyRelu(x, slope))
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let c = self.value(x).cols();
        let mut out = Vec::with_capacity(self.value(x).len());
        for row in self.value(x).data().chunks(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut z = 0.0;
            for v in row {
                let e = libm::exp(v - m);
                z += e;
                out.push(e);
            }
            for e in &mut out[start..] {
                *e /= z;
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(Array::new(&shape, out)?, Op::Softmax(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        self.push(value, Op::Reshape(x))
    }

    /// Axis permutation of a rank-3 array: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: [usize; 3]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut sorted = perm;
        sorted.sort_unstable();
        if s.len() != 3 || sorted != [0, 1, 2] {
            return Err(Error::Dimension {
                op: "permute",
                lhs: s,
                rhs: perm.to_vec(),
            });
        }
        let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
        let out = permute3(self.value(x).data(), &s, perm);
        self.push(Array::new(&out_shape, out)?, Op::Permute(x, perm))
    }

    /// Concatenation along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return contract("concat of zero arrays");
        };
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let outer: usize = lead.iter().product();
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            if s[..s.len() - 1] != lead[..] {
                return self.dim_err("concat", *first, *p);
            }
            total += s[s.len() - 1];
        }
        let mut out = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for p in parts {
                let c = self.value(*p).cols();
                out.extend_from_slice(&self.value(*p).data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push(Array::new(&shape, out)?, Op::ConcatLast(parts.into()))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let c = s[s.len() - 1];
        if start + len > c || len == 0 {
            return Err(Error::Dimension {
                op: "slice",
                lhs: s,
                rhs: vec![start, len],
            });
        }
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        self.push(Array::new(&shape, out)?, Op::SliceLast(x, start))
    }

    /// Stacks equally shaped arrays along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return contract("stack of zero arrays");
        };
        let inner = self.shape(*first).to_vec();
        let mut out = Vec::with_capacity(parts.len() * self.value(*first).len());
        for p in parts {
            if self.shape(*p) != &inner[..] {
                return self.dim_err("stack", *first, *p);
            }
            out.extend_from_slice(self.value(*p).data());
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        self.push(Array::new(&shape, out)?, Op::Stack(parts.into()))
    }

    /// Sub-array `x[i]` along the leading axis.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || i >= s[0] {
            return Err(Error::Dimension {
                op: "index",
                lhs: s,
                rhs: vec![i],
            });
        }
        let inner: usize = s[1..].iter().product();
        let out = self.value(x).data()[i * inner..(i + 1) * inner].to_vec();
        self.push(Array::new(&s[1..], out)?, Op::Index0(x, i))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Array::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len().max(1) as f64;
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Array::scalar(s / n), Op::Mean(x))
    }

    /// Sliding-window correlation along the time axis.
    ///
    /// `x` is `[C_in, T]` or `[B, C_in, T]`, `kernel` is `[C_out, C_in, k]`;
    /// the output has `T + 2 * pad - k + 1` steps.
    pub fn temporal_conv(&mut self, x: Var, kernel: Var, pad: usize) -> Result<Var> {
        self.temporal_conv_impl(x, kernel, None, pad)
    }

    pub fn temporal_conv_bias(&mut self, x: Var, kernel: Var, bias: Var, pad: usize) -> Result<Var> {
        self.temporal_conv_impl(x, kernel, Some(bias), pad)
    }

    fn temporal_conv_impl(&mut self, x: Var, kernel: Var, bias: Option<Var>, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        let (batch, c_in, t) = match xs.len() {
            2 => (None, xs[0], xs[1]),
            3 => (Some(xs[0]), xs[1], xs[2]),
            _ => return self.dim_err("temporal_conv", x, kernel),
        };
        if ks.len() != 3 || ks[1] != c_in || ks[2] == 0 || ks[2] > t + 2 * pad {
            return self.dim_err("temporal_conv", x, kernel);
        }
        let (c_out, k) = (ks[0], ks[2]);
        if let Some(b) = bias {
            if self.value(b).len() != c_out {
                return self.dim_err("temporal_conv", kernel, b);
            }
        }
        let t_out = t + 2 * pad - k + 1;
        let bs = batch.unwrap_or(1);
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let bd = bias.map(|b| self.value(b).data());
        let mut out = vec![0.0; bs * c_out * t_out];
        for b in 0..bs {
            for co in 0..c_out {
                let o = &mut out[(b * c_out + co) * t_out..(b * c_out + co + 1) * t_out];
                if let Some(bd) = bd {
                    o.iter_mut().for_each(|v| *v = bd[co]);
                }
                for ci in 0..c_in {
                    let xrow = &xd[(b * c_in + ci) * t..(b * c_in + ci + 1) * t];
                    let krow = &kd[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                    for (ot, ov) in o.iter_mut().enumerate() {
                        for (j, kv) in krow.iter().enumerate() {
                            let p = ot + j;
                            if p >= pad && p - pad < t {
                                *ov += kv * xrow[p - pad];
                            }
                        }
                    }
                }
            }
        }
        let shape = match batch {
            Some(b) => vec![b, c_out, t_out],
            None => vec![c_out, t_out],
        };
        self.push(
            Array::new(&shape, out)?,
            Op::TemporalConv {
                x,
                kernel,
                bias,
                pad,
            },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let n = self.nodes.len();
        let mut g: Vec<Option<Vec<f64>>> = vec![None; n];
        g[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &dy, &mut g);
            g[i] = Some(dy);
        }
        for (i, slot) in g.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *slot = None;
            }
        }
        Ok(Grads {
            per_node: g,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, dy: &[f64], g: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    matmul_nt(dy, self.value(*b).data(), &mut da, m, n, k);
                    self.acc(g, *a, &da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    matmul_tn(self.value(*a).data(), dy, &mut db, m, k, n);
                    self.acc(g, *b, &db);
                }
            }
            Op::BatchMatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let mut da = vec![0.0; bs * m * k];
                    for i in 0..bs {
                        matmul_nt(
                            &dy[i * m * n..(i + 1) * m * n],
                            &bd[i * k * n..(i + 1) * k * n],
                            &mut da[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    self.acc(g, *a, &da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; bs * k * n];
                    for i in 0..bs {
                        matmul_tn(
                            &ad[i * m * k..(i + 1) * m * k],
                            &dy[i * m * n..(i + 1) * m * n],
                            &mut db[i * k * n..(i + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    self.acc(g, *b, &db);
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (m, n) = (s[0], s[1]);
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = dy[j * m + i];
                    }
                }
                self.acc(g, *a, &da);
            }
            Op::Add(a, b) => {
                self.acc(g, *a, dy);
                self.acc(g, *b, dy);
            }
            Op::Sub(a, b) => {
                self.acc(g, *a, dy);
                if self.needs(*b) {
                    let neg: Vec<f64> = dy.iter().map(|v| -v).collect();
                    self.acc(g, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let da: Vec<f64> = dy
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(d, v)| d * v)
                        .collect();
                    self.acc(g, *a, &da);
                }
                if self.needs(*b) {
                    let db: Vec<f64> = dy
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(d, v)| d * v)
                        .collect();
                    self.acc(g, *b, &db);
                }
            }
            Op::Div(a, b) => {
                let bd = self.value(*b).data();
                if self.needs(*a) {
                    let da: Vec<f64> = dy.iter().zip(bd).map(|(d, v)| d / v).collect();
                    self.acc(g, *a, &da);
                }
                if self.needs(*b) {
                    let db: Vec<f64> = dy
                        .iter()
                        .zip(y.iter().zip(bd))
                        .map(|(d, (q, v))| -d * q / v)
                        .collect();
                    self.acc(g, *b, &db);
                }
            }
            Op::AddBias(x, b) => {
                self.acc(g, *x, dy);
                if self.needs(*b) {
                    let c = self.value(*b).len();
                    let mut db = vec![0.0; c];
                    for row in dy.chunks(c) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.acc(g, *b, &db);
                }
            }
            Op::Affine(x, s) => {
                let dx: Vec<f64> = dy.iter().map(|v| s * v).collect();
                self.acc(g, *x, &dx);
            }
            Op::Map(x, f) => {
                let xd = self.value(*x).data();
                let dx: Vec<f64> = dy
                    .iter()
                    .zip(xd.iter().zip(y))
                    .map(|(d, (xv, yv))| d * f.derivative(*xv, *yv))
                    .collect();
                self.acc(g, *x, &dx);
            }
            Op::LeakyRelu(x, slope) => {
                let xd = self.value(*x).data();
                let dx: Vec<f64> = dy
                    .iter()
                    .zip(xd)
                    .map(|(d, v)| if *v > 0.0 { *d } else { slope * d })
                    .collect();
                self.acc(g, *x, &dx);
            }
            Op::Softmax(x) => {
                let c = node.value.cols();
                let mut dx = vec![0.0; y.len()];
                for ((dxr, yr), dyr) in dx.chunks_mut(c).zip(y.chunks(c)).zip(dy.chunks(c)) {
                    let dot: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                    for ((o, yv), dv) in dxr.iter_mut().zip(yr).zip(dyr) {
                        *o = yv * (dv - dot);
                    }
                }
                self.acc(g, *x, &dx);
            }
            Op::Reshape(x) => self.acc(g, *x, dy),
            Op::Permute(x, perm) => {
                let s = node.value.shape();
                let mut inv = [0usize; 3];
                for (i, p) in perm.iter().enumerate() {
                    inv[*p] = i;
                }
                let dx = permute3(dy, s, inv);
                self.acc(g, *x, &dx);
            }
            Op::ConcatLast(parts) => {
                let total = node.value.cols();
                let outer = y.len() / total.max(1);
                let mut offset = 0;
                for p in parts.iter() {
                    let c = self.value(*p).cols();
                    if self.needs(*p) {
                        let mut dp = Vec::with_capacity(outer * c);
                        for r in 0..outer {
                            dp.extend_from_slice(&dy[r * total + offset..r * total + offset + c]);
                        }
                        self.acc(g, *p, &dp);
                    }
                    offset += c;
                }
            }
            Op::SliceLast(x, start) => {
                let c = self.value(*x).cols();
                let len = node.value.cols();
                let mut dx = vec![0.0; self.value(*x).len()];
                for (dr, dyr) in dx.chunks_mut(c).zip(dy.chunks(len)) {
                    dr[*start..*start + len].copy_from_slice(dyr);
                }
                self.acc(g, *x, &dx);
            }
            Op::Stack(parts) => {
                let inner = self.value(parts[0]).len();
                for (i, p) in parts.iter().enumerate() {
                    self.acc(g, *p, &dy[i * inner..(i + 1) * inner]);
                }
            }
            Op::Index0(x, i) => {
                if self.needs(*x) {
                    let inner = y.len();
                    let mut dx = vec![0.0; self.value(*x).len()];
                    dx[i * inner..(i + 1) * inner].copy_from_slice(dy);
                    self.acc(g, *x, &dx);
                }
            }
            Op::Sum(x) => {
                let dx = vec![dy[0]; self.value(*x).len()];
                self.acc(g, *x, &dx);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let dx = vec![dy[0] / n.max(1) as f64; n];
                self.acc(g, *x, &dx);
            }
            Op::TemporalConv {
                x,
                kernel,
                bias,
                pad,
            } => {
                let xs = self.shape(*x);
                let (bs, c_in, t) = if xs.len() == 2 {
                    (1, xs[0], xs[1])
                } else {
                    (xs[0], xs[1], xs[2])
                };
                let ks = self.shape(*kernel);
                let (c_out, k) = (ks[0], ks[2]);
                let t_out = t + 2 * pad - k + 1;
                let xd = self.value(*x).data();
                let kd = self.value(*kernel).data();
                let mut dx = vec![0.0; xd.len()];
                let mut dk = vec![0.0; kd.len()];
                let mut db = vec![0.0; c_out];
                for b in 0..bs {
                    for co in 0..c_out {
                        let dyr = &dy[(b * c_out + co) * t_out..(b * c_out + co + 1) * t_out];
                        db[co] += dyr.iter().sum::<f64>();
                        for ci in 0..c_in {
                            let xo = (b * c_in + ci) * t;
                            let ko = (co * c_in + ci) * k;
                            for (ot, d) in dyr.iter().enumerate() {
                                for j in 0..k {
                                    let p = ot + j;
                                    if p >= *pad && p - pad < t {
                                        dk[ko + j] += d * xd[xo + p - pad];
                                        dx[xo + p - pad] += d * kd[ko + j];
                                    }
                                }
                            }
                        }
                    }
                }
                if self.needs(*x) {
                    self.acc(g, *x, &dx);
                }
                if self.needs(*kernel) {
                    self.acc(g, *kernel, &dk);
                }
                if let Some(b) = bias {
                    self.acc(g, *b, &db);
                }
            }
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn acc(&self, g: &mut [Option<Vec<f64>>], v: Var, d: &[f64]) {
        if self.needs(v) {
            accumulate(g, v, d);
        }
    }
}

fn accumulate(g: &mut [Option<Vec<f64>>], v: Var, d: &[f64]) {
    match &mut g[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(d) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(d.to_vec()),
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`
fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn permute3(data: &[f64], shape: &[usize], perm: [usize; 3]) -> Vec<f64> {
    let strides = [shape[1] * shape[2], shape[2], 1];
    let out_shape = [shape[perm[0]], shape[perm[1]], shape[perm[2]]];
    let mut out = Vec::with_capacity(data.len());
    for i in 0..out_shape[0] {
        for j in 0..out_shape[1] {
            for l in 0..out_shape[2] {
                let idx = i * strides[perm[0]] + j * strides[perm[1]] + l * strides[perm[2]];
                out.push(data[idx]);
            }
        }
    }
    out
}
