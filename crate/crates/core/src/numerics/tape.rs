//! Reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node and hand back a [`Var`] handle; [`Tape::backward`] walks the
//! nodes in reverse creation order, which is a valid topological order
//! because a node can only reference nodes created before it.

use std::collections::HashMap;

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into};
use super::{NumericsError, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    Affine(Var, f64),
    ScaleBy(Var, Var),
    Unary(Var, Unary),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    CumsumRows(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    RowNorm(Var),
    RowFn(Var, Vec<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed primitives and their saved outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<String, Var>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Binds a named parameter as a gradient leaf. Binding the same name twice
    /// returns the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.leaf(value);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let [r, c] = ta.shape();
        Tensor::new(r, c, data).expect("shape preserved")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let [n, k] = self.shape(a);
        let [m, k2] = self.shape(b);
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                lhs: [n, k],
                rhs: [m, k2],
            });
        }
        let mut out = vec![0.0; n * m];
        matmul_nt_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(n, m, out)?, Op::MatMulNt(a, b), rg))
    }

    /// Adds a `1 × m` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NumericsError> {
        let [n, m] = self.shape(x);
        if self.shape(b) != [1, m] {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                lhs: [n, m],
                rhs: self.shape(b),
            });
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("div", a, b)?;
        let out = self.zip_with(a, b, |x, y| x / y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Div(a, b), rg))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("minimum", a, b)?;
        let out = self.zip_with(a, b, |x, y| if x <= y { x } else { y });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Min(a, b), rg))
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("maximum", a, b)?;
        let out = self.zip_with(a, b, |x, y| if x >= y { x } else { y });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Max(a, b), rg))
    }

    /// `scale · x + offset`.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + offset);
        let rg = self.rg(x);
        self.push(out, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    /// Multiplies every element of `x` by the `1 × 1` tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var, NumericsError> {
        if self.shape(s) != [1, 1] {
            return Err(NumericsError::NotScalar {
                shape: self.shape(s),
            });
        }
        let sv = self.value(s).item();
        let out = self.value(x).map(|v| sv * v);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, Op::ScaleBy(x, s), rg))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |v| if v > 0.0 { v } else { 0.0 },
            Unary::Tanh => f64::tanh,
            Unary::Sigmoid => sigmoid,
            Unary::Softplus => softplus,
            Unary::Exp => f64::exp,
            Unary::Ln => f64::ln,
            Unary::Sqrt => f64::sqrt,
            Unary::Abs => f64::abs,
            Unary::Square => |v| v * v,
        };
        let out = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(out, Op::Unary(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Ln)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        let rg = self.rg(x);
        self.push(out, Op::Clamp(x, lo, hi), rg)
    }

    /// Numerically stable softmax of each row.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [_, m] = t.shape();
        let mut out = t.clone();
        for row in out.data_mut().chunks_mut(m) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(out, Op::Transpose(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let n = self.shape(parts[0])[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[0] != n {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: s,
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(n, total, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let m = self.shape(parts[0])[1];
        let mut n = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1] != m {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]),
                    rhs: s,
                });
            }
            n += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(n, m, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let [n, m] = self.shape(x);
        if start >= end || end > m {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: end,
                extent: m,
            });
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(n, end - start, data)?, Op::SliceCols(x, start, end), rg))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NumericsError> {
        let [n, m] = self.shape(x);
        if rows.is_empty() {
            return Err(NumericsError::EmptyShape { rows: 0, cols: m });
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            if r >= n {
                return Err(NumericsError::IndexOutOfRange {
                    op: "gather_rows",
                    index: r,
                    extent: n,
                });
            }
            data.extend_from_slice(t.row_slice(r));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(rows.len(), m, data)?, Op::GatherRows(x, rows.to_vec()), rg))
    }

    /// Running sum down the rows: `y[i] = x[0] + … + x[i]`.
    pub fn cumsum_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let m = out.cols();
        let data = out.data_mut();
        for i in m..data.len() {
            data[i] += data[i - m];
        }
        let rg = self.rg(x);
        self.push(out, Op::CumsumRows(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, NumericsError> {
        let out = self.value(x).reshaped(rows, cols)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Euclidean norm of each row, `n × 1`. The gradient at a zero row is zero.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = (0..t.rows())
            .map(|r| t.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let n = data.len();
        let rg = self.rg(x);
        self.push(Tensor::new(n, 1, data).expect("n > 0"), Op::RowNorm(x), rg)
    }

    /// Applies a caller-supplied scalar function to each row of `x`.
    ///
    /// `f` maps a row to its value and the gradient of that value with
    /// respect to the row. The result is `n × 1`.
    pub fn row_fn(&mut self, x: Var, f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> Var {
        self.row_fn_indexed(x, |_, row| f(row))
    }

    /// [`Tape::row_fn`] whose function also receives the row index.
    pub fn row_fn_indexed(&mut self, x: Var, f: impl Fn(usize, &[f64]) -> (f64, Vec<f64>)) -> Var {
        let t = self.value(x);
        let [n, m] = t.shape();
        let mut vals = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n * m);
        for r in 0..n {
            let (v, g) = f(r, t.row_slice(r));
            assert_eq!(g.len(), m, "row_fn gradient has wrong width");
            vals.push(v);
            jac.extend(g);
        }
        let rg = self.rg(x);
        self.push(Tensor::new(n, 1, vals).expect("n > 0"), Op::RowFn(x, jac), rg)
    }

    /// `x W + b` for `x: n×d_in`, `W: d_in×d_out`, `b: 1×d_out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// `softmax(Q Kᵀ / √d) V`.
    pub fn scaled_dot_attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var, NumericsError> {
        let weights = self.attention_weights(q, k)?;
        let [nk, _] = self.shape(k);
        if self.shape(v)[0] != nk {
            return Err(NumericsError::ShapeMismatch {
                op: "attention values",
                lhs: self.shape(k),
                rhs: self.shape(v),
            });
        }
        self.matmul(weights, v)
    }

    /// The row-stochastic matrix `softmax(Q Kᵀ / √d)`.
    pub fn attention_weights(&mut self, q: Var, k: Var) -> Result<Var, NumericsError> {
        let [_, d] = self.shape(q);
        let [nk, dk] = self.shape(k);
        if d == 0 || nk == 0 {
            return Err(NumericsError::EmptyAttention { d, n_keys: nk });
        }
        if d != dk {
            return Err(NumericsError::ShapeMismatch {
                op: "attention keys",
                lhs: self.shape(q),
                rhs: self.shape(k),
            });
        }
        let logits = self.matmul_nt(q, k)?;
        let scaled = self.scale(logits, 1.0 / (d as f64).sqrt());
        Ok(self.softmax_rows(scaled))
    }

    /// Propagates gradients from a `1 × 1` node back to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(NumericsError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value;
        let mut acc = |v: Var, g: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        let zip = |a: &Tensor, b: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
            let [r, c] = a.shape();
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(r, c, data).expect("shape preserved")
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let [n, k] = ta.shape();
                let m = tb.cols();
                if self.rg(*a) {
                    let mut ga = vec![0.0; n * k];
                    matmul_nt_into(gy.data(), tb.data(), &mut ga, n, m, k);
                    acc(*a, Tensor::new(n, k, ga).expect("shape"));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * m];
                    matmul_tn_into(ta.data(), gy.data(), &mut gb, k, n, m);
                    acc(*b, Tensor::new(k, m, gb).expect("shape"));
                }
            }
            Op::MatMulNt(a, b) => {
                // y = a bᵀ with a: n×k, b: m×k, y: n×m
                let (ta, tb) = (val(*a), val(*b));
                let [n, k] = ta.shape();
                let m = tb.rows();
                if self.rg(*a) {
                    let mut ga = vec![0.0; n * k];
                    matmul_into(gy.data(), tb.data(), &mut ga, n, m, k);
                    acc(*a, Tensor::new(n, k, ga).expect("shape"));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; m * k];
                    matmul_tn_into(gy.data(), ta.data(), &mut gb, m, n, k);
                    acc(*b, Tensor::new(m, k, gb).expect("shape"));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, gy.clone());
                if self.rg(*b) {
                    let m = gy.cols();
                    let mut gb = vec![0.0; m];
                    for row in gy.data().chunks(m) {
                        for (g, r) in gb.iter_mut().zip(row) {
                            *g += r;
                        }
                    }
                    acc(*b, Tensor::new(1, m, gb).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if self.rg(*a) {
                    acc(*a, zip(gy, tb, &|g, y| g * y));
                }
                if self.rg(*b) {
                    acc(*b, zip(gy, ta, &|g, x| g * x));
                }
            }
            Op::Div(a, b) => {
                let tb = val(*b);
                if self.rg(*a) {
                    acc(*a, zip(gy, tb, &|g, d| g / d));
                }
                if self.rg(*b) {
                    // d(a/b)/db = -y / b
                    let gyy = zip(gy, y, &|g, q| g * q);
                    acc(*b, zip(&gyy, tb, &|gq, d| -gq / d));
                }
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (ta, tb) = (val(*a), val(*b));
                let pick_a = zip(ta, tb, &|x, z| {
                    let take_a = if is_min { x <= z } else { x >= z };
                    if take_a {
                        1.0
                    } else {
                        0.0
                    }
                });
                if self.rg(*a) {
                    acc(*a, zip(gy, &pick_a, &|g, p| g * p));
                }
                if self.rg(*b) {
                    acc(*b, zip(gy, &pick_a, &|g, p| g * (1.0 - p)));
                }
            }
            Op::Affine(x, s) => {
                let s = *s;
                acc(*x, gy.map(|g| g * s));
            }
            Op::ScaleBy(x, s) => {
                let sv = val(*s).item();
                if self.rg(*x) {
                    acc(*x, gy.map(|g| g * sv));
                }
                if self.rg(*s) {
                    let dot: f64 = gy.data().iter().zip(val(*x).data()).map(|(g, v)| g * v).sum();
                    acc(*s, Tensor::scalar(dot));
                }
            }
            Op::Unary(x, kind) => {
                let tx = val(*x);
                let g = match kind {
                    Unary::Relu => zip(gy, tx, &|g, v| if v > 0.0 { g } else { 0.0 }),
                    Unary::Tanh => zip(gy, y, &|g, t| g * (1.0 - t * t)),
                    Unary::Sigmoid => zip(gy, y, &|g, s| g * s * (1.0 - s)),
                    Unary::Softplus => zip(gy, tx, &|g, v| g * sigmoid(v)),
                    Unary::Exp => zip(gy, y, &|g, e| g * e),
                    Unary::Ln => zip(gy, tx, &|g, v| g / v),
                    Unary::Sqrt => zip(gy, y, &|g, r| if r > 0.0 { g / (2.0 * r) } else { 0.0 }),
                    Unary::Abs => zip(gy, tx, &|g, v| {
                        if v > 0.0 {
                            g
                        } else if v < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    }),
                    Unary::Square => zip(gy, tx, &|g, v| 2.0 * g * v),
                };
                acc(*x, g);
            }
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(
                    *x,
                    zip(gy, val(*x), &|g, v| if v < lo || v > hi { 0.0 } else { g }),
                );
            }
            Op::SoftmaxRows(x) => {
                let m = y.cols();
                let mut gx = vec![0.0; y.len()];
                for ((gxr, yr), gr) in gx
                    .chunks_mut(m)
                    .zip(y.data().chunks(m))
                    .zip(gy.data().chunks(m))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in gxr.iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                let [r, c] = y.shape();
                acc(*x, Tensor::new(r, c, gx).expect("shape"));
            }
            Op::Transpose(x) => acc(*x, gy.transpose()),
            Op::ConcatCols(parts) => {
                let n = gy.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(n * w);
                        for r in 0..n {
                            data.extend_from_slice(&gy.row_slice(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::new(n, w, data).expect("shape"));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let m = gy.cols();
                let mut offset = 0;
                for &p in parts {
                    let h = self.shape(p)[0];
                    if self.rg(p) {
                        let data = gy.data()[offset * m..(offset + h) * m].to_vec();
                        acc(p, Tensor::new(h, m, data).expect("shape"));
                    }
                    offset += h;
                }
            }
            Op::SliceCols(x, start, end) => {
                let [n, m] = self.shape(*x);
                let w = end - start;
                let mut g = Tensor::zeros(n, m);
                for r in 0..n {
                    g.data_mut()[r * m + start..r * m + end]
                        .copy_from_slice(&gy.data()[r * w..(r + 1) * w]);
                }
                acc(*x, g);
            }
            Op::GatherRows(x, rows) => {
                let [n, m] = self.shape(*x);
                let mut g = Tensor::zeros(n, m);
                for (i, &r) in rows.iter().enumerate() {
                    let src = &gy.data()[i * m..(i + 1) * m];
                    for (o, s) in g.data_mut()[r * m..(r + 1) * m].iter_mut().zip(src) {
                        *o += s;
                    }
                }
                acc(*x, g);
            }
            Op::CumsumRows(x) => {
                let m = gy.cols();
                let mut g = gy.clone();
                let data = g.data_mut();
                for i in (0..data.len().saturating_sub(m)).rev() {
                    data[i] += data[i + m];
                }
                acc(*x, g);
            }
            Op::Sum(x) => {
                let [r, c] = self.shape(*x);
                acc(*x, Tensor::filled(r, c, gy.item()));
            }
            Op::Mean(x) => {
                let [r, c] = self.shape(*x);
                acc(*x, Tensor::filled(r, c, gy.item() / (r * c) as f64));
            }
            Op::Reshape(x) => {
                let [r, c] = self.shape(*x);
                acc(*x, gy.reshaped(r, c).expect("same element count"));
            }
            Op::RowNorm(x) => {
                let tx = val(*x);
                let m = tx.cols();
                let mut g = tx.clone();
                for (r, row) in g.data_mut().chunks_mut(m).enumerate() {
                    let norm = y.get(r, 0);
                    let scale = if norm > 0.0 { gy.get(r, 0) / norm } else { 0.0 };
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                acc(*x, g);
            }
            Op::RowFn(x, jac) => {
                let [n, m] = self.shape(*x);
                let mut g = Tensor::zeros(n, m);
                for r in 0..n {
                    let gr = gy.get(r, 0);
                    for c in 0..m {
                        g.data_mut()[r * m + c] = gr * jac[r * m + c];
                    }
                }
                acc(*x, g);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (n, k, m) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                for p in 0..k {
                    out[i * m + j] += a.get(i, p) * b.get(p, j);
                }
            }
        }
        out
    }

    #[test]
    fn linear_identity_and_zero_input() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&[1.0, 2.0]));
        let w = t.constant(Tensor::identity(2));
        let b = t.constant(Tensor::row(&[0.0, 0.0]));
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);

        let x = t.constant(Tensor::zeros(3, 4));
        let w = t.constant(Tensor::new(4, 2, (0..8).map(f64::from).collect()).unwrap());
        let b = t.constant(Tensor::row(&[1.0, 1.0]));
        let y = t.linear(x, w, b).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn linear_matches_triple_loop() {
        let a = Tensor::new(2, 3, vec![0.3, -1.2, 2.5, 0.7, 0.1, -0.4]).unwrap();
        let w = Tensor::new(3, 2, vec![1.1, -0.6, 0.2, 0.9, -1.5, 0.05]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(a.clone());
        let wv = t.constant(w.clone());
        let b = t.constant(Tensor::row(&[0.0, 0.0]));
        let y = t.linear(x, wv, b).unwrap();
        let want = brute_matmul(&a, &w);
        for (got, want) in t.value(y).data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(2, 3));
        let w = t.constant(Tensor::zeros(2, 2));
        let b = t.constant(Tensor::zeros(1, 2));
        let err = t.linear(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn attention_single_key_returns_value_row() {
        let mut t = Tape::new();
        let q = t.constant(Tensor::new(2, 3, vec![5.0, -1.0, 2.0, 0.0, 9.0, 1.0]).unwrap());
        let k = t.constant(Tensor::row(&[0.3, 0.2, 0.1]));
        let v = t.constant(Tensor::row(&[4.0, -2.0]));
        let o = t.scaled_dot_attention(q, k, v).unwrap();
        assert_eq!(t.value(o).row_slice(0), &[4.0, -2.0]);
        assert_eq!(t.value(o).row_slice(1), &[4.0, -2.0]);
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let mut t = Tape::new();
        let q = t.constant(Tensor::row(&[1.0, 2.0]));
        let k = t.constant(Tensor::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap());
        let v = t.constant(Tensor::new(2, 2, vec![1.0, 3.0, 5.0, -1.0]).unwrap());
        let o = t.scaled_dot_attention(q, k, v).unwrap();
        let got = t.value(o).data();
        assert!((got[0] - 3.0).abs() < 1e-12 && (got[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_matches_scalar_loop() {
        let qd = [[0.4, -1.1], [2.0, 0.3]];
        let kd = [[1.0, 0.5], [-0.7, 1.3]];
        let vd = [[3.0, -1.0, 0.5], [0.2, 2.0, -4.0]];
        let mut t = Tape::new();
        let q = t.constant(Tensor::from_rows(&qd.map(|r| r.to_vec())).unwrap());
        let k = t.constant(Tensor::from_rows(&kd.map(|r| r.to_vec())).unwrap());
        let v = t.constant(Tensor::from_rows(&vd.map(|r| r.to_vec())).unwrap());
        let o = t.scaled_dot_attention(q, k, v).unwrap();
        for i in 0..2 {
            let s0 = (qd[i][0] * kd[0][0] + qd[i][1] * kd[0][1]) / 2f64.sqrt();
            let s1 = (qd[i][0] * kd[1][0] + qd[i][1] * kd[1][1]) / 2f64.sqrt();
            let (e0, e1) = (s0.exp(), s1.exp());
            let (w0, w1) = (e0 / (e0 + e1), e1 / (e0 + e1));
            for j in 0..3 {
                let want = w0 * vd[0][j] + w1 * vd[1][j];
                assert!((t.value(o).get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rejects_empty_memory_dimension() {
        let mut t = Tape::new();
        let q = t.constant(Tensor::row(&[1.0]));
        let k = t.constant(Tensor::row(&[1.0, 2.0]));
        assert!(t.attention_weights(q, k).is_err());
    }

    #[test]
    fn backward_of_sum_and_square() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1.0, -2.0, 3.5]));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 1.0, 1.0]);

        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1.0, -2.0, 3.5]));
        let sq = t.square(x);
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, -4.0, 7.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_zeroes_unused_leaves() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1.0, 2.0]));
        let unused = t.leaf(Tensor::zeros(2, 2));
        assert!(t.backward(x).is_err());
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros(2, 2));
    }

    #[test]
    fn cumsum_backward_is_reverse_cumsum() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let c = t.cumsum_rows(x);
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 6.0]);
        let w = t.constant(Tensor::new(3, 1, vec![1.0, 10.0, 100.0]).unwrap());
        let p = t.mul(c, w).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).data(), &[111.0, 110.0, 100.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }
}
