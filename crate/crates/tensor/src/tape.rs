//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and the ids of
//! its inputs. [`Tape::backward`] walks the tape in reverse, so gradients are
//! accumulated in a fixed order and repeated runs are bitwise identical.

use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRowBias(usize, usize),
    MatMul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MulConst(usize, Tensor),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    SliceCols(usize, usize, usize),
    ConcatCols(Vec<usize>),
    Reshape(usize),
    SoftmaxRows(usize),
    Conv1d {
        input: usize,
        weight: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool1d {
        input: usize,
        argmax: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Records a computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

/// Parameters of a [`ParamSet`] bound as tracked leaves on a tape.
#[derive(Debug, Clone)]
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, tracked });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Bind every parameter of `params` as a tracked leaf.
    pub fn bind(&self, params: &ParamSet) -> Bound<'_> {
        let vars = params
            .iter()
            .map(|(name, p)| (name.to_string(), self.param(p.value.clone())))
            .collect();
        Bound { vars }
    }

    fn value_ref(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !root.tracked {
            return Err(TensorError::DetachedGraph);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let out = node.value.data();
            // Pushes `f(i)` into the gradient of `target`, creating it on demand.
            let mut acc = |target: usize, f: &dyn Fn(&mut [f64])| {
                if !nodes[target].tracked {
                    return;
                }
                let slot = grads[target]
                    .get_or_insert_with(|| vec![0.0; nodes[target].value.numel()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => unreachable!("leaves keep their gradients"),
                Op::Add(a, b) => {
                    acc(*a, &|s| axpy(s, 1.0, &g));
                    acc(*b, &|s| axpy(s, 1.0, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|s| axpy(s, 1.0, &g));
                    acc(*b, &|s| axpy(s, -1.0, &g));
                }
                Op::Mul(a, b) => {
                    let av = nodes[*a].value.data();
                    let bv = nodes[*b].value.data();
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            s[i] += g[i] * bv[i];
                        }
                    });
                    acc(*b, &|s| {
                        for i in 0..s.len() {
                            s[i] += g[i] * av[i];
                        }
                    });
                }
                Op::AddRowBias(a, b) => {
                    let n = nodes[*b].value.numel();
                    acc(*a, &|s| axpy(s, 1.0, &g));
                    acc(*b, &|s| {
                        for row in g.chunks(n) {
                            axpy(s, 1.0, row);
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let at = &nodes[*a].value;
                    let bt = &nodes[*b].value;
                    let (m, k) = (at.shape()[0], at.shape()[1]);
                    let n = bt.shape()[1];
                    let (av, bv) = (at.data(), bt.data());
                    // dA = G · Bᵀ
                    acc(*a, &|s| {
                        for i in 0..m {
                            for p in 0..k {
                                let mut sum = 0.0;
                                for j in 0..n {
                                    sum += g[i * n + j] * bv[p * n + j];
                                }
                                s[i * k + p] += sum;
                            }
                        }
                    });
                    // dB = Aᵀ · G
                    acc(*b, &|s| {
                        for i in 0..m {
                            for p in 0..k {
                                let a_ip = av[i * k + p];
                                if a_ip == 0.0 {
                                    continue;
                                }
                                let row = &g[i * n..(i + 1) * n];
                                axpy(&mut s[p * n..(p + 1) * n], a_ip, row);
                            }
                        }
                    });
                }
                Op::Scale(a, c) => acc(*a, &|s| axpy(s, *c, &g)),
                Op::AddScalar(a) => acc(*a, &|s| axpy(s, 1.0, &g)),
                Op::MulConst(a, c) => {
                    let cv = c.data();
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            s[i] += g[i] * cv[i];
                        }
                    });
                }
                Op::Tanh(a) => acc(*a, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * (1.0 - out[i] * out[i]);
                    }
                }),
                Op::Sigmoid(a) => acc(*a, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                }),
                Op::Relu(a) => {
                    let x = nodes[*a].value.data();
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            if x[i] > 0.0 {
                                s[i] += g[i];
                            }
                        }
                    });
                }
                Op::Exp(a) => acc(*a, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * out[i];
                    }
                }),
                Op::Log(a) => {
                    let x = nodes[*a].value.data();
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            s[i] += g[i] / x[i];
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let x = nodes[*a].value.data();
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            if x[i] > *lo && x[i] < *hi {
                                s[i] += g[i];
                            }
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &|s| s.iter_mut().for_each(|v| *v += g[0])),
                Op::Mean(a) => acc(*a, &|s| {
                    let scale = g[0] / s.len() as f64;
                    s.iter_mut().for_each(|v| *v += scale);
                }),
                Op::SliceCols(a, start, end) => {
                    let cols = nodes[*a].value.shape()[1];
                    let width = end - start;
                    acc(*a, &|s| {
                        for (r, grow) in g.chunks(width).enumerate() {
                            axpy(&mut s[r * cols + start..r * cols + end], 1.0, grow);
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for &p in parts {
                        let width = nodes[p].value.shape()[1];
                        acc(p, &|s| {
                            for (r, srow) in s.chunks_mut(width).enumerate() {
                                let start = r * total + offset;
                                axpy(srow, 1.0, &g[start..start + width]);
                            }
                        });
                        offset += width;
                    }
                }
                Op::Reshape(a) => acc(*a, &|s| axpy(s, 1.0, &g)),
                Op::SoftmaxRows(a) => {
                    let n = node.value.shape()[1];
                    acc(*a, &|s| {
                        for ((srow, yrow), grow) in
                            s.chunks_mut(n).zip(out.chunks(n)).zip(g.chunks(n))
                        {
                            let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                            for j in 0..n {
                                srow[j] += yrow[j] * (grow[j] - dot);
                            }
                        }
                    });
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let x = &nodes[*input].value;
                    let w = &nodes[*weight].value;
                    let geo = ConvDims::of(x, w, &node.value, *stride, *padding);
                    acc(*bias, &|s| {
                        for b in 0..geo.batch {
                            for o in 0..geo.c_out {
                                let base = (b * geo.c_out + o) * geo.l_out;
                                s[o] += g[base..base + geo.l_out].iter().sum::<f64>();
                            }
                        }
                    });
                    acc(*weight, &|s| geo.for_each_tap(|b, o, c, k, i, xi| {
                        let gi = g[(b * geo.c_out + o) * geo.l_out + i];
                        s[(o * geo.c_in + c) * geo.filter + k] +=
                            gi * x.data()[(b * geo.c_in + c) * geo.l_in + xi];
                    }));
                    acc(*input, &|s| geo.for_each_tap(|b, o, c, k, i, xi| {
                        let gi = g[(b * geo.c_out + o) * geo.l_out + i];
                        s[(b * geo.c_in + c) * geo.l_in + xi] +=
                            gi * w.data()[(o * geo.c_in + c) * geo.filter + k];
                    }));
                }
                Op::MaxPool1d { input, argmax } => acc(*input, &|s| {
                    for (gi, &src) in g.iter().zip(argmax) {
                        s[src] += gi;
                    }
                }),
            }
        }
        drop(nodes);
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| {
                    let shape = self.value_ref(id).shape().to_vec();
                    Tensor::new(shape, data).expect("gradient shape follows value shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected a matrix, got {s:?}"))),
    }
}

struct ConvDims {
    batch: usize,
    c_in: usize,
    l_in: usize,
    c_out: usize,
    filter: usize,
    l_out: usize,
    stride: usize,
    padding: usize,
}

impl ConvDims {
    fn of(x: &Tensor, w: &Tensor, out: &Tensor, stride: usize, padding: usize) -> Self {
        Self {
            batch: x.shape()[0],
            c_in: x.shape()[1],
            l_in: x.shape()[2],
            c_out: w.shape()[0],
            filter: w.shape()[2],
            l_out: out.shape()[2],
            stride,
            padding,
        }
    }

    /// Visits every (batch, out channel, in channel, tap, out position,
    /// in position) product that lands inside the unpadded input.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        for b in 0..self.batch {
            for o in 0..self.c_out {
                for c in 0..self.c_in {
                    for i in 0..self.l_out {
                        let start = i * self.stride;
                        for k in 0..self.filter {
                            let pos = start + k;
                            if pos < self.padding || pos - self.padding >= self.l_in {
                                continue;
                            }
                            f(b, o, c, k, i, pos - self.padding);
                        }
                    }
                }
            }
        }
    }
}

/// Output length of a strided window over `input` samples with `padding`
/// zeros on each side: `floor((input + 2·padding − filter) / stride) + 1`.
pub fn window_out_len(input: usize, filter: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(TensorError::InvalidStride);
    }
    let padded = input + 2 * padding;
    if filter == 0 || filter > padded {
        return Err(TensorError::FilterLargerThanInput {
            filter,
            padded_input: padded,
        });
    }
    Ok((padded - filter) / stride + 1)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.tracked(self.id)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = {
            let x = self.tape.value_ref(self.id);
            let data = x.data().iter().map(|&v| f(v)).collect();
            Tensor::new(x.shape().to_vec(), data).expect("unary op preserves shape")
        };
        let tracked = self.is_tracked();
        self.tape.push(value, op, tracked)
    }

    fn zip_with(
        &self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            check_same_shape(name, &a, &b)?;
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let tracked = self.is_tracked() || other.is_tracked();
        Ok(self.tape.push(value, op, tracked))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// `self[m, n] + bias[n]` broadcast over rows.
    pub fn add_row_bias(&self, bias: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(bias.id);
            let (_, n) = check_matrix("add_row_bias", &a)?;
            if b.numel() != n {
                return Err(shape_err(
                    "add_row_bias",
                    format!("bias {:?} for matrix {:?}", b.shape(), a.shape()),
                ));
            }
            let mut data = a.data().to_vec();
            for row in data.chunks_mut(n) {
                axpy(row, 1.0, b.data());
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        let tracked = self.is_tracked() || bias.is_tracked();
        Ok(self
            .tape
            .push(value, Op::AddRowBias(self.id, bias.id), tracked))
    }

    /// Matrix product `self[m, k] · other[k, n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            let (m, k) = check_matrix("matmul", &a)?;
            let (k2, n) = check_matrix("matmul", &b)?;
            if k != k2 {
                return Err(shape_err(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (av, bv) = (a.data(), b.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a_ip = av[i * k + p];
                    if a_ip != 0.0 {
                        axpy(orow, a_ip, &bv[p * n..(p + 1) * n]);
                    }
                }
            }
            Tensor::new(vec![m, n], out)?
        };
        let tracked = self.is_tracked() || other.is_tracked();
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), tracked))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |v| c * v)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |v| v + c)
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    /// Elementwise product with a constant tensor (e.g. a dropout mask).
    pub fn mul_const(&self, c: &Tensor) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            check_same_shape("mul_const", &a, c)?;
            let data = a.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let tracked = self.is_tracked();
        Ok(self
            .tape
            .push(value, Op::MulConst(self.id, c.clone()), tracked))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero wherever the clamp is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(&self) -> Var<'t> {
        let total = self.tape.value_ref(self.id).data().iter().sum();
        let tracked = self.is_tracked();
        self.tape.push(Tensor::scalar(total), Op::Sum(self.id), tracked)
    }

    pub fn mean(&self) -> Var<'t> {
        let mean = {
            let x = self.tape.value_ref(self.id);
            x.data().iter().sum::<f64>() / x.numel() as f64
        };
        let tracked = self.is_tracked();
        self.tape.push(Tensor::scalar(mean), Op::Mean(self.id), tracked)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            let (m, n) = check_matrix("slice_cols", &a)?;
            if start >= end || end > n {
                return Err(shape_err(
                    "slice_cols",
                    format!("columns {start}..{end} of {n}"),
                ));
            }
            let mut data = Vec::with_capacity(m * (end - start));
            for row in a.data().chunks(n) {
                data.extend_from_slice(&row[start..end]);
            }
            Tensor::new(vec![m, end - start], data)?
        };
        let tracked = self.is_tracked();
        Ok(self
            .tape
            .push(value, Op::SliceCols(self.id, start, end), tracked))
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.tape.value_ref(self.id).clone().reshape(shape)?;
        let tracked = self.is_tracked();
        Ok(self.tape.push(value, Op::Reshape(self.id), tracked))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value_ref(self.id);
            let (_, n) = check_matrix("softmax_rows", &a)?;
            let mut data = a.data().to_vec();
            for row in data.chunks_mut(n) {
                softmax_in_place(row);
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        let tracked = self.is_tracked();
        Ok(self.tape.push(value, Op::SoftmaxRows(self.id), tracked))
    }

    /// 1-D convolution. `self` is `[batch, c_in, len]`, `weight` is
    /// `[c_out, c_in, filter]`, `bias` is `[c_out]`; output
    /// `[batch, c_out, window_out_len(len, filter, stride, padding)]`.
    pub fn conv1d(
        &self,
        weight: Var<'t>,
        bias: Var<'t>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            let w = self.tape.value_ref(weight.id);
            let b = self.tape.value_ref(bias.id);
            let (&[batch, c_in, l_in], &[c_out, wc_in, filter]) = (x.shape(), w.shape()) else {
                return Err(shape_err(
                    "conv1d",
                    format!("input {:?}, weight {:?}", x.shape(), w.shape()),
                ));
            };
            if wc_in != c_in || b.numel() != c_out {
                return Err(shape_err(
                    "conv1d",
                    format!(
                        "input {:?}, weight {:?}, bias {:?}",
                        x.shape(),
                        w.shape(),
                        b.shape()
                    ),
                ));
            }
            let l_out = window_out_len(l_in, filter, stride, padding)?;
            let mut out = vec![0.0; batch * c_out * l_out];
            for bi in 0..batch {
                for o in 0..c_out {
                    let orow = &mut out[(bi * c_out + o) * l_out..(bi * c_out + o + 1) * l_out];
                    orow.fill(b.data()[o]);
                    for c in 0..c_in {
                        let xrow = &x.data()[(bi * c_in + c) * l_in..(bi * c_in + c + 1) * l_in];
                        let wrow = &w.data()[(o * c_in + c) * filter..(o * c_in + c + 1) * filter];
                        for (i, slot) in orow.iter_mut().enumerate() {
                            let start = i * stride;
                            for (k, wk) in wrow.iter().enumerate() {
                                let pos = start + k;
                                if pos >= padding && pos - padding < l_in {
                                    *slot += wk * xrow[pos - padding];
                                }
                            }
                        }
                    }
                }
            }
            Tensor::new(vec![batch, c_out, l_out], out)?
        };
        let tracked = self.is_tracked() || weight.is_tracked() || bias.is_tracked();
        Ok(self.tape.push(
            value,
            Op::Conv1d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
                stride,
                padding,
            },
            tracked,
        ))
    }

    /// Max pooling over `[batch, channels, len]` with window `window` and
    /// stride `stride`; ties resolve to the earliest position.
    pub fn maxpool1d(&self, window: usize, stride: usize) -> Result<Var<'t>> {
        let (value, argmax) = {
            let x = self.tape.value_ref(self.id);
            let &[batch, channels, l_in] = x.shape() else {
                return Err(shape_err("maxpool1d", format!("input {:?}", x.shape())));
            };
            let l_out = window_out_len(l_in, window, stride, 0)?;
            let mut out = Vec::with_capacity(batch * channels * l_out);
            let mut argmax = Vec::with_capacity(batch * channels * l_out);
            for (r, row) in x.data().chunks(l_in).enumerate() {
                for j in 0..l_out {
                    let start = j * stride;
                    let mut best = start;
                    for p in start + 1..start + window {
                        if row[p] > row[best] {
                            best = p;
                        }
                    }
                    out.push(row[best]);
                    argmax.push(r * l_in + best);
                }
            }
            (Tensor::new(vec![batch, channels, l_out], out)?, argmax)
        };
        let tracked = self.is_tracked();
        Ok(self.tape.push(
            value,
            Op::MaxPool1d {
                input: self.id,
                argmax,
            },
            tracked,
        ))
    }
}

/// Concatenate matrices with equal row counts along columns.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts.first().ok_or(TensorError::EmptySequence)?;
    let tape = first.tape;
    let value = {
        let vals: Vec<_> = parts.iter().map(|p| tape.value_ref(p.id)).collect();
        let mut rows = None;
        let mut total = 0;
        for v in &vals {
            let (r, c) = check_matrix("concat_cols", v)?;
            if *rows.get_or_insert(r) != r {
                return Err(shape_err("concat_cols", "row counts differ"));
            }
            total += c;
        }
        let rows = rows.unwrap_or(0);
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                let c = v.shape()[1];
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        Tensor::new(vec![rows, total], data)?
    };
    let tracked = parts.iter().any(|p| p.is_tracked());
    Ok(tape.push(
        value,
        Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
        tracked,
    ))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}


impl ParamSet {
    /// Add the gradients of every bound parameter into its `grad` field.
    pub fn accumulate_grads(&mut self, bound: &Bound<'_>, grads: &Gradients) -> Result<()> {
        for (name, var) in bound.iter() {
            if let Some(g) = grads.get(var) {
                let p = self.get_mut(name)?;
                axpy(p.grad.data_mut(), 1.0, g.data());
            }
        }
        Ok(())
    }
}
