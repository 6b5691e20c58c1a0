//! Layers built from tape operations.
//!
//! A layer is a small description (name prefix + sizes). `init` registers its
//! parameters in a [`ParamSet`]; `forward` looks them up in a [`Bound`] set.

use rand::Rng;

use crate::error::{shape_err, Result, TensorError};
use crate::tape::{window_out_len, Bound, Var};
use crate::tensor::{ParamSet, Tensor};

/// Fully connected layer `x · W + b` with `W: [input, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        params.insert(
            self.weight_name(),
            Tensor::xavier_uniform(&[self.input, self.output], self.input, self.output, rng),
        )?;
        params.insert(self.bias_name(), Tensor::zeros(&[self.output]))
    }

    /// `x: [batch, input]` → `[batch, output]`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(p.get(&self.weight_name())?)?
            .add_row_bias(p.get(&self.bias_name())?)
    }
}

/// Hidden and cell state of an LSTM, each `[batch, hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState<'t> {
    pub h: Var<'t>,
    pub c: Var<'t>,
}

/// Gated LSTM cell with input, forget and output gates.
///
/// Gate pre-activations are `x · W_x + h · W_h + b`, laid out as
/// `[input | forget | candidate | output]` blocks of `hidden` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            input,
            hidden,
        }
    }

    fn names(&self) -> [String; 3] {
        [
            format!("{}.w_x", self.name),
            format!("{}.w_h", self.name),
            format!("{}.bias", self.name),
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        let [wx, wh, b] = self.names();
        let gates = 4 * self.hidden;
        params.insert(
            wx,
            Tensor::xavier_uniform(&[self.input, gates], self.input, gates, rng),
        )?;
        params.insert(
            wh,
            Tensor::xavier_uniform(&[self.hidden, gates], self.hidden, gates, rng),
        )?;
        params.insert(b, Tensor::zeros(&[gates]))
    }

    pub fn zero_state<'t>(&self, tape: &'t crate::Tape, batch: usize) -> LstmState<'t> {
        LstmState {
            h: tape.constant(Tensor::zeros(&[batch, self.hidden])),
            c: tape.constant(Tensor::zeros(&[batch, self.hidden])),
        }
    }

    pub fn step<'t>(&self, p: &Bound<'t>, x: Var<'t>, state: LstmState<'t>) -> Result<LstmState<'t>> {
        let x_shape = x.shape();
        if x_shape.len() != 2 || x_shape[1] != self.input {
            return Err(shape_err(
                "lstm_cell",
                format!("input {x_shape:?}, expected [batch, {}]", self.input),
            ));
        }
        let [wx, wh, b] = self.names();
        let pre = x
            .matmul(p.get(&wx)?)?
            .add(state.h.matmul(p.get(&wh)?)?)?
            .add_row_bias(p.get(&b)?)?;
        let hsz = self.hidden;
        let input_gate = pre.slice_cols(0, hsz)?.sigmoid();
        let forget_gate = pre.slice_cols(hsz, 2 * hsz)?.sigmoid();
        let candidate = pre.slice_cols(2 * hsz, 3 * hsz)?.tanh();
        let output_gate = pre.slice_cols(3 * hsz, 4 * hsz)?.sigmoid();
        let c = forget_gate
            .mul(state.c)?
            .add(input_gate.mul(candidate)?)?;
        let h = output_gate.mul(c.tanh())?;
        Ok(LstmState { h, c })
    }
}

/// Plain tanh recurrence `h' = tanh(x · W_x + h · W_h + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl RnnCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            input,
            hidden,
        }
    }

    fn names(&self) -> [String; 3] {
        [
            format!("{}.w_x", self.name),
            format!("{}.w_h", self.name),
            format!("{}.bias", self.name),
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        let [wx, wh, b] = self.names();
        params.insert(
            wx,
            Tensor::xavier_uniform(&[self.input, self.hidden], self.input, self.hidden, rng),
        )?;
        params.insert(
            wh,
            Tensor::xavier_uniform(&[self.hidden, self.hidden], self.hidden, self.hidden, rng),
        )?;
        params.insert(b, Tensor::zeros(&[self.hidden]))
    }

    pub fn step<'t>(&self, p: &Bound<'t>, x: Var<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let [wx, wh, b] = self.names();
        Ok(x
            .matmul(p.get(&wx)?)?
            .add(h.matmul(p.get(&wh)?)?)?
            .add_row_bias(p.get(&b)?)?
            .tanh())
    }
}

/// Bidirectional LSTM layer.
///
/// A forward cell runs over `t = 0..T`, a backward cell over `t = T-1..0`,
/// both from zero state, and the two hidden streams are merged per step as
/// `y_t = tanh(h→_t · W_fwd + h←_t · W_bwd + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub name: String,
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub output: usize,
}

impl BiLstm {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize, output: usize) -> Self {
        let name = name.into();
        Self {
            forward: LstmCell::new(format!("{name}.fwd"), input, hidden),
            backward: LstmCell::new(format!("{name}.bwd"), input, hidden),
            output,
            name,
        }
    }

    fn out_names(&self) -> [String; 3] {
        [
            format!("{}.out_fwd", self.name),
            format!("{}.out_bwd", self.name),
            format!("{}.out_bias", self.name),
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        self.forward.init(params, rng)?;
        self.backward.init(params, rng)?;
        let [wf, wb, b] = self.out_names();
        let h = self.forward.hidden;
        params.insert(wf, Tensor::xavier_uniform(&[h, self.output], 2 * h, self.output, rng))?;
        params.insert(wb, Tensor::xavier_uniform(&[h, self.output], 2 * h, self.output, rng))?;
        params.insert(b, Tensor::zeros(&[self.output]))
    }

    /// Each element of `xs` is `[batch, input]`; returns one `[batch, output]`
    /// per step.
    pub fn forward<'t>(&self, p: &Bound<'t>, xs: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let (fwd_h, bwd_h) = self.hidden_streams(p, xs)?;
        let [wf, wb, b] = self.out_names();
        let (wf, wb, b) = (p.get(&wf)?, p.get(&wb)?, p.get(&b)?);
        fwd_h
            .iter()
            .zip(&bwd_h)
            .map(|(hf, hb)| hf.matmul(wf)?.add(hb.matmul(wb)?)?.add_row_bias(b).map(|v| v.tanh()))
            .collect()
    }

    /// Per-step hidden states of both directions, aligned to input time.
    pub fn hidden_streams<'t>(
        &self,
        p: &Bound<'t>,
        xs: &[Var<'t>],
    ) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
        let first = xs.first().ok_or(TensorError::EmptySequence)?;
        let batch = first.shape()[0];
        let tape = first.tape();

        let mut state = self.forward.zero_state(tape, batch);
        let mut fwd = Vec::with_capacity(xs.len());
        for &x in xs {
            state = self.forward.step(p, x, state)?;
            fwd.push(state.h);
        }
        let mut state = self.backward.zero_state(tape, batch);
        let mut bwd = Vec::with_capacity(xs.len());
        for &x in xs.iter().rev() {
            state = self.backward.step(p, x, state)?;
            bwd.push(state.h);
        }
        bwd.reverse();
        Ok((fwd, bwd))
    }
}

/// Geometry of a strided 1-D window layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub filter: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Output width `floor((W + 2P − F) / S) + 1`. Pooling layers pass `padding: 0`.
pub fn conv_out_size(geom: &LayerGeometry) -> Result<usize> {
    window_out_len(geom.width, geom.filter, geom.stride, geom.padding)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout mask: zeros with probability `p`, survivors `1/(1−p)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], p: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::InvalidProbability(p));
    }
    let keep = 1.0 / (1.0 - p);
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Dropout on a tape value. Eval mode and `p = 0` are exact identity.
pub fn dropout<'t, R: Rng + ?Sized>(x: Var<'t>, p: f64, mode: Mode, rng: &mut R) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::InvalidProbability(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(&x.shape(), p, rng)?;
    x.mul_const(&mask)
}

/// Softmax of a plain vector.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    crate::tape::softmax_in_place(&mut out);
    out
}

/// Probabilities are clamped into this range before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamped_log(p: Var<'_>) -> Var<'_> {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

/// `−mean[log d_real + log(1 − d_fake)]`.
pub fn discriminator_loss<'t>(d_real: Var<'t>, d_fake: Var<'t>) -> Result<Var<'t>> {
    let real_term = clamped_log(d_real).mean();
    let fake_term = clamped_log(d_fake.neg().add_scalar(1.0)).mean();
    Ok(real_term.add(fake_term)?.neg())
}

/// Saturating generator objective `mean[log(1 − d_fake)]` (minimized).
pub fn generator_loss_minimax(d_fake: Var<'_>) -> Var<'_> {
    clamped_log(d_fake.neg().add_scalar(1.0)).mean()
}

/// Non-saturating generator objective `−mean[log d_fake]`.
pub fn generator_loss_nonsaturating(d_fake: Var<'_>) -> Var<'_> {
    clamped_log(d_fake).mean().neg()
}

/// Half mean squared error `mean((y − x)²) / 2`.
pub fn half_mse<'t>(y: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
    let d = y.sub(x)?;
    Ok(d.mul(d)?.mean().scale(0.5))
}
