//! Recurrent autoencoder and variational autoencoder baselines.

use qgf_tensor::nn::{self, Dense, LstmCell, LstmState, RnnCell};
use qgf_tensor::{concat_cols, Bound, ParamSet, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Manifest, ModelCheckpoint, ModelKind};
use crate::gan::{batch_tensor, check_dataset, Batcher, TrainConfig};
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub latent: usize,
    pub seq_len: usize,
    pub variational: bool,
    /// Decoder reads the previous true value during training instead of its
    /// own previous output.
    pub teacher_forcing: bool,
}

impl AeConfig {
    pub fn new(cell: CellKind, variational: bool, seq_len: usize) -> Self {
        Self {
            cell,
            hidden: 64,
            latent: 16,
            seq_len,
            variational,
            teacher_forcing: true,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match (self.cell, self.variational) {
            (CellKind::Rnn, false) => ModelKind::RnnAe,
            (CellKind::Rnn, true) => ModelKind::RnnVae,
            (CellKind::Lstm, false) => ModelKind::LstmAe,
            (CellKind::Lstm, true) => ModelKind::LstmVae,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.latent == 0 || self.seq_len == 0 {
            return Err(ModelError::InvalidConfig("autoencoder sizes must be positive".into()));
        }
        Ok(())
    }

    fn encoder_cell(&self) -> Recurrent {
        Recurrent::new(self.cell, "enc.cell", 1, self.hidden)
    }

    fn decoder_cell(&self) -> Recurrent {
        Recurrent::new(self.cell, "dec.cell", 1, self.hidden)
    }

    fn code_heads(&self) -> Vec<Dense> {
        if self.variational {
            vec![
                Dense::new("enc.mu", self.hidden, self.latent),
                Dense::new("enc.logvar", self.hidden, self.latent),
            ]
        } else {
            vec![Dense::new("enc.code", self.hidden, self.latent)]
        }
    }

    fn decoder_init(&self) -> Dense {
        Dense::new("dec.init", self.latent, self.hidden)
    }

    fn decoder_out(&self) -> Dense {
        Dense::new("dec.out", self.hidden, 1)
    }

    pub fn init(&self, seed: u64) -> Result<ParamSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new(seed);
        self.encoder_cell().init(&mut p, &mut rng)?;
        for head in self.code_heads() {
            head.init(&mut p, &mut rng)?;
        }
        self.decoder_init().init(&mut p, &mut rng)?;
        self.decoder_cell().init(&mut p, &mut rng)?;
        self.decoder_out().init(&mut p, &mut rng)?;
        Ok(p)
    }

    /// Every parameter zero: the decoder then emits an all-zero sequence.
    pub fn zeros(&self, seed: u64) -> Result<ParamSet> {
        let mut p = self.init(seed)?;
        for (_, param) in p.iter_mut() {
            param.value.data_mut().fill(0.0);
        }
        Ok(p)
    }
}

/// The recurrent cell behind both encoder and decoder.
enum Recurrent {
    Rnn(RnnCell),
    Lstm(LstmCell),
}

impl Recurrent {
    fn new(kind: CellKind, name: &str, input: usize, hidden: usize) -> Self {
        match kind {
            CellKind::Rnn => Recurrent::Rnn(RnnCell::new(name, input, hidden)),
            CellKind::Lstm => Recurrent::Lstm(LstmCell::new(name, input, hidden)),
        }
    }

    fn init(&self, p: &mut ParamSet, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            Recurrent::Rnn(c) => c.init(p, rng)?,
            Recurrent::Lstm(c) => c.init(p, rng)?,
        }
        Ok(())
    }

    fn step<'t>(&self, p: &Bound<'t>, x: Var<'t>, s: LstmState<'t>) -> Result<LstmState<'t>> {
        Ok(match self {
            Recurrent::Rnn(c) => LstmState {
                h: c.step(p, x, s.h)?,
                c: s.c,
            },
            Recurrent::Lstm(c) => c.step(p, x, s)?,
        })
    }
}

/// Decoder output and, for the variational model, the posterior parameters.
pub struct AeOutput<'t> {
    pub y: Var<'t>,
    pub mu: Option<Var<'t>>,
    pub logvar: Option<Var<'t>>,
}

/// `z = μ + σ ⊙ ε` on the tape, with `ε` a fixed constant.
pub fn reparameterize_var<'t>(mu: Var<'t>, sigma: Var<'t>, eps: &Tensor) -> Result<Var<'t>> {
    Ok(mu.add(sigma.mul_const(eps)?)?)
}

/// `z = μ + σ ⊙ ε` with `ε ~ N(0, 1)` drawn from `seed`.
pub fn reparameterize(mu: &Tensor, sigma: &Tensor, seed: u64) -> Result<Tensor> {
    if mu.shape() != sigma.shape() {
        return Err(ModelError::ShapeMismatch(format!(
            "mu {:?} vs sigma {:?}",
            mu.shape(),
            sigma.shape()
        )));
    }
    let eps = Tensor::randn(mu.shape(), &mut ChaCha8Rng::seed_from_u64(seed));
    let data = mu
        .data()
        .iter()
        .zip(sigma.data())
        .zip(eps.data())
        .map(|((m, s), e)| m + s * e)
        .collect();
    Ok(Tensor::new(mu.shape().to_vec(), data)?)
}

/// Encode `x [B, T]` into a latent code and decode a sequence of length `T`.
///
/// The decoder starts from `tanh(dec.init(z))` and, at step `t`, reads the
/// true `x[t−1]` when `teacher` is set and its own `y[t−1]` otherwise (zero at
/// `t = 0`). `eps` is the reparameterization noise `[B, latent]`, used only by
/// the variational model.
pub fn rnn_ae_forward<'t>(
    cfg: &AeConfig,
    p: &Bound<'t>,
    tape: &'t Tape,
    x: &Tensor,
    teacher: bool,
    eps: Option<&Tensor>,
) -> Result<AeOutput<'t>> {
    let &[batch, steps] = x.shape() else {
        return Err(ModelError::ShapeMismatch(format!("input {:?}, expected [batch, T]", x.shape())));
    };
    if steps != cfg.seq_len {
        return Err(ModelError::LengthMismatch {
            expected: cfg.seq_len,
            got: steps,
        });
    }
    let column = |t: usize| {
        let data = (0..batch).map(|b| x.data()[b * steps + t]).collect();
        Tensor::new(vec![batch, 1], data)
    };
    let zeros = |w| LstmState {
        h: tape.constant(Tensor::zeros(&[batch, w])),
        c: tape.constant(Tensor::zeros(&[batch, w])),
    };

    let enc = cfg.encoder_cell();
    let mut state = zeros(cfg.hidden);
    for t in 0..steps {
        state = enc.step(p, tape.constant(column(t)?), state)?;
    }
    let heads = cfg.code_heads();
    let (z, mu, logvar) = if cfg.variational {
        let mu = heads[0].forward(p, state.h)?;
        let logvar = heads[1].forward(p, state.h)?;
        let sigma = logvar.scale(0.5).exp();
        let default_eps;
        let eps = match eps {
            Some(e) => e,
            None => {
                default_eps = Tensor::zeros(&[batch, cfg.latent]);
                &default_eps
            }
        };
        (reparameterize_var(mu, sigma, eps)?, Some(mu), Some(logvar))
    } else {
        (heads[0].forward(p, state.h)?, None, None)
    };

    let dec = cfg.decoder_cell();
    let out = cfg.decoder_out();
    let mut state = LstmState {
        h: cfg.decoder_init().forward(p, z)?.tanh(),
        ..zeros(cfg.hidden)
    };
    let mut prev = tape.constant(Tensor::zeros(&[batch, 1]));
    let mut ys = Vec::with_capacity(steps);
    for t in 0..steps {
        state = dec.step(p, prev, state)?;
        let y = out.forward(p, state.h)?;
        ys.push(y);
        prev = if teacher { tape.constant(column(t)?) } else { y };
    }
    Ok(AeOutput {
        y: concat_cols(&ys)?,
        mu,
        logvar,
    })
}

/// Unit-variance Gaussian negative log-likelihood without its constant:
/// `mean((y − x)²) / 2`.
pub fn rnn_ae_loss<'t>(y: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
    if y.shape() != x.shape() {
        let got = y.shape().last().copied().unwrap_or(0);
        let expected = x.shape().last().copied().unwrap_or(0);
        return Err(ModelError::LengthMismatch { expected, got });
    }
    Ok(nn::half_mse(y, x)?)
}

/// `½ Σ (μ² + σ² − log σ² − 1)` against `N(0, I)`.
pub fn kl_standard_normal(mu: &[f64], sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| m * m + s * s - (s * s).ln() - 1.0)
        .sum::<f64>()
}

/// Batch mean of the closed-form KL, in terms of log-variance.
pub fn kl_divergence<'t>(mu: Var<'t>, logvar: Var<'t>) -> Result<Var<'t>> {
    let batch = mu.shape()[0] as f64;
    let terms = mu.mul(mu)?.add(logvar.exp())?.sub(logvar)?.add_scalar(-1.0);
    Ok(terms.sum().scale(0.5 / batch))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    /// Expected log-likelihood up to its constant, i.e. `−half_mse`.
    pub reconstruction: f64,
    pub kl: f64,
    /// `reconstruction − kl`.
    pub total: f64,
}

/// Negative ELBO on the tape (`half_mse + KL`), with the reconstruction and
/// KL parts for reporting.
pub fn vae_objective<'t>(out: &AeOutput<'t>, x: Var<'t>) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
    let (Some(mu), Some(logvar)) = (out.mu, out.logvar) else {
        return Err(ModelError::InvalidConfig("model is not variational".into()));
    };
    let recon = rnn_ae_loss(out.y, x)?;
    let kl = kl_divergence(mu, logvar)?;
    Ok((recon.add(kl)?, recon, kl))
}

/// Single-sample ELBO estimate for `x`, with `ε` drawn from `seed`.
pub fn rnn_vae_loss(cfg: &AeConfig, params: &ParamSet, x: &Tensor, seed: u64) -> Result<ElboTerms> {
    let tape = Tape::new();
    let p = tape.bind(params);
    let eps = Tensor::randn(&[x.shape()[0], cfg.latent], &mut ChaCha8Rng::seed_from_u64(seed));
    let out = rnn_ae_forward(cfg, &p, &tape, x, cfg.teacher_forcing, Some(&eps))?;
    let (_, recon, kl) = vae_objective(&out, tape.constant(x.clone()))?;
    let reconstruction = -recon.value().data()[0];
    let kl = kl.value().data()[0];
    Ok(ElboTerms {
        reconstruction,
        kl,
        total: reconstruction - kl,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub config: AeConfig,
    pub train: TrainConfig,
    pub iterations: u64,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineArchitecture {
    autoencoder: AeConfig,
    train: TrainConfig,
}

impl BaselineModel {
    pub fn to_checkpoint(&self) -> Result<ModelCheckpoint> {
        let arch = BaselineArchitecture {
            autoencoder: self.config,
            train: self.train,
        };
        Ok(ModelCheckpoint::new(
            Manifest::new(
                self.config.kind(),
                serde_json::to_value(arch).map_err(|e| ModelError::InvalidConfig(e.to_string()))?,
                self.train.seed,
                self.iterations,
            ),
            self.params.clone(),
        ))
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        let arch: BaselineArchitecture = serde_json::from_value(ckpt.manifest.config.clone())
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        if arch.autoencoder.kind() != ckpt.manifest.model {
            return Err(ModelError::InvalidConfig("manifest model kind disagrees with config".into()));
        }
        Ok(Self {
            config: arch.autoencoder,
            train: arch.train,
            iterations: ckpt.manifest.iterations,
            params: ckpt.params.clone(),
        })
    }

    /// Free-running reconstruction of `x [B, T]`; the variational model
    /// decodes from the posterior mean.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = tape.bind(&self.params);
        Ok(rnn_ae_forward(&self.config, &p, &tape, x, false, None)?.y.value())
    }

    /// Decode `count` sequences from latent codes drawn from `N(0, I)`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        let tape = Tape::new();
        let p = tape.bind(&self.params);
        let z = tape.constant(Tensor::randn(&[count, cfg.latent], &mut ChaCha8Rng::seed_from_u64(seed)));
        let dec = cfg.decoder_cell();
        let out = cfg.decoder_out();
        let mut state = LstmState {
            h: cfg.decoder_init().forward(&p, z)?.tanh(),
            c: tape.constant(Tensor::zeros(&[count, cfg.hidden])),
        };
        let mut prev = tape.constant(Tensor::zeros(&[count, 1]));
        let mut ys = Vec::with_capacity(cfg.seq_len);
        for _ in 0..cfg.seq_len {
            state = dec.step(&p, prev, state)?;
            prev = out.forward(&p, state.h)?;
            ys.push(prev);
        }
        let y = concat_cols(&ys)?.value();
        Ok(y.data().chunks(cfg.seq_len).map(<[f64]>::to_vec).collect())
    }
}

/// Adam training from the given parameters. `history[i]` is the minibatch
/// objective before update `i` (half-MSE, or negative ELBO when variational).
pub fn train_baseline_from(
    cfg: &AeConfig,
    params: ParamSet,
    data: &[Vec<f64>],
    tcfg: &TrainConfig,
) -> Result<(BaselineModel, Vec<f64>)> {
    cfg.validate()?;
    tcfg.validate()?;
    check_dataset(data, cfg.seq_len)?;
    let mut params = params;
    let mut opt = tcfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(2));
    let mut batcher = Batcher::new(data.len(), tcfg.batch_size);
    let mut history = Vec::new();
    for it in 0..tcfg.iterations(data.len()) {
        let idx = batcher.next(&mut rng);
        let x = batch_tensor(data, &idx)?;
        let eps = Tensor::randn(&[idx.len(), cfg.latent], &mut rng);
        let tape = Tape::new();
        let p = tape.bind(&params);
        let out = rnn_ae_forward(cfg, &p, &tape, &x, cfg.teacher_forcing, Some(&eps))?;
        let xv = tape.constant(x);
        let loss = if cfg.variational {
            vae_objective(&out, xv)?.0
        } else {
            rnn_ae_loss(out.y, xv)?
        };
        let value = loss.value().data()[0];
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss { iteration: it });
        }
        history.push(value);
        let grads = tape.backward(loss)?;
        params.accumulate_grads(&p, &grads)?;
        opt.step(&mut params);
    }
    params.quantize_f32();
    Ok((
        BaselineModel {
            config: *cfg,
            train: *tcfg,
            iterations: history.len() as u64,
            params,
        },
        history,
    ))
}

pub fn train_baseline(
    cfg: &AeConfig,
    data: &[Vec<f64>],
    tcfg: &TrainConfig,
) -> Result<(BaselineModel, Vec<f64>)> {
    let params = cfg.init(tcfg.seed)?;
    train_baseline_from(cfg, params, data, tcfg)
}
