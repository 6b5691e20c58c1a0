//! Bi-LSTM generator, convolutional discriminator and the alternating
//! adversarial training loop.

use qgf_tensor::nn::{
    self, conv_out_size, BiLstm, Dense, LayerGeometry, Mode,
};
use qgf_tensor::optim::{Adam, AdamConfig};
use qgf_tensor::{concat_cols, Bound, ParamSet, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Manifest, ModelCheckpoint, ModelKind};
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Noise values per time step.
    pub noise_dim: usize,
    pub seq_len: usize,
    /// Hidden size of each direction of both Bi-LSTM layers.
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            noise_dim: 1,
            seq_len: FULL_SEQ_LEN,
            hidden: 90,
            dropout: 0.4,
        }
    }
}

impl GeneratorConfig {
    /// Small hidden size for laptop-scale experiments.
    pub fn desk(seq_len: usize) -> Self {
        Self {
            seq_len,
            hidden: DESK_HIDDEN,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.noise_dim == 0 {
            return Err(ModelError::InvalidConfig("generator sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.seq_len < 2 {
            return Err(ModelError::InvalidConfig("sequence length must be ≥ 2".into()));
        }
        Ok(())
    }

    fn layers(&self) -> (BiLstm, BiLstm, Dense) {
        (
            BiLstm::new("g.l1", self.noise_dim, self.hidden, self.hidden),
            BiLstm::new("g.l2", self.hidden, self.hidden, self.hidden),
            Dense::new("g.out", self.hidden, 1),
        )
    }

    pub fn init(&self, seed: u64) -> Result<ParamSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new(seed);
        let (l1, l2, out) = self.layers();
        l1.init(&mut p, &mut rng)?;
        l2.init(&mut p, &mut rng)?;
        out.init(&mut p, &mut rng)?;
        Ok(p)
    }
}

pub const FULL_SEQ_LEN: usize = 3120;
pub const DESK_SEQ_LEN: usize = 64;
pub const DESK_LR: f64 = 3e-4;
pub const DESK_HIDDEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub filter: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLayer {
    pub window: usize,
    pub stride: usize,
}

/// conv → pool → conv → pool → dense (tanh) → 2-way softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub input_len: usize,
    pub conv1: ConvLayer,
    pub pool1: PoolLayer,
    pub conv2: ConvLayer,
    pub pool2: PoolLayer,
    pub dense: usize,
}

const FULL_CONV1: ConvLayer = ConvLayer {
    channels: 10,
    filter: 120,
    stride: 5,
};
const FULL_POOL1: PoolLayer = PoolLayer {
    window: 46,
    stride: 3,
};
const FULL_CONV2: ConvLayer = ConvLayer {
    channels: 5,
    filter: 36,
    stride: 3,
};
const FULL_POOL2: PoolLayer = PoolLayer {
    window: 24,
    stride: 3,
};

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            input_len: FULL_SEQ_LEN,
            conv1: FULL_CONV1,
            pool1: FULL_POOL1,
            conv2: FULL_CONV2,
            pool2: FULL_POOL2,
            dense: 25,
        }
    }
}

impl DiscriminatorConfig {
    /// The reference stack rescaled to `input_len`: widths shrink with
    /// `r = input_len / 3120` (floor 2), strides with `r^¼` (floor 1), and every
    /// window is clipped to the width it slides over.
    pub fn for_length(input_len: usize) -> Result<Self> {
        if input_len == FULL_SEQ_LEN {
            return Ok(Self::default());
        }
        if input_len < 2 {
            return Err(ModelError::InvalidConfig("discriminator input must be ≥ 2".into()));
        }
        let r = input_len as f64 / FULL_SEQ_LEN as f64;
        let size = |f: usize, width: usize| ((f as f64 * r).round() as usize).max(2).min(width);
        let step = |s: usize| ((s as f64 * r.powf(0.25)).round() as usize).max(1);

        let mut width = input_len;
        let conv1 = ConvLayer {
            filter: size(FULL_CONV1.filter, width),
            stride: step(FULL_CONV1.stride),
            ..FULL_CONV1
        };
        width = (width - conv1.filter) / conv1.stride + 1;
        let pool1 = PoolLayer {
            window: size(FULL_POOL1.window, width),
            stride: step(FULL_POOL1.stride),
        };
        width = (width - pool1.window) / pool1.stride + 1;
        let conv2 = ConvLayer {
            filter: size(FULL_CONV2.filter, width),
            stride: step(FULL_CONV2.stride),
            ..FULL_CONV2
        };
        width = (width - conv2.filter) / conv2.stride + 1;
        let pool2 = PoolLayer {
            window: size(FULL_POOL2.window, width),
            stride: step(FULL_POOL2.stride),
        };
        let cfg = Self {
            input_len,
            conv1,
            pool1,
            conv2,
            pool2,
            dense: 25,
        };
        cfg.layer_shapes()?;
        Ok(cfg)
    }

    /// `(channels, width)` after conv1, pool1, conv2 and pool2.
    pub fn layer_shapes(&self) -> Result<[(usize, usize); 4]> {
        let geom = |width, channels, filter, stride| LayerGeometry {
            width,
            height: 1,
            channels,
            filter,
            stride,
            padding: 0,
        };
        let w1 = conv_out_size(&geom(self.input_len, 1, self.conv1.filter, self.conv1.stride))?;
        let w2 = conv_out_size(&geom(w1, self.conv1.channels, self.pool1.window, self.pool1.stride))?;
        let w3 = conv_out_size(&geom(w2, self.conv1.channels, self.conv2.filter, self.conv2.stride))?;
        let w4 = conv_out_size(&geom(w3, self.conv2.channels, self.pool2.window, self.pool2.stride))?;
        Ok([
            (self.conv1.channels, w1),
            (self.conv1.channels, w2),
            (self.conv2.channels, w3),
            (self.conv2.channels, w4),
        ])
    }

    pub fn flat_dim(&self) -> Result<usize> {
        let (c, w) = self.layer_shapes()?[3];
        Ok(c * w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv1.channels == 0 || self.conv2.channels == 0 || self.dense == 0 {
            return Err(ModelError::InvalidConfig("discriminator sizes must be positive".into()));
        }
        self.layer_shapes()?;
        Ok(())
    }

    fn heads(&self) -> Result<(Dense, Dense)> {
        Ok((
            Dense::new("d.fc", self.flat_dim()?, self.dense),
            Dense::new("d.head", self.dense, 2),
        ))
    }

    pub fn init(&self, seed: u64) -> Result<ParamSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new(seed);
        for (name, layer, c_in) in [("d.c1", self.conv1, 1), ("d.c2", self.conv2, self.conv1.channels)] {
            let fan_in = c_in * layer.filter;
            let fan_out = layer.channels * layer.filter;
            p.insert(
                format!("{name}.weight"),
                Tensor::xavier_uniform(&[layer.channels, c_in, layer.filter], fan_in, fan_out, &mut rng),
            )?;
            p.insert(format!("{name}.bias"), Tensor::zeros(&[layer.channels]))?;
        }
        let (fc, head) = self.heads()?;
        fc.init(&mut p, &mut rng)?;
        head.init(&mut p, &mut rng)?;
        Ok(p)
    }
}

/// I.i.d. standard normal noise of shape `[batch, seq_len, noise_dim]`.
pub fn sample_noise(batch: usize, seq_len: usize, noise_dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noise_from(&mut rng, batch, seq_len, noise_dim)
}

fn noise_from<R: Rng>(rng: &mut R, batch: usize, seq_len: usize, noise_dim: usize) -> Tensor {
    Tensor::randn(&[batch, seq_len, noise_dim], rng)
}

/// Generator on a tape: `noise [B, T, d]` → `[B, T]`. Train mode draws dropout
/// masks from `rng`.
pub fn generator_forward<'t, R: Rng>(
    cfg: &GeneratorConfig,
    p: &Bound<'t>,
    tape: &'t Tape,
    noise: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<Var<'t>> {
    let &[batch, steps, d] = noise.shape() else {
        return Err(ModelError::ShapeMismatch(format!(
            "noise shape {:?}, expected [batch, T, {}]",
            noise.shape(),
            cfg.noise_dim
        )));
    };
    if d != cfg.noise_dim {
        return Err(ModelError::ShapeMismatch(format!(
            "noise dimension {d}, generator expects {}",
            cfg.noise_dim
        )));
    }
    let xs: Vec<Var<'t>> = (0..steps)
        .map(|t| {
            let mut step = Vec::with_capacity(batch * d);
            for b in 0..batch {
                let start = (b * steps + t) * d;
                step.extend_from_slice(&noise.data()[start..start + d]);
            }
            Ok(tape.constant(Tensor::new(vec![batch, d], step)?))
        })
        .collect::<Result<_>>()?;
    let (l1, l2, out) = cfg.layers();
    let h1 = l1.forward(p, &xs)?;
    let h2 = l2.forward(p, &h1)?;
    let ys = h2
        .into_iter()
        .map(|h| {
            let h = nn::dropout(h, cfg.dropout, mode, rng)?;
            Ok(out.forward(p, h)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(concat_cols(&ys)?)
}

/// Generated sequences `[B, T]` for a noise batch; `seed` drives dropout in
/// train mode.
pub fn generate(
    cfg: &GeneratorConfig,
    params: &ParamSet,
    noise: &Tensor,
    mode: Mode,
    seed: u64,
) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = tape.bind(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(generator_forward(cfg, &bound, &tape, noise, mode, &mut rng)?.value())
}

/// Class probabilities `[B, 2]`; column 0 is "real".
pub fn discriminator_forward<'t>(
    cfg: &DiscriminatorConfig,
    p: &Bound<'t>,
    x: Var<'t>,
) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != cfg.input_len {
        return Err(ModelError::LengthMismatch {
            expected: cfg.input_len,
            got: shape.get(1).copied().unwrap_or(0),
        });
    }
    let batch = shape[0];
    let x = x.reshape(&[batch, 1, cfg.input_len])?;
    let c1 = x
        .conv1d(p.get("d.c1.weight")?, p.get("d.c1.bias")?, cfg.conv1.stride, 0)?
        .tanh()
        .maxpool1d(cfg.pool1.window, cfg.pool1.stride)?;
    let c2 = c1
        .conv1d(p.get("d.c2.weight")?, p.get("d.c2.bias")?, cfg.conv2.stride, 0)?
        .tanh()
        .maxpool1d(cfg.pool2.window, cfg.pool2.stride)?;
    let flat = c2.reshape(&[batch, cfg.flat_dim()?])?;
    let (fc, head) = cfg.heads()?;
    let hidden = fc.forward(p, flat)?.tanh();
    Ok(head.forward(p, hidden)?.softmax_rows()?)
}

/// Probability that each row of `batch [B, L]` is real.
pub fn discriminate(cfg: &DiscriminatorConfig, params: &ParamSet, batch: &Tensor) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let bound = tape.bind(params);
    let probs = discriminator_forward(cfg, &bound, tape.constant(batch.clone()))?.value();
    Ok(probs.data().chunks(2).map(|row| row[0]).collect())
}

fn p_real(probs: Var<'_>) -> Result<Var<'_>> {
    Ok(probs.slice_cols(0, 1)?)
}

/// Adversarial losses on discriminator outputs.
pub fn gan_losses<'t>(d_real: Var<'t>, d_fake: Var<'t>, g_loss: GLoss) -> Result<(Var<'t>, Var<'t>)> {
    let d = nn::discriminator_loss(d_real, d_fake)?;
    Ok((d, g_loss.apply(d_fake)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GLoss {
    /// `mean log(1 − D(G(z)))`, minimized.
    #[default]
    Minimax,
    /// `−mean log D(G(z))`.
    NonSaturating,
}

impl GLoss {
    pub fn apply(self, d_fake: Var<'_>) -> Var<'_> {
        match self {
            GLoss::Minimax => nn::generator_loss_minimax(d_fake),
            GLoss::NonSaturating => nn::generator_loss_nonsaturating(d_fake),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub d_steps: usize,
    pub g_loss: GLoss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 100,
            lr: 1e-5,
            seed: 42,
            d_steps: 1,
            g_loss: GLoss::Minimax,
        }
    }
}

impl TrainConfig {
    /// 30 epochs of 32-sequence batches at Adam lr 3e-4.
    pub fn desk() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: DESK_LR,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.d_steps == 0 {
            return Err(ModelError::InvalidConfig(
                "epochs, batch size and d-steps must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn iterations(&self, dataset_len: usize) -> usize {
        self.epochs * dataset_len.div_ceil(self.batch_size)
    }

    pub(crate) fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        })
    }
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GanHistory {
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
    /// Mean `D(x)` on the real batch of the last discriminator step.
    pub d_real: Vec<f64>,
    /// Mean `D(G(z))` seen by the generator step.
    pub d_fake: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub iterations: u64,
    pub gen_params: ParamSet,
    pub disc_params: ParamSet,
}

/// Zero mean, unit variance per sequence; constant sequences become zeros.
pub fn standardize_sequences(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|s| {
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            s.iter()
                .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Noisy sine waves with random frequency in [1, 3] cycles and random phase.
pub fn noisy_sine_dataset(count: usize, len: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let freq = rng.random_range(1.0..3.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (0..len)
                .map(|t| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    (std::f64::consts::TAU * freq * t as f64 / len as f64 + phase).sin() + noise * eps
                })
                .collect()
        })
        .collect()
}

pub(crate) fn check_dataset(data: &[Vec<f64>], len: usize) -> Result<()> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if let Some(bad) = data.iter().find(|s| s.len() != len) {
        return Err(ModelError::LengthMismatch {
            expected: len,
            got: bad.len(),
        });
    }
    Ok(())
}

pub(crate) fn batch_tensor(data: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    let len = data[idx[0]].len();
    let flat = idx.iter().flat_map(|&i| data[i].iter().copied()).collect();
    Ok(Tensor::new(vec![idx.len(), len], flat)?)
}

/// Shuffled minibatches of indices, one epoch at a time.
pub(crate) struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Batcher {
    pub(crate) fn new(len: usize, batch: usize) -> Self {
        Self {
            order: (0..len).collect(),
            pos: len,
            batch,
        }
    }

    pub(crate) fn next<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

fn finite(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFiniteLoss { iteration })
    }
}

/// Alternating training: `d_steps` discriminator updates against detached
/// fakes, then one generator update through the discriminator.
///
/// Real sequences are standardized per sequence before they reach D. Final
/// parameters are rounded to `f32`, the checkpoint precision.
pub fn train_gan(
    data: &[Vec<f64>],
    gen_cfg: &GeneratorConfig,
    disc_cfg: &DiscriminatorConfig,
    cfg: &TrainConfig,
) -> Result<(GanModel, GanHistory)> {
    gen_cfg.validate()?;
    disc_cfg.validate()?;
    cfg.validate()?;
    if gen_cfg.seq_len != disc_cfg.input_len {
        return Err(ModelError::InvalidConfig(format!(
            "generator length {} differs from discriminator input {}",
            gen_cfg.seq_len, disc_cfg.input_len
        )));
    }
    check_dataset(data, gen_cfg.seq_len)?;
    let real = standardize_sequences(data);

    let mut gen = gen_cfg.init(cfg.seed)?;
    let mut disc = disc_cfg.init(cfg.seed.wrapping_add(1))?;
    let mut g_opt = cfg.adam();
    let mut d_opt = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut batcher = Batcher::new(real.len(), cfg.batch_size);
    let mut history = GanHistory::default();
    let (t, d) = (gen_cfg.seq_len, gen_cfg.noise_dim);

    for it in 0..cfg.iterations(real.len()) {
        let mut d_loss = 0.0;
        let mut d_real = 0.0;
        for _ in 0..cfg.d_steps {
            let idx = batcher.next(&mut rng);
            let noise = noise_from(&mut rng, idx.len(), t, d);
            let fake = {
                let tape = Tape::new();
                let g = tape.bind(&gen);
                generator_forward(gen_cfg, &g, &tape, &noise, Mode::Train, &mut rng)?.value()
            };
            let tape = Tape::new();
            let dp = tape.bind(&disc);
            let pr = p_real(discriminator_forward(disc_cfg, &dp, tape.constant(batch_tensor(&real, &idx)?))?)?;
            let pf = p_real(discriminator_forward(disc_cfg, &dp, tape.constant(fake))?)?;
            let loss = nn::discriminator_loss(pr, pf)?;
            d_loss = finite(loss.value().data()[0], it)?;
            d_real = pr.value().data().iter().sum::<f64>() / idx.len() as f64;
            let grads = tape.backward(loss)?;
            disc.accumulate_grads(&dp, &grads)?;
            d_opt.step(&mut disc);
        }

        let noise = noise_from(&mut rng, cfg.batch_size, t, d);
        let tape = Tape::new();
        let gp = tape.bind(&gen);
        let dp = tape.bind(&disc);
        let fake = generator_forward(gen_cfg, &gp, &tape, &noise, Mode::Train, &mut rng)?;
        let pf = p_real(discriminator_forward(disc_cfg, &dp, fake)?)?;
        let loss = cfg.g_loss.apply(pf);
        let g_loss = finite(loss.value().data()[0], it)?;
        let grads = tape.backward(loss)?;
        gen.accumulate_grads(&gp, &grads)?;
        g_opt.step(&mut gen);

        history.d_loss.push(d_loss);
        history.g_loss.push(g_loss);
        history.d_real.push(d_real);
        history.d_fake.push(pf.value().data().iter().sum::<f64>() / cfg.batch_size as f64);
    }

    gen.quantize_f32();
    disc.quantize_f32();
    Ok((
        GanModel {
            generator: *gen_cfg,
            discriminator: *disc_cfg,
            train: *cfg,
            iterations: history.g_loss.len() as u64,
            gen_params: gen,
            disc_params: disc,
        },
        history,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GanArchitecture {
    generator: GeneratorConfig,
    discriminator: DiscriminatorConfig,
    train: TrainConfig,
    real_data_standardized: bool,
}

impl GanModel {
    pub fn to_checkpoint(&self) -> Result<ModelCheckpoint> {
        let arch = GanArchitecture {
            generator: self.generator,
            discriminator: self.discriminator,
            train: self.train,
            real_data_standardized: true,
        };
        let mut params = self.gen_params.clone();
        params.extend(self.disc_params.clone())?;
        Ok(ModelCheckpoint::new(
            Manifest::new(
                ModelKind::Gan,
                serde_json::to_value(arch).map_err(|e| ModelError::InvalidConfig(e.to_string()))?,
                self.train.seed,
                self.iterations,
            ),
            params,
        ))
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        if ckpt.manifest.model != ModelKind::Gan {
            return Err(ModelError::InvalidConfig(format!(
                "checkpoint holds a {:?} model",
                ckpt.manifest.model
            )));
        }
        let arch: GanArchitecture = serde_json::from_value(ckpt.manifest.config.clone())
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            generator: arch.generator,
            discriminator: arch.discriminator,
            train: arch.train,
            iterations: ckpt.manifest.iterations,
            gen_params: ckpt.params.split_prefix("g."),
            disc_params: ckpt.params.split_prefix("d."),
        })
    }

    /// `count` sequences of length `len` in eval mode.
    pub fn sample(&self, count: usize, len: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let noise = sample_noise(count, len, self.generator.noise_dim, seed);
        let out = generate(&self.generator, &self.gen_params, &noise, Mode::Eval, seed)?;
        Ok(out.data().chunks(len).map(<[f64]>::to_vec).collect())
    }
}
