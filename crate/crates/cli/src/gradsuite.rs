//! Finite-difference checks of every differentiable kernel over many seeds.

use qgf_core::features::logistic_loss_and_grad;
use qgf_models::baselines::{rnn_ae_forward, rnn_ae_loss, vae_objective, AeConfig, CellKind};
use qgf_models::gan::{
    discriminator_forward, gan_losses, generator_forward, ConvLayer, DiscriminatorConfig, GLoss,
    GeneratorConfig, PoolLayer,
};
use qgf_models::ModelError;
use qgf_tensor::gradcheck::{check_gradients, relative_error};
use qgf_tensor::nn::{self, BiLstm, Dense, LstmCell, Mode};
use qgf_tensor::{ParamSet, TensorError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const KERNELS: [&str; 10] = [
    "dense",
    "lstm_cell",
    "bilstm",
    "conv1d",
    "maxpool1d",
    "softmax",
    "gan_loss",
    "ae_loss",
    "vae_loss",
    "logistic_probe",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seeds: u64,
    pub base_seed: u64,
    pub eps: f64,
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: 50,
            base_seed: 42,
            eps: 1e-5,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel: String,
    pub seeds: u64,
    pub max_rel_error: f64,
    pub worst_seed: u64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub kernels: Vec<KernelReport>,
    pub passed: bool,
}

fn model_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::ShapeMismatch {
            op: "model",
            detail: other.to_string(),
        },
    }
}

fn tiny_generator(len: usize) -> GeneratorConfig {
    GeneratorConfig {
        noise_dim: 2,
        seq_len: len,
        hidden: 3,
        dropout: 0.4,
    }
}

fn tiny_discriminator(len: usize) -> DiscriminatorConfig {
    DiscriminatorConfig {
        input_len: len,
        conv1: ConvLayer {
            channels: 2,
            filter: 3,
            stride: 1,
        },
        pool1: PoolLayer { window: 2, stride: 1 },
        conv2: ConvLayer {
            channels: 2,
            filter: 2,
            stride: 1,
        },
        pool2: PoolLayer { window: 2, stride: 2 },
        dense: 3,
    }
}

/// Largest relative error between the tape gradient and central differences
/// for one kernel at one seed.
pub fn check_kernel(kernel: &str, seed: u64, eps: f64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new(seed);
    let report = match kernel {
        "dense" => {
            let layer = Dense::new("d", 4, 3);
            layer.init(&mut p, &mut r)?;
            p.insert("x", Tensor::randn(&[2, 4], &mut r))?;
            let w = Tensor::randn(&[2, 3], &mut r);
            check_gradients(&p, eps, |_, b| layer.forward(b, b.get("x")?)?.tanh().mul_const(&w).map(|v| v.sum()))?
        }
        "lstm_cell" => {
            let cell = LstmCell::new("c", 3, 4);
            cell.init(&mut p, &mut r)?;
            p.insert("x", Tensor::randn(&[2, 3], &mut r))?;
            p.insert("h0", Tensor::randn(&[2, 4], &mut r))?;
            p.insert("c0", Tensor::randn(&[2, 4], &mut r))?;
            let w = Tensor::randn(&[2, 4], &mut r);
            check_gradients(&p, eps, |_, b| {
                let state = nn::LstmState {
                    h: b.get("h0")?,
                    c: b.get("c0")?,
                };
                let s = cell.step(b, b.get("x")?, state)?;
                s.h.mul_const(&w)?.sum().add(s.c.mul(s.c)?.sum())
            })?
        }
        "bilstm" => {
            let layer = BiLstm::new("l", 2, 3, 3);
            layer.init(&mut p, &mut r)?;
            for t in 0..3 {
                p.insert(format!("x{t}"), Tensor::randn(&[2, 2], &mut r))?;
            }
            let ws: Vec<Tensor> = (0..3).map(|_| Tensor::randn(&[2, 3], &mut r)).collect();
            check_gradients(&p, eps, |_, b| {
                let xs = (0..3).map(|t| b.get(&format!("x{t}"))).collect::<qgf_tensor::Result<Vec<_>>>()?;
                let ys = layer.forward(b, &xs)?;
                let mut total = ys[0].mul_const(&ws[0])?.sum();
                for (y, w) in ys.iter().zip(&ws).skip(1) {
                    total = total.add(y.mul_const(w)?.sum())?;
                }
                Ok(total)
            })?
        }
        "conv1d" => {
            p.insert("x", Tensor::randn(&[2, 2, 12], &mut r))?;
            p.insert("w", Tensor::randn(&[3, 2, 3], &mut r))?;
            p.insert("b", Tensor::randn(&[3], &mut r))?;
            let w = Tensor::randn(&[2, 3, 6], &mut r);
            check_gradients(&p, eps, |_, b| {
                b.get("x")?.conv1d(b.get("w")?, b.get("b")?, 2, 1)?.tanh().mul_const(&w).map(|v| v.sum())
            })?
        }
        "maxpool1d" => {
            p.insert("x", Tensor::randn(&[2, 3, 11], &mut r))?;
            let w = Tensor::randn(&[2, 3, 5], &mut r);
            check_gradients(&p, eps, |_, b| b.get("x")?.maxpool1d(3, 2)?.mul_const(&w).map(|v| v.sum()))?
        }
        "softmax" => {
            p.insert("z", Tensor::randn(&[3, 4], &mut r))?;
            let w = Tensor::randn(&[3, 4], &mut r);
            check_gradients(&p, eps, |_, b| b.get("z")?.softmax_rows()?.mul_const(&w).map(|v| v.sum()))?
        }
        "gan_loss" => {
            let (g, d) = (tiny_generator(10), tiny_discriminator(10));
            p = g.init(r.random()).map_err(model_err)?;
            p.extend(d.init(r.random()).map_err(model_err)?)?;
            let noise = Tensor::randn(&[2, 10, 2], &mut r);
            let real = Tensor::randn(&[2, 10], &mut r);
            let mask_seed: u64 = r.random();
            check_gradients(&p, eps, |tape, b| {
                let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
                let fake = generator_forward(&g, b, tape, &noise, Mode::Train, &mut rng).map_err(model_err)?;
                let pf = discriminator_forward(&d, b, fake).map_err(model_err)?.slice_cols(0, 1)?;
                let pr = discriminator_forward(&d, b, tape.constant(real.clone()))
                    .map_err(model_err)?
                    .slice_cols(0, 1)?;
                let (dl, gl) = gan_losses(pr, pf, GLoss::Minimax).map_err(model_err)?;
                dl.add(gl)?.add(GLoss::NonSaturating.apply(pf))
            })?
        }
        "ae_loss" => {
            let cell = if seed % 2 == 0 { CellKind::Rnn } else { CellKind::Lstm };
            let teacher = (seed / 2) % 2 == 0;
            let cfg = AeConfig {
                hidden: 3,
                latent: 2,
                ..AeConfig::new(cell, false, 3)
            };
            p = cfg.init(r.random()).map_err(model_err)?;
            let x = Tensor::randn(&[2, 3], &mut r);
            check_gradients(&p, eps, |tape, b| {
                let out = rnn_ae_forward(&cfg, b, tape, &x, teacher, None).map_err(model_err)?;
                rnn_ae_loss(out.y, tape.constant(x.clone())).map_err(model_err)
            })?
        }
        "vae_loss" => {
            let cell = if seed % 2 == 0 { CellKind::Rnn } else { CellKind::Lstm };
            let cfg = AeConfig {
                hidden: 3,
                latent: 2,
                ..AeConfig::new(cell, true, 2)
            };
            p = cfg.init(r.random()).map_err(model_err)?;
            let x = Tensor::randn(&[2, 2], &mut r);
            let noise = Tensor::randn(&[2, 2], &mut r);
            check_gradients(&p, eps, |tape, b| {
                let out = rnn_ae_forward(&cfg, b, tape, &x, true, Some(&noise)).map_err(model_err)?;
                Ok(vae_objective(&out, tape.constant(x.clone())).map_err(model_err)?.0)
            })?
        }
        "logistic_probe" => return Ok(check_logistic(&mut r, eps)),
        other => return Err(CliError::Usage(format!("unknown kernel `{other}`"))),
    };
    Ok(report.max_rel_error)
}

fn check_logistic(r: &mut ChaCha8Rng, eps: f64) -> f64 {
    let normal = |r: &mut ChaCha8Rng| Tensor::randn(&[1], r).data()[0];
    let x: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| normal(r)).collect()).collect();
    let y: Vec<u8> = (0..20).map(|_| u8::from(r.random::<bool>())).collect();
    let w: Vec<f64> = (0..4).map(|_| normal(r)).collect();
    let b = normal(r);
    let lambda = 1e-3;
    let (_, gw, gb) = logistic_loss_and_grad(&x, &y, &w, b, lambda);
    let loss = |w: &[f64], b: f64| logistic_loss_and_grad(&x, &y, w, b, lambda).0;
    let mut worst = 0.0_f64;
    for j in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up[j] += eps;
        down[j] -= eps;
        let numeric = (loss(&up, b) - loss(&down, b)) / (2.0 * eps);
        worst = worst.max(relative_error(gw[j], numeric));
    }
    let numeric = (loss(&w, b + eps) - loss(&w, b - eps)) / (2.0 * eps);
    worst.max(relative_error(gb, numeric))
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut kernels = Vec::new();
    for name in KERNELS {
        let mut worst = (0.0_f64, cfg.base_seed);
        for seed in cfg.base_seed..cfg.base_seed + cfg.seeds {
            let err = check_kernel(name, seed, cfg.eps)?;
            if !(err <= worst.0) {
                worst = (err, seed);
            }
        }
        kernels.push(KernelReport {
            kernel: name.to_string(),
            seeds: cfg.seeds,
            max_rel_error: worst.0,
            worst_seed: worst.1,
            passed: worst.0 <= cfg.tol,
        });
    }
    let passed = kernels.iter().all(|k| k.passed);
    Ok(SuiteReport {
        config: *cfg,
        kernels,
        passed,
    })
}
