//! Recursive feature elimination with a logistic probe, and randomized PCA.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::FeatureMatrix;
use crate::market::LabelSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("cannot keep {keep} of {have} features")]
    TooFewFeatures { have: usize, keep: usize },
    #[error("{rows} feature rows vs {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("rank {k} exceeds min(rows, cols) = {max}")]
    RankTooHigh { k: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input matrix is empty")]
    EmptyInput,
}

/// Gradient-descent settings for the logistic probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            steps: 500,
            lr: 0.1,
            seed: 42,
        }
    }
}

/// Column-standardized copy of `rows`. Constant columns become all zeros.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    let p = first.len();
    let mut out = rows.to_vec();
    for j in 0..p {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus `λ/2·‖w‖²`, with gradients for `w` and `b`.
pub fn logistic_loss_and_grad(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    b: f64,
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let t = f64::from(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        gb += r;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
    }
    loss /= n;
    gb /= n;
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wj;
    }
    loss += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

/// Trained probe weights, bias and training accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub accuracy: f64,
}

pub fn train_probe(x: &[Vec<f64>], y: &[u8], cfg: &ProbeConfig) -> Probe {
    let p = x.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w: Vec<f64> = (0..p)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            0.01 * g
        })
        .collect();
    let mut b = 0.0;
    for _ in 0..cfg.steps {
        let (_, gw, gb) = logistic_loss_and_grad(x, y, &w, b, cfg.lambda);
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= cfg.lr * g;
        }
        b -= cfg.lr * gb;
    }
    let correct = x
        .iter()
        .zip(y)
        .filter(|(row, &t)| {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            u8::from(z > 0.0) == t
        })
        .count();
    Probe {
        weights: w,
        bias: b,
        accuracy: correct as f64 / x.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeReport {
    /// Worst feature first.
    pub elimination_order: Vec<String>,
    /// Survivors in declared column order.
    pub survivors: Vec<String>,
    /// Training accuracy of the probe fitted at the start of each round; the
    /// last entry belongs to the survivor set.
    pub round_accuracy: Vec<f64>,
}

pub fn rfe(
    rows: &[Vec<f64>],
    names: &[String],
    labels: &[u8],
    keep: usize,
    cfg: &ProbeConfig,
) -> Result<RfeReport, FeatureError> {
    if rows.len() != labels.len() {
        return Err(FeatureError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    if rows.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    if rows.iter().any(|r| r.len() != names.len()) {
        return Err(FeatureError::ShapeMismatch(format!(
            "rows must have {} columns",
            names.len()
        )));
    }
    if keep == 0 || keep > names.len() {
        return Err(FeatureError::TooFewFeatures {
            have: names.len(),
            keep,
        });
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 || positives == labels.len() {
        return Err(FeatureError::DegenerateLabels);
    }
    let y: Vec<u8> = labels.iter().map(|&l| u8::from(l != 0)).collect();
    let z = standardize(rows);

    let mut active: Vec<usize> = (0..names.len()).collect();
    let mut eliminated = Vec::new();
    let mut accuracy = Vec::new();
    loop {
        let sub: Vec<Vec<f64>> = z
            .iter()
            .map(|r| active.iter().map(|&j| r[j]).collect())
            .collect();
        let probe = train_probe(&sub, &y, cfg);
        accuracy.push(probe.accuracy);
        if active.len() == keep {
            break;
        }
        let mut worst = 0;
        for (i, w) in probe.weights.iter().enumerate() {
            if w.abs() < probe.weights[worst].abs() {
                worst = i;
            }
        }
        eliminated.push(names[active.remove(worst)].clone());
    }
    Ok(RfeReport {
        elimination_order: eliminated,
        survivors: active.iter().map(|&j| names[j].clone()).collect(),
        round_accuracy: accuracy,
    })
}

/// RFE over an indicator matrix, pairing each feature row with the label
/// `horizon` bars ahead.
pub fn rfe_features(
    features: &FeatureMatrix,
    labels: &LabelSeries,
    keep: usize,
    cfg: &ProbeConfig,
) -> Result<RfeReport, FeatureError> {
    let (rows, y) = features.align_with_labels(labels);
    rfe(&rows, &features.feature_names, &y, keep, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k × features`, rows orthonormal.
    pub components: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }
}

fn to_matrix(x: &[Vec<f64>]) -> Result<DMatrix<f64>, FeatureError> {
    let cols = x.first().map_or(0, Vec::len);
    if x.is_empty() || cols == 0 {
        return Err(FeatureError::EmptyInput);
    }
    if x.iter().any(|r| r.len() != cols) {
        return Err(FeatureError::ShapeMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(x.len(), cols, |i, j| x[i][j]))
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

pub const DEFAULT_OVERSAMPLE: usize = 5;

/// Randomized PCA: Gaussian range finder with one power iteration, then an
/// exact SVD of the small projected matrix.
pub fn randomized_pca_fit(
    x: &[Vec<f64>],
    k: usize,
    oversample: usize,
    seed: u64,
) -> Result<PcaModel, FeatureError> {
    let m = to_matrix(x)?;
    let (n, p) = m.shape();
    let max = n.min(p);
    if k == 0 || k > max {
        return Err(FeatureError::RankTooHigh { k, max });
    }
    let means: Vec<f64> = (0..p).map(|j| m.column(j).mean()).collect();
    let mut xc = m;
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-means[j]);
    }

    let width = (k + oversample).min(max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(p, width, |_, _| StandardNormal.sample(&mut rng));
    let q = orthonormal_basis(&xc * omega);
    let q = orthonormal_basis(xc.transpose() * q);
    let q = orthonormal_basis(&xc * q);
    let b = q.transpose() * &xc;

    let svd = b.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));

    let total: f64 = xc.iter().map(|v| v * v).sum();
    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        let s = svd.singular_values[i];
        ratios.push(if total > 0.0 { (s * s / total).min(1.0) } else { 0.0 });
    }
    Ok(PcaModel {
        components,
        means,
        explained_variance_ratio: ratios,
    })
}

/// `(X − means)·componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FeatureError> {
    x.iter()
        .map(|row| {
            if row.len() != model.n_features() {
                return Err(FeatureError::ShapeMismatch(format!(
                    "row has {} columns, model expects {}",
                    row.len(),
                    model.n_features()
                )));
            }
            Ok(model
                .components
                .iter()
                .map(|c| {
                    row.iter()
                        .zip(&model.means)
                        .zip(c)
                        .map(|((v, mu), g)| (v - mu) * g)
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// `Z·components + means`.
pub fn pca_inverse_transform(
    model: &PcaModel,
    z: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, FeatureError> {
    z.iter()
        .map(|row| {
            if row.len() != model.k() {
                return Err(FeatureError::ShapeMismatch(format!(
                    "row has {} scores, model has {} components",
                    row.len(),
                    model.k()
                )));
            }
            let mut out = model.means.clone();
            for (score, c) in row.iter().zip(&model.components) {
                for (o, g) in out.iter_mut().zip(c) {
                    *o += score * g;
                }
            }
            Ok(out)
        })
        .collect()
}
