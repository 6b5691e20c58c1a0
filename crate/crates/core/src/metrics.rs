//! Classification rates, correlation and sequence distortion measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("reference sequence has zero energy")]
    ZeroReference,
    #[error("curve points have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("curve is empty")]
    EmptyCurve,
    #[error("cannot pair sequences: {0}")]
    PairingMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[u8], actual: &[u8]) -> Result<Self, MetricsError> {
        if predicted.len() != actual.len() {
            return Err(MetricsError::LengthMismatch(predicted.len(), actual.len()));
        }
        let mut c = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p != 0, a != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total() > 0).then(|| (self.tp + self.tn) as f64 / self.total() as f64)
    }
}

/// Precision, recall and F1; `None` marks an undefined rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRates {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> ClassificationRates {
    let precision = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
    let recall = (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64);
    let f1 = precision.zip(recall).map(|(p, r)| f1_score(p, r));
    ClassificationRates {
        precision,
        recall,
        f1,
    }
}

fn same_len(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

/// Pearson correlation, computed on mean-centred values.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    same_len(x, y)?;
    if x.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Percent root-mean-square difference `100·√(Σ(x−x̂)² / Σx²)`.
pub fn prd(x: &[f64], x_hat: &[f64]) -> Result<f64, MetricsError> {
    same_len(x, x_hat)?;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(100.0 * (err / energy).sqrt())
}

pub fn rmse(x: &[f64], x_hat: &[f64]) -> Result<f64, MetricsError> {
    same_len(x, x_hat)?;
    if x.is_empty() {
        return Err(MetricsError::TooShort { needed: 1, got: 0 });
    }
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((err / x.len() as f64).sqrt())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Discrete Fréchet distance between two polygonal curves.
///
/// `ca[i][j]` is the smallest achievable maximum leash length over monotone
/// couplings of `p[..=i]` and `q[..=j]`; one row of the table is kept.
pub fn frechet_distance<P: AsRef<[f64]>>(p: &[P], q: &[P]) -> Result<f64, MetricsError> {
    let (Some(first), false) = (p.first(), q.is_empty()) else {
        return Err(MetricsError::EmptyCurve);
    };
    let dim = first.as_ref().len();
    for pt in p.iter().chain(q) {
        if pt.as_ref().len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, pt.as_ref().len()));
        }
    }
    let m = q.len();
    let mut row = vec![0.0_f64; m];
    for (i, pi) in p.iter().enumerate() {
        let mut prev_diag = 0.0;
        for j in 0..m {
            let d = euclidean(pi.as_ref(), q[j].as_ref());
            let best = match (i, j) {
                (0, 0) => d,
                (0, _) => row[j - 1].max(d),
                (_, 0) => row[0].max(d),
                _ => row[j].min(row[j - 1]).min(prev_diag).max(d),
            };
            prev_diag = row[j];
            row[j] = best;
        }
    }
    Ok(row[m - 1])
}

/// Discrete Fréchet distance between two scalar sequences, each value a
/// one-dimensional point.
pub fn frechet_sequences(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let p: Vec<[f64; 1]> = x.iter().map(|&v| [v]).collect();
    let q: Vec<[f64; 1]> = y.iter().map(|&v| [v]).collect();
    frechet_distance(&p, &q)
}

/// How generated sequences are matched to real ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Sequence `i` against sequence `i`; every metric averaged over pairs.
    #[default]
    Paired,
    /// PRD/RMSE/r paired by index; FD between the two concatenated curves.
    Concatenated,
}

/// Named metric values plus the identities of the compared inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub real: String,
    pub generated: String,
    pub pairing: Pairing,
    pub pairs: usize,
    #[serde(flatten)]
    pub values: BTreeMap<String, Option<f64>>,
    pub undefined_flags: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn compare_sequences(
    real: &[Vec<f64>],
    generated: &[Vec<f64>],
    pairing: Pairing,
    real_id: &str,
    generated_id: &str,
) -> Result<MetricsReport, MetricsError> {
    if real.is_empty() || generated.is_empty() {
        return Err(MetricsError::PairingMismatch("empty sequence set".into()));
    }
    if real.len() != generated.len() {
        return Err(MetricsError::PairingMismatch(format!(
            "{} real vs {} generated sequences",
            real.len(),
            generated.len()
        )));
    }
    for (i, (r, g)) in real.iter().zip(generated).enumerate() {
        if r.len() != g.len() || r.is_empty() {
            return Err(MetricsError::PairingMismatch(format!(
                "pair {i}: lengths {} and {}",
                r.len(),
                g.len()
            )));
        }
    }

    let mut prds = Vec::new();
    let mut rmses = Vec::new();
    let mut rs = Vec::new();
    let mut fds = Vec::new();
    let mut flags = Vec::new();
    for (i, (r, g)) in real.iter().zip(generated).enumerate() {
        match prd(r, g) {
            Ok(v) => prds.push(v),
            Err(e) => flags.push(format!("prd[{i}]: {e}")),
        }
        rmses.push(rmse(r, g)?);
        match pearson_r(r, g) {
            Ok(v) => rs.push(v),
            Err(e) => flags.push(format!("pearson_r[{i}]: {e}")),
        }
        if pairing == Pairing::Paired {
            fds.push(frechet_sequences(r, g)?);
        }
    }
    if pairing == Pairing::Concatenated {
        let cat = |s: &[Vec<f64>]| s.iter().flatten().copied().collect::<Vec<_>>();
        fds.push(frechet_sequences(&cat(real), &cat(generated))?);
    }

    let mut values = BTreeMap::new();
    let mut undefined = Vec::new();
    for (name, xs) in [("prd", &prds), ("rmse", &rmses), ("fd", &fds), ("pearson_r", &rs)] {
        if xs.is_empty() {
            values.insert(name.to_string(), None);
            undefined.push(name.to_string());
        } else {
            values.insert(name.to_string(), Some(mean(xs)));
        }
    }
    undefined.extend(flags);
    Ok(MetricsReport {
        real: real_id.to_string(),
        generated: generated_id.to_string(),
        pairing,
        pairs: real.len(),
        values,
        undefined_flags: undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_examples() {
        let r = precision_recall_f1(&ConfusionCounts {
            tp: 5,
            fp: 5,
            tn: 0,
            fn_: 5,
        });
        assert_eq!((r.precision, r.recall, r.f1), (Some(0.5), Some(0.5), Some(0.5)));
        let r = precision_recall_f1(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 3,
            fn_: 2,
        });
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.f1, None);
        let r = precision_recall_f1(&ConfusionCounts {
            tp: 0,
            fp: 4,
            tn: 3,
            fn_: 2,
        });
        assert_eq!(r.f1, Some(0.0));
    }

    #[test]
    fn f1_for_reported_rates() {
        let f1 = f1_score(0.64, 0.66);
        assert!((f1 - 0.649_846_153_846).abs() < 1e-9);
        assert!((f1 - 0.64).abs() <= 0.01);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson_r(&[2.0; 4], &x), Err(MetricsError::ZeroVariance));
        assert!(matches!(pearson_r(&[1.0], &[1.0]), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn prd_rmse_examples() {
        assert_eq!(prd(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(prd(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 100.0);
        assert_eq!(prd(&[0.0, 0.0], &[1.0, 0.0]), Err(MetricsError::ZeroReference));
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(1, 2)));
    }

    #[test]
    fn frechet_examples() {
        let p = [[0.0, 0.0], [1.0, 0.0]];
        let q = [[0.0, 1.0], [1.0, 1.0]];
        assert_eq!(frechet_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(frechet_distance(&p, &q).unwrap(), 1.0);
        assert_eq!(frechet_distance(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        let empty: [[f64; 2]; 0] = [];
        assert_eq!(frechet_distance(&empty, &q), Err(MetricsError::EmptyCurve));
        let mixed: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            frechet_distance(&mixed, &mixed),
            Err(MetricsError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn identical_sets_report_zero() {
        let a = vec![vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 2.0]];
        for pairing in [Pairing::Paired, Pairing::Concatenated] {
            let rep = compare_sequences(&a, &a, pairing, "a.csv", "b.csv").unwrap();
            assert_eq!(rep.values["prd"], Some(0.0));
            assert_eq!(rep.values["rmse"], Some(0.0));
            assert_eq!(rep.values["fd"], Some(0.0));
            assert!((rep.values["pearson_r"].unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(rep.real, "a.csv");
            assert_eq!(rep.generated, "b.csv");
            assert_eq!(rep.pairing, pairing);
            assert!(rep.undefined_flags.is_empty());
        }
    }

    #[test]
    fn compare_matches_per_pair_loop() {
        let real = vec![vec![1.0, 2.0, 3.0, 2.0], vec![0.5, -1.0, 2.0, 0.0]];
        let gen = vec![vec![1.5, 1.0, 3.5, 2.0], vec![0.0, -2.0, 2.5, 1.0]];
        let rep = compare_sequences(&real, &gen, Pairing::Paired, "r", "g").unwrap();
        let mut prd_sum = 0.0;
        let mut rmse_sum = 0.0;
        for (r, g) in real.iter().zip(&gen) {
            let se: f64 = r.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum();
            let en: f64 = r.iter().map(|a| a * a).sum();
            prd_sum += 100.0 * (se / en).sqrt();
            rmse_sum += (se / r.len() as f64).sqrt();
        }
        assert!((rep.values["prd"].unwrap() - prd_sum / 2.0).abs() < 1e-12);
        assert!((rep.values["rmse"].unwrap() - rmse_sum / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairing_errors_and_flags() {
        let a = vec![vec![1.0, 2.0]];
        let b = vec![vec![1.0, 2.0, 3.0]];
        assert!(matches!(
            compare_sequences(&a, &b, Pairing::Paired, "a", "b"),
            Err(MetricsError::PairingMismatch(_))
        ));
        let zero = vec![vec![0.0, 0.0]];
        let rep = compare_sequences(&zero, &a, Pairing::Paired, "a", "b").unwrap();
        assert_eq!(rep.values["prd"], None);
        assert!(rep.undefined_flags.iter().any(|f| f == "prd"));
        assert!(rep.undefined_flags.iter().any(|f| f.starts_with("pearson_r[0]")));
    }
}
