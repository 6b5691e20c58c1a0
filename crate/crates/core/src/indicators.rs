//! The fifteen technical indicators and the per-bar feature matrix.
//!
//! Every indicator returns one entry per bar; entries before the indicator's
//! warmup are `None`. Rolling windows over `n` days cover bars `i-n+1..=i`;
//! windows over `n` price changes cover changes ending at bars `i-n+1..=i`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{Bar, PriceSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("{indicator} needs at least {needed} bars, got {len}")]
    SeriesTooShort {
        indicator: &'static str,
        len: usize,
        needed: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Column = Vec<Option<f64>>;

/// Sentinel that replaces an infinite ratio when a denominator vanishes.
pub const DEFAULT_RATIO_CAP: f64 = 1e6;

/// Sign convention for the volume ratio's flat-day term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VrConvention {
    /// `(TVU − TVF/2) / (TVD − TVF/2)`.
    #[default]
    Printed,
    /// `(TVU + TVF/2) / (TVD + TVF/2)`.
    Standard,
}

fn need(indicator: &'static str, bars: &[Bar], needed: usize) -> Result<(), IndicatorError> {
    if bars.len() < needed {
        return Err(IndicatorError::SeriesTooShort {
            indicator,
            len: bars.len(),
            needed,
        });
    }
    Ok(())
}

fn check_n(n: usize) -> Result<(), IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::InvalidParam("lookback n must be ≥ 1".into()));
    }
    Ok(())
}

fn rolling_high_low(bars: &[Bar], i: usize, n: usize) -> (f64, f64) {
    bars[i + 1 - n..=i]
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(h, l), b| {
            (h.max(b.high), l.min(b.low))
        })
}

/// Position of the close inside the rolling range, 0.5 on a flat range.
fn range_fraction(numerator: f64, high: f64, low: f64) -> f64 {
    if high == low {
        0.5
    } else {
        numerator / (high - low)
    }
}

/// Smoothed stochastic K and D, seeded with `k0`/`d0` at bar `n-1`.
pub fn stochastic_kd(
    series: &PriceSeries,
    n: usize,
    k0: f64,
    d0: f64,
) -> Result<(Column, Column), IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("stochastic", bars, n)?;
    let mut k_col = vec![None; bars.len()];
    let mut d_col = vec![None; bars.len()];
    let (mut k, mut d) = (k0, d0);
    for i in n - 1..bars.len() {
        let (hi, lo) = rolling_high_low(bars, i, n);
        let rsv = 100.0 * range_fraction(bars[i].close - lo, hi, lo);
        k = 2.0 / 3.0 * k + rsv / 3.0;
        d = 2.0 / 3.0 * d + k / 3.0;
        k_col[i] = Some(k);
        d_col[i] = Some(d);
    }
    Ok((k_col, d_col))
}

/// `(HP_n − CP) / (HP_n − LP_n)` on `[0, 1]`.
pub fn williams_r(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("williams_r", bars, n)?;
    Ok((0..bars.len())
        .map(|i| {
            (i + 1 >= n).then(|| {
                let (hi, lo) = rolling_high_low(bars, i, n);
                range_fraction(hi - bars[i].close, hi, lo)
            })
        })
        .collect())
}

pub const CCI_CONSTANT: f64 = 0.015;

pub fn cci(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("cci", bars, n)?;
    let tp: Vec<f64> = bars.iter().map(Bar::typical).collect();
    Ok((0..bars.len())
        .map(|i| {
            (i + 1 >= n).then(|| {
                let window = &tp[i + 1 - n..=i];
                let sma = window.iter().sum::<f64>() / n as f64;
                let md = window.iter().map(|t| (t - sma).abs()).sum::<f64>() / n as f64;
                if md == 0.0 {
                    0.0
                } else {
                    (tp[i] - sma) / (CCI_CONSTANT * md)
                }
            })
        })
        .collect())
}

/// Simple-average RSI over the last `n` close-to-close changes.
pub fn rsi(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("rsi", bars, n + 1)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= n).then(|| {
                let (mut gain, mut loss) = (0.0, 0.0);
                for j in i + 1 - n..=i {
                    let delta = bars[j].close - bars[j - 1].close;
                    if delta > 0.0 {
                        gain += delta;
                    } else {
                        loss -= delta;
                    }
                }
                match (gain == 0.0, loss == 0.0) {
                    (true, true) => 50.0,
                    (_, true) => 100.0,
                    (true, _) => 0.0,
                    _ => 100.0 - 100.0 / (1.0 + gain / loss),
                }
            })
        })
        .collect())
}

/// Demand index, both EMAs, their difference and the smoothed MACD line.
#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    pub di: Vec<f64>,
    pub ema12: Vec<f64>,
    pub ema26: Vec<f64>,
    pub dif: Vec<f64>,
    pub macd: Vec<f64>,
}

/// EMAs start at `DI_0` and MACD at 0, so every bar is defined.
pub fn macd(series: &PriceSeries) -> Macd {
    let bars = series.bars();
    let di: Vec<f64> = bars
        .iter()
        .map(|b| (b.high + b.low + 2.0 * b.close) / 4.0)
        .collect();
    let mut out = Macd {
        ema12: Vec::with_capacity(di.len()),
        ema26: Vec::with_capacity(di.len()),
        dif: Vec::with_capacity(di.len()),
        macd: Vec::with_capacity(di.len()),
        di,
    };
    let (mut e12, mut e26, mut m) = (out.di[0], out.di[0], 0.0);
    for (i, &d) in out.di.iter().enumerate() {
        if i > 0 {
            e12 = 11.0 / 13.0 * e12 + 2.0 / 13.0 * d;
            e26 = 25.0 / 27.0 * e26 + 2.0 / 27.0 * d;
        }
        let dif = e12 - e26;
        if i > 0 {
            m = 0.8 * m + 0.2 * dif;
        }
        out.ema12.push(e12);
        out.ema26.push(e26);
        out.dif.push(dif);
        out.macd.push(m);
    }
    out
}

/// Mean close over the last `n` bars.
pub fn moving_average(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("moving_average", bars, n)?;
    Ok((0..bars.len())
        .map(|i| {
            (i + 1 >= n).then(|| bars[i + 1 - n..=i].iter().map(|b| b.close).sum::<f64>() / n as f64)
        })
        .collect())
}

fn pct_change(series: &PriceSeries, n: usize, name: &'static str) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need(name, bars, n + 1)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= n).then(|| {
                let base = bars[i - n].close;
                100.0 * (bars[i].close - base) / base
            })
        })
        .collect())
}

/// `100·(CP_i − CP_{i−n}) / CP_{i−n}`.
pub fn momentum(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    pct_change(series, n, "momentum")
}

/// Same formula as [`momentum`].
pub fn roc(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    pct_change(series, n, "roc")
}

/// Percentage of up-closes among the last `n` changes.
pub fn psy(series: &PriceSeries, n: usize) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("psy", bars, n + 1)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= n).then(|| {
                let up = (i + 1 - n..=i)
                    .filter(|&j| bars[j].close > bars[j - 1].close)
                    .count();
                100.0 * up as f64 / n as f64
            })
        })
        .collect())
}

fn capped_ratio(num: f64, den: f64, cap: f64) -> f64 {
    if den == 0.0 {
        cap
    } else {
        num / den
    }
}

/// `Σ(HP − OP) / Σ(OP − LP)` over the last `n` bars.
pub fn ar_ratio(series: &PriceSeries, n: usize, cap: f64) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("ar", bars, n)?;
    Ok((0..bars.len())
        .map(|i| {
            (i + 1 >= n).then(|| {
                let w = &bars[i + 1 - n..=i];
                let num: f64 = w.iter().map(|b| b.high - b.open).sum();
                let den: f64 = w.iter().map(|b| b.open - b.low).sum();
                capped_ratio(num, den, cap)
            })
        })
        .collect())
}

/// `Σ(HP − CP_{j−1}) / Σ(CP_{j−1} − LP)` over the last `n` bars.
pub fn br_ratio(series: &PriceSeries, n: usize, cap: f64) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("br", bars, n + 1)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= n).then(|| {
                let (mut num, mut den) = (0.0, 0.0);
                for j in i + 1 - n..=i {
                    let prev = bars[j - 1].close;
                    num += bars[j].high - prev;
                    den += prev - bars[j].low;
                }
                capped_ratio(num, den, cap)
            })
        })
        .collect())
}

/// Volume ratio over the last `n` changes; a non-positive denominator yields `cap`.
pub fn volume_ratio(
    series: &PriceSeries,
    n: usize,
    cap: f64,
    convention: VrConvention,
) -> Result<Column, IndicatorError> {
    check_n(n)?;
    let bars = series.bars();
    need("volume_ratio", bars, n + 1)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= n).then(|| {
                let (mut up, mut down, mut flat) = (0.0, 0.0, 0.0);
                for j in i + 1 - n..=i {
                    let v = bars[j].volume as f64;
                    let (c, p) = (bars[j].close, bars[j - 1].close);
                    if c > p {
                        up += v;
                    } else if c < p {
                        down += v;
                    } else {
                        flat += v;
                    }
                }
                let (num, den) = match convention {
                    VrConvention::Printed => (up - flat / 2.0, down - flat / 2.0),
                    VrConvention::Standard => (up + flat / 2.0, down + flat / 2.0),
                };
                if den <= 0.0 {
                    cap
                } else {
                    100.0 * num / den
                }
            })
        })
        .collect())
}

/// `(HP_i − CP_{i−1}) / (HP_i − LP_i)`, 0.5 on a flat bar.
pub fn ad_oscillator(series: &PriceSeries) -> Result<Column, IndicatorError> {
    let bars = series.bars();
    need("ad_oscillator", bars, 2)?;
    Ok((0..bars.len())
        .map(|i| {
            (i >= 1).then(|| range_fraction(bars[i].high - bars[i - 1].close, bars[i].high, bars[i].low))
        })
        .collect())
}

/// `(CP − MA5) / MA5`.
pub fn bias5(series: &PriceSeries) -> Result<Column, IndicatorError> {
    let ma = moving_average(series, 5)?;
    Ok(series
        .bars()
        .iter()
        .zip(ma)
        .map(|(b, m)| m.map(|m| (b.close - m) / m))
        .collect())
}

/// Lookbacks and constants for [`build_feature_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorParams {
    pub kd_n: usize,
    pub k0: f64,
    pub d0: f64,
    pub williams_n: usize,
    pub cci_n: usize,
    pub rsi_n: usize,
    pub ma_n: usize,
    pub mtm_n: usize,
    pub roc_n: usize,
    pub psy_n: usize,
    pub ar_n: usize,
    pub br_n: usize,
    pub vr_n: usize,
    pub ratio_cap: f64,
    pub vr_convention: VrConvention,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            kd_n: 9,
            k0: 50.0,
            d0: 50.0,
            williams_n: 14,
            cci_n: 14,
            rsi_n: 14,
            ma_n: 10,
            mtm_n: 10,
            roc_n: 10,
            psy_n: 12,
            ar_n: 26,
            br_n: 26,
            vr_n: 26,
            ratio_cap: DEFAULT_RATIO_CAP,
            vr_convention: VrConvention::Printed,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let ns = [
            self.kd_n,
            self.williams_n,
            self.cci_n,
            self.rsi_n,
            self.ma_n,
            self.mtm_n,
            self.roc_n,
            self.psy_n,
            self.ar_n,
            self.br_n,
            self.vr_n,
        ];
        if ns.contains(&0) {
            return Err(IndicatorError::InvalidParam("every lookback must be ≥ 1".into()));
        }
        if !(self.ratio_cap > 0.0 && self.ratio_cap.is_finite()) {
            return Err(IndicatorError::InvalidParam("ratio cap must be positive".into()));
        }
        Ok(())
    }

    /// Minimum series length for every column to have at least one value.
    pub fn min_len(&self) -> usize {
        self.warmup() + 1
    }

    /// First bar index at which every column is defined.
    pub fn warmup(&self) -> usize {
        [
            self.kd_n - 1,
            self.williams_n - 1,
            self.cci_n - 1,
            self.rsi_n,
            self.ma_n - 1,
            self.mtm_n,
            self.roc_n,
            self.psy_n,
            self.ar_n - 1,
            self.br_n,
            self.vr_n,
            1,
            4,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

pub const FEATURE_NAMES: [&str; 16] = [
    "K", "D", "WMS%R", "CCI", "RSI", "MACD", "DIF", "MA10", "MTM", "ROC", "PSY", "AR", "BR", "VR",
    "AD", "BIAS5",
];

/// Per-bar indicator values from `valid_from` to the end of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub valid_from: usize,
    /// `rows[k]` holds bar `valid_from + k`.
    pub rows: Vec<Vec<f64>>,
    /// Dates matching `rows`, ISO formatted.
    pub dates: Vec<String>,
    /// Number of cap substitutions per column.
    pub capped: Vec<usize>,
}

impl FeatureMatrix {
    pub fn row(&self, bar_index: usize) -> Option<&[f64]> {
        bar_index
            .checked_sub(self.valid_from)
            .and_then(|k| self.rows.get(k))
            .map(Vec::as_slice)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Pairs the features at bar `i` with the label of bar `i + horizon`.
    pub fn align_with_labels(&self, labels: &crate::market::LabelSeries) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            let bar = self.valid_from + k;
            if let Some(y) = labels.at_bar(bar + labels.horizon) {
                xs.push(row.clone());
                ys.push(y);
            }
        }
        (xs, ys)
    }
}

pub fn build_feature_matrix(
    series: &PriceSeries,
    params: &IndicatorParams,
) -> Result<FeatureMatrix, IndicatorError> {
    params.validate()?;
    let valid_from = params.warmup();
    need("feature matrix", series.bars(), params.min_len())?;

    let (k, d) = stochastic_kd(series, params.kd_n, params.k0, params.d0)?;
    let m = macd(series);
    let cap = params.ratio_cap;
    let columns: Vec<Column> = vec![
        k,
        d,
        williams_r(series, params.williams_n)?,
        cci(series, params.cci_n)?,
        rsi(series, params.rsi_n)?,
        m.macd.into_iter().map(Some).collect(),
        m.dif.into_iter().map(Some).collect(),
        moving_average(series, params.ma_n)?,
        momentum(series, params.mtm_n)?,
        roc(series, params.roc_n)?,
        psy(series, params.psy_n)?,
        ar_ratio(series, params.ar_n, cap)?,
        br_ratio(series, params.br_n, cap)?,
        volume_ratio(series, params.vr_n, cap, params.vr_convention)?,
        ad_oscillator(series)?,
        bias5(series)?,
    ];
    let capped_cols = [11, 12, 13];
    let capped = columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            if capped_cols.contains(&j) {
                col.iter().filter(|v| **v == Some(cap)).count()
            } else {
                0
            }
        })
        .collect();
    let rows = (valid_from..series.len())
        .map(|i| {
            columns
                .iter()
                .map(|c| c[i].expect("warmup covers every column"))
                .collect()
        })
        .collect();
    let dates = series.bars()[valid_from..]
        .iter()
        .map(|b| b.date.format("%Y-%m-%d").to_string())
        .collect();
    Ok(FeatureMatrix {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        valid_from,
        rows,
        dates,
        capped,
    })
}
