#![allow(dead_code)]

pub mod oracles;

use chrono::{Days, NaiveDate};
use qgf_core::market::{Bar, PriceSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Geometric random walk with valid OHLC bars. Closes are rounded to cents so
/// flat days occur.
pub fn random_series(len: usize, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
    let mut prev = 50.0 + rng.random::<f64>() * 50.0;
    let bars = (0..len)
        .map(|i| {
            let open = round2(prev * (1.0 + 0.01 * (rng.random::<f64>() - 0.5)));
            let close = if rng.random::<f64>() < 0.1 {
                prev
            } else {
                round2(prev * (1.0 + 0.04 * (rng.random::<f64>() - 0.5)))
            };
            let high = open.max(close) + round2(rng.random::<f64>() * 2.0);
            let low = (open.min(close) - round2(rng.random::<f64>() * 2.0)).max(0.01);
            prev = close;
            Bar {
                date: start + Days::new(i as u64),
                open,
                high,
                low,
                close,
                adj_close: round2(close * 0.98),
                volume: rng.random_range(1_000..1_000_000),
            }
        })
        .collect();
    PriceSeries::new("RND", bars).unwrap()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn scaled(series: &PriceSeries, lambda: f64) -> PriceSeries {
    let bars = series
        .bars()
        .iter()
        .map(|b| Bar {
            open: b.open * lambda,
            high: b.high * lambda,
            low: b.low * lambda,
            close: b.close * lambda,
            adj_close: b.adj_close * lambda,
            ..*b
        })
        .collect();
    PriceSeries::new(series.symbol.clone(), bars).unwrap()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    let scale = 1.0_f64.max(a.abs()).max(b.abs());
    assert!((a - b).abs() <= tol * scale, "{what}: {a} vs {b}");
}
