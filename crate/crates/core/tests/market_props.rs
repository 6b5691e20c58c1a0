mod common;

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use chrono::{Days, NaiveDate};
use common::{random_series, scaled};
use proptest::prelude::*;
use qgf_core::indicators::{build_feature_matrix, IndicatorParams};
use qgf_core::market::{
    fetch_csv, label_trend, parse_csv, serialize_csv, sliding_windows, Bar, FetchError,
    PriceSeries, WindowSpec,
};

fn from_closes(closes: &[f64]) -> PriceSeries {
    let start = NaiveDate::from_ymd_opt(2019, 3, 1).unwrap();
    let bars = closes
        .iter()
        .enumerate()
        .map(|(i, &c)| Bar {
            date: start + Days::new(i as u64),
            open: c,
            high: c,
            low: c,
            close: c,
            adj_close: c,
            volume: 10,
        })
        .collect();
    PriceSeries::new("C", bars).unwrap()
}

proptest! {
    #[test]
    fn csv_round_trip(len in 1usize..80, seed in any::<u64>(), lambda in 0.01f64..1000.0) {
        let s = scaled(&random_series(len, seed), lambda);
        let text = serialize_csv(&s);
        let back = parse_csv(text.as_bytes(), &s.symbol).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn window_count_formula(len in 2usize..300, window_len in 2usize..40, stride in 1usize..10) {
        let spec = WindowSpec::new(window_len, stride).unwrap();
        match sliding_windows(len, spec) {
            Ok(w) => {
                prop_assert!(len >= window_len);
                prop_assert_eq!(w.len(), (len - window_len) / stride + 1);
                let all: Vec<_> = (0..=len - window_len).map(|i| i..i + window_len).collect();
                let strided: Vec<_> = all.into_iter().step_by(stride).collect();
                prop_assert_eq!(w, strided);
            }
            Err(_) => prop_assert!(len < window_len),
        }
    }

    #[test]
    fn label_length_and_reversal(closes in prop::collection::vec(1u32..20, 11..60), n in 1usize..=10) {
        let closes: Vec<f64> = closes.into_iter().map(f64::from).collect();
        let labels = label_trend(&from_closes(&closes), n).unwrap();
        prop_assert_eq!(labels.labels.len(), closes.len() - n);
        let inverted: Vec<f64> = closes.iter().map(|c| 1.0 / c).collect();
        let flipped = label_trend(&from_closes(&inverted), n).unwrap();
        for (k, (&a, &b)) in labels.labels.iter().zip(&flipped.labels).enumerate() {
            prop_assert!(a <= 1);
            if closes[k + n] == closes[k] {
                prop_assert_eq!((a, b), (0, 0));
            } else {
                prop_assert_eq!(a, 1 - b);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn features_finite_after_warmup(len in 27usize..90, seed in any::<u64>()) {
        let s = random_series(len, seed);
        let fm = build_feature_matrix(&s, &IndicatorParams::default()).unwrap();
        prop_assert_eq!(fm.rows.len(), len - fm.valid_from);
        prop_assert!(fm.rows.iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn unordered_file_matches_sorted_file() {
    let s = random_series(12, 3);
    let text = serialize_csv(&s);
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    lines.swap(2, 7);
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    assert_eq!(parse_csv(shuffled.as_bytes(), "RND").unwrap(), s);
}

/// One-shot HTTP server answering every request with `status` and `body`.
fn serve(status: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        if let Ok((mut stream, _)) = listener.accept() {
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let reply = format!(
                "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    format!("http://{addr}/{{symbol}}.csv")
}

#[test]
fn fetch_returns_body_on_200() {
    let body = "Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-02,1,2,1,2,2,5\n";
    let url = serve("200 OK", body);
    assert_eq!(fetch_csv(&url, "AAPL").unwrap(), body);
}

#[test]
fn fetch_reports_http_status() {
    let url = serve("404 Not Found", "nope");
    assert_eq!(fetch_csv(&url, "AAPL"), Err(FetchError::HttpStatus(404)));
}

#[test]
fn fetch_unreachable_host_is_network_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let url = format!("http://{addr}/{{symbol}}.csv");
    assert!(matches!(fetch_csv(&url, "AAPL"), Err(FetchError::Network(_))));
}

#[test]
fn fetch_file_template_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = serialize_csv(&random_series(5, 1));
    std::fs::write(dir.path().join("AAPL.csv"), &text).unwrap();
    let template = format!("file://{}/{{symbol}}.csv", dir.path().display());
    assert_eq!(fetch_csv(&template, "AAPL").unwrap(), text);
    assert!(matches!(
        fetch_csv("http://example.invalid/x.csv", "AAPL"),
        Err(FetchError::MissingPlaceholder(_))
    ));
    assert!(matches!(
        fetch_csv(&template, "../etc/passwd"),
        Err(FetchError::InvalidSymbol(_))
    ));
}
