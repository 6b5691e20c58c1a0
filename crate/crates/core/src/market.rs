//! OHLCV ingestion, validation, sliding windows and trend labels.

use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    RowParse { line: u64, reason: String },
    #[error("line {line}: invariant violated: {reason}")]
    InvariantViolation { line: u64, reason: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates must be strictly increasing ({prev} then {next})")]
    Unordered { prev: NaiveDate, next: NaiveDate },
    #[error("price series is empty")]
    EmptySeries,
    #[error("series of length {len} is shorter than the required {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("label horizon {0} outside [1, 10]")]
    HorizonOutOfRange(usize),
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FetchError {
    #[error("url template `{0}` has no {{symbol}} placeholder")]
    MissingPlaceholder(String),
    #[error("symbol `{0}` cannot be substituted into a url")]
    InvalidSymbol(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {0}")]
    HttpStatus(u16),
}

/// One OHLCV interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
}

impl Bar {
    /// Checks the OHLC ordering and positivity invariants.
    pub fn validate(&self) -> Result<(), String> {
        let prices = [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("adj_close", self.adj_close),
        ];
        for (name, v) in prices {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} = {v} is not a finite positive price"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }

    /// Typical price `(high + low + close) / 3`.
    pub fn typical(&self) -> f64 {
        (self.high + self.low + self.close) / 3.0
    }
}

/// A validated, date-ordered series of bars for one symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub symbol: String,
    bars: Vec<Bar>,
    /// Set when the source had no `Adj Close` column and close was copied in.
    pub adj_close_imputed: bool,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<Bar>) -> Result<Self, MarketError> {
        if bars.is_empty() {
            return Err(MarketError::EmptySeries);
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|reason| MarketError::InvariantViolation {
                line: i as u64 + 1,
                reason,
            })?;
        }
        for pair in bars.windows(2) {
            if pair[0].date == pair[1].date {
                return Err(MarketError::DuplicateDate(pair[0].date));
            }
            if pair[0].date > pair[1].date {
                return Err(MarketError::Unordered {
                    prev: pair[0].date,
                    next: pair[1].date,
                });
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            bars,
            adj_close_imputed: false,
        })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T, MarketError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(MarketError::RowParse {
            line,
            reason: format!("missing {name}"),
        });
    }
    raw.parse().map_err(|_| MarketError::RowParse {
        line,
        reason: format!("{name} `{raw}` is not a valid value"),
    })
}

/// Parse a `Date,Open,High,Low,Close,Adj Close,Volume` CSV stream.
///
/// Rows may appear in any date order; the result is sorted. A header
/// without the `Adj Close` column is accepted and close is copied into
/// `adj_close`, with [`PriceSeries::adj_close_imputed`] set.
pub fn parse_csv<R: Read>(input: R, symbol: &str) -> Result<PriceSeries, MarketError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| MarketError::MalformedHeader(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let without_adj: Vec<&str> = CSV_HEADER.iter().copied().filter(|h| *h != "Adj Close").collect();
    let has_adj = if header == CSV_HEADER {
        true
    } else if header == without_adj {
        false
    } else {
        return Err(MarketError::MalformedHeader(header.join(",")));
    };

    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MarketError::RowParse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(MarketError::RowParse {
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let date_raw = record[0].trim();
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|_| MarketError::RowParse {
            line,
            reason: format!("date `{date_raw}` is not ISO-8601"),
        })?;
        let open = parse_field(&record[1], "Open", line)?;
        let high = parse_field(&record[2], "High", line)?;
        let low = parse_field(&record[3], "Low", line)?;
        let close = parse_field(&record[4], "Close", line)?;
        let (adj_close, volume) = if has_adj {
            (
                parse_field(&record[5], "Adj Close", line)?,
                parse_field(&record[6], "Volume", line)?,
            )
        } else {
            (close, parse_field(&record[5], "Volume", line)?)
        };
        let bar = Bar {
            date,
            open,
            high,
            low,
            close,
            adj_close,
            volume,
        };
        bar.validate()
            .map_err(|reason| MarketError::InvariantViolation { line, reason })?;
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(MarketError::EmptySeries);
    }
    bars.sort_by_key(|b| b.date);
    if let Some(pair) = bars.windows(2).find(|p| p[0].date == p[1].date) {
        return Err(MarketError::DuplicateDate(pair[0].date));
    }
    let mut series = PriceSeries::new(symbol, bars)?;
    series.adj_close_imputed = !has_adj;
    Ok(series)
}

pub fn read_csv_file(path: &Path, symbol: &str) -> Result<PriceSeries, MarketError> {
    let file = std::fs::File::open(path).map_err(|e| MarketError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, symbol)
}

/// Render a series in the same CSV layout `parse_csv` reads.
pub fn serialize_csv(series: &PriceSeries) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for b in series.bars() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.date.format("%Y-%m-%d"),
            b.open,
            b.high,
            b.low,
            b.close,
            b.adj_close,
            b.volume
        ));
    }
    out
}

/// Substitute `symbol` into `url_template` and fetch the body.
///
/// `file://` urls are read from disk (relative paths allowed); anything else
/// goes through HTTP and must answer 200.
pub fn fetch_csv(url_template: &str, symbol: &str) -> Result<String, FetchError> {
    if !url_template.contains("{symbol}") {
        return Err(FetchError::MissingPlaceholder(url_template.to_string()));
    }
    if symbol.is_empty()
        || !symbol
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | '^' | '='))
    {
        return Err(FetchError::InvalidSymbol(symbol.to_string()));
    }
    let url = url_template.replace("{symbol}", symbol);
    if let Some(path) = url.strip_prefix("file://") {
        return std::fs::read_to_string(path).map_err(|e| FetchError::Network(format!("{path}: {e}")));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent
        .get(&url)
        .call()
        .map_err(|e| FetchError::Network(e.to_string()))?;
    let status = response.status().as_u16();
    if status != 200 {
        return Err(FetchError::HttpStatus(status));
    }
    response
        .body_mut()
        .read_to_string()
        .map_err(|e| FetchError::Network(e.to_string()))
}

/// Sliding-window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_len: 14,
            stride: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize) -> Result<Self, MarketError> {
        if window_len < 2 {
            return Err(MarketError::InvalidWindow(format!("window_len {window_len} < 2")));
        }
        if stride == 0 {
            return Err(MarketError::InvalidWindow("stride must be positive".into()));
        }
        Ok(Self { window_len, stride })
    }
}

/// Index ranges `[i, i + window_len)` for `i = 0, stride, 2·stride, …`.
pub fn sliding_windows(len: usize, spec: WindowSpec) -> Result<Vec<Range<usize>>, MarketError> {
    let spec = WindowSpec::new(spec.window_len, spec.stride)?;
    if len < spec.window_len {
        return Err(MarketError::SeriesTooShort {
            len,
            needed: spec.window_len,
        });
    }
    Ok((0..=len - spec.window_len)
        .step_by(spec.stride)
        .map(|i| i..i + spec.window_len)
        .collect())
}

/// Binary trend labels; `labels[k]` belongs to bar `k + horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSeries {
    pub horizon: usize,
    pub labels: Vec<u8>,
}

impl LabelSeries {
    /// Label of bar `bar_index`, if it has one.
    pub fn at_bar(&self, bar_index: usize) -> Option<u8> {
        bar_index
            .checked_sub(self.horizon)
            .and_then(|k| self.labels.get(k).copied())
    }
}

/// `1` when the close rose against `n` bars earlier, else `0` (ties are `0`).
pub fn label_trend(series: &PriceSeries, n: usize) -> Result<LabelSeries, MarketError> {
    if !(1..=10).contains(&n) {
        return Err(MarketError::HorizonOutOfRange(n));
    }
    if series.len() <= n {
        return Err(MarketError::SeriesTooShort {
            len: series.len(),
            needed: n + 1,
        });
    }
    let closes = series.closes();
    let labels = closes
        .windows(n + 1)
        .map(|w| u8::from(w[n] > w[0]))
        .collect();
    Ok(LabelSeries { horizon: n, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume\n";

    fn rows(body: &str) -> String {
        format!("{HEADER}{body}")
    }

    pub(crate) fn series_from_closes(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                date: start + chrono::Days::new(i as u64),
                open: c,
                high: c,
                low: c,
                close: c,
                adj_close: c,
                volume: 100,
            })
            .collect();
        PriceSeries::new("T", bars).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let text = rows(
            "2020-01-02,10,11,9,10.5,10.5,100\n\
             2020-01-03,10.5,12,10,11,11,200\n\
             2020-01-06,11,11.5,10.2,10.8,10.7,150\n",
        );
        let s = parse_csv(text.as_bytes(), "X").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.symbol, "X");
        assert!(s.dates().windows(2).all(|w| w[0] < w[1]));
        assert!(!s.adj_close_imputed);
    }

    #[test]
    fn high_below_low_is_invariant_violation() {
        let text = rows("2020-01-02,10,9,11,10,10,100\n");
        assert!(matches!(
            parse_csv(text.as_bytes(), "X"),
            Err(MarketError::InvariantViolation { line: 2, .. })
        ));
    }

    #[test]
    fn unsorted_rows_equal_sorted_rows() {
        let a = "2020-01-02,10,11,9,10.5,10.5,100\n";
        let b = "2020-01-03,10.5,12,10,11,11,200\n";
        let c = "2020-01-06,11,11.5,10.2,10.8,10.7,150\n";
        let shuffled = parse_csv(rows(&format!("{c}{a}{b}")).as_bytes(), "X").unwrap();
        let sorted = parse_csv(rows(&format!("{a}{b}{c}")).as_bytes(), "X").unwrap();
        assert_eq!(shuffled, sorted);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            parse_csv("Date,Open,Close\n".as_bytes(), "X"),
            Err(MarketError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_csv(rows("2020-01-02,10,,9,10.5,10.5,100\n").as_bytes(), "X"),
            Err(MarketError::RowParse { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv(rows("2020-01-02,10,11,9,abc,10.5,100\n").as_bytes(), "X"),
            Err(MarketError::RowParse { .. })
        ));
        assert!(matches!(
            parse_csv(rows("02/01/2020,10,11,9,10,10,100\n").as_bytes(), "X"),
            Err(MarketError::RowParse { .. })
        ));
        assert!(matches!(
            parse_csv(rows("2020-01-02,10,11,9,10,10,-5\n").as_bytes(), "X"),
            Err(MarketError::RowParse { .. })
        ));
        let dup = rows("2020-01-02,10,11,9,10,10,1\n2020-01-02,10,11,9,10,10,1\n");
        assert!(matches!(
            parse_csv(dup.as_bytes(), "X"),
            Err(MarketError::DuplicateDate(_))
        ));
        assert_eq!(parse_csv(HEADER.as_bytes(), "X"), Err(MarketError::EmptySeries));
    }

    #[test]
    fn missing_adj_close_column_copies_close() {
        let text = "Date,Open,High,Low,Close,Volume\n2020-01-02,10,11,9,10.5,100\n";
        let s = parse_csv(text.as_bytes(), "X").unwrap();
        assert!(s.adj_close_imputed);
        assert_eq!(s.bars()[0].adj_close, 10.5);
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        assert_eq!(sliding_windows(14, spec).unwrap(), vec![0..14]);
        let w = sliding_windows(30, spec).unwrap();
        // every contiguous length-14 range of 0..30
        let brute: Vec<_> = (0..30)
            .filter(|&s| s + 14 <= 30)
            .map(|s| s..s + 14)
            .collect();
        assert_eq!(w, brute);
        assert_eq!(w.len(), 17);
        assert_eq!(
            sliding_windows(10, spec),
            Err(MarketError::SeriesTooShort { len: 10, needed: 14 })
        );
        assert!(WindowSpec::new(1, 1).is_err());
        assert!(WindowSpec::new(3, 0).is_err());
    }

    #[test]
    fn windows_drop_oldest_and_append_next() {
        let w = sliding_windows(20, WindowSpec::new(5, 1).unwrap()).unwrap();
        for pair in w.windows(2) {
            assert_eq!(pair[1].start, pair[0].start + 1);
            assert_eq!(pair[1].end, pair[0].end + 1);
        }
    }

    #[test]
    fn trend_labels() {
        let l = label_trend(&series_from_closes(&[10.0, 11.0]), 1).unwrap();
        assert_eq!(l.labels, vec![1]);
        let l = label_trend(&series_from_closes(&[10.0, 10.0]), 1).unwrap();
        assert_eq!(l.labels, vec![0]);
        let closes = [5.0, 4.0, 6.0, 6.0, 7.0];
        let l = label_trend(&series_from_closes(&closes), 2).unwrap();
        let oracle: Vec<u8> = (2..closes.len())
            .map(|i| if closes[i] > closes[i - 2] { 1 } else { 0 })
            .collect();
        assert_eq!(l.labels, oracle);
        assert_eq!(l.labels, vec![1, 1, 1]);
        assert_eq!(l.at_bar(2), Some(1));
        assert_eq!(l.at_bar(1), None);
    }

    #[test]
    fn label_errors() {
        let s = series_from_closes(&[1.0, 2.0, 3.0]);
        assert_eq!(label_trend(&s, 0), Err(MarketError::HorizonOutOfRange(0)));
        assert_eq!(label_trend(&s, 11), Err(MarketError::HorizonOutOfRange(11)));
        assert!(matches!(label_trend(&s, 3), Err(MarketError::SeriesTooShort { .. })));
    }

    #[test]
    fn fetch_requires_placeholder() {
        assert!(matches!(
            fetch_csv("http://example.invalid/x.csv", "A"),
            Err(FetchError::MissingPlaceholder(_))
        ));
        assert!(matches!(
            fetch_csv("http://example.invalid/{symbol}.csv", "a/b"),
            Err(FetchError::InvalidSymbol(_))
        ));
    }
}
