//! Direct-loop oracles for every indicator, built from running sums and
//! explicit recursions.

use qgf_core::market::PriceSeries;

use super::assert_close;

pub const ORACLE_TOL: f64 = 1e-9;

pub fn check(name: &str, got: &[Option<f64>], want: &[Option<f64>]) {
    assert_eq!(got.len(), want.len(), "{name}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        match (g, w) {
            (Some(g), Some(w)) => assert_close(*g, *w, ORACLE_TOL, &format!("{name}[{i}]")),
            (None, None) => {}
            _ => panic!("{name}[{i}]: definedness differs: {g:?} vs {w:?}"),
        }
    }
}

pub fn hlc(s: &PriceSeries) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let b = s.bars();
    (
        b.iter().map(|x| x.high).collect(),
        b.iter().map(|x| x.low).collect(),
        b.iter().map(|x| x.close).collect(),
    )
}

pub fn window_extrema(h: &[f64], l: &[f64], i: usize, n: usize) -> (f64, f64) {
    let mut hi = f64::MIN;
    let mut lo = f64::MAX;
    for back in 0..n {
        hi = hi.max(h[i - back]);
        lo = lo.min(l[i - back]);
    }
    (hi, lo)
}

pub fn oracle_kd(s: &PriceSeries, n: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let (h, l, c) = hlc(s);
    let mut k = 50.0;
    let mut d = 50.0;
    let mut ks = Vec::new();
    let mut ds = Vec::new();
    for i in 0..c.len() {
        if i + 1 < n {
            ks.push(None);
            ds.push(None);
            continue;
        }
        let (hi, lo) = window_extrema(&h, &l, i, n);
        let frac = if hi > lo { 100.0 * (c[i] - lo) / (hi - lo) } else { 50.0 };
        k = (2.0 * k + frac) / 3.0;
        d = (2.0 * d + k) / 3.0;
        ks.push(Some(k));
        ds.push(Some(d));
    }
    (ks, ds)
}

pub fn oracle_williams(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (h, l, c) = hlc(s);
    (0..c.len())
        .map(|i| {
            if i + 1 < n {
                return None;
            }
            let (hi, lo) = window_extrema(&h, &l, i, n);
            Some(if hi > lo { (hi - c[i]) / (hi - lo) } else { 0.5 })
        })
        .collect()
}

pub fn oracle_cci(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (h, l, c) = hlc(s);
    let tp: Vec<f64> = (0..c.len()).map(|i| (h[i] + l[i] + c[i]) / 3.0).collect();
    (0..c.len())
        .map(|i| {
            if i + 1 < n {
                return None;
            }
            let w = &tp[i + 1 - n..=i];
            let sma = w.iter().sum::<f64>() / n as f64;
            let md = w.iter().map(|v| (v - sma).abs()).sum::<f64>() / n as f64;
            Some(if md == 0.0 { 0.0 } else { (tp[i] - sma) / (0.015 * md) })
        })
        .collect()
}

pub fn oracle_rsi(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (_, _, c) = hlc(s);
    let mut gains = 0.0;
    let mut losses = 0.0;
    let mut out = vec![None];
    for i in 1..c.len() {
        let delta = c[i] - c[i - 1];
        gains += delta.max(0.0);
        losses += (-delta).max(0.0);
        if i > n {
            let old = c[i - n] - c[i - n - 1];
            gains -= old.max(0.0);
            losses -= (-old).max(0.0);
        }
        if i < n {
            out.push(None);
            continue;
        }
        // running sums drift by a few ulps; snap them so the zero rules apply
        let g = if gains.abs() < 1e-9 { 0.0 } else { gains };
        let lo = if losses.abs() < 1e-9 { 0.0 } else { losses };
        out.push(Some(match (g == 0.0, lo == 0.0) {
            (true, true) => 50.0,
            (false, true) => 100.0,
            (true, false) => 0.0,
            _ => 100.0 - 100.0 / (1.0 + g / lo),
        }));
    }
    out
}

pub fn oracle_ma(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (_, _, c) = hlc(s);
    let mut sum = 0.0;
    let mut out = Vec::new();
    for i in 0..c.len() {
        sum += c[i];
        if i >= n {
            sum -= c[i - n];
        }
        out.push((i + 1 >= n).then_some(sum / n as f64));
    }
    out
}

pub fn oracle_pct(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (_, _, c) = hlc(s);
    (0..c.len())
        .map(|i| (i >= n).then(|| 100.0 * (c[i] - c[i - n]) / c[i - n]))
        .collect()
}

pub fn oracle_psy(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let (_, _, c) = hlc(s);
    let up: Vec<u32> = (0..c.len())
        .map(|i| u32::from(i > 0 && c[i] > c[i - 1]))
        .collect();
    let mut count = 0;
    let mut out = Vec::new();
    for i in 0..c.len() {
        count += up[i];
        if i >= n {
            count -= up[i - n];
        }
        out.push((i >= n).then_some(100.0 * f64::from(count) / n as f64));
    }
    out
}

pub fn oracle_ar(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let b = s.bars();
    let (mut num, mut den) = (0.0, 0.0);
    let mut out = Vec::new();
    for i in 0..b.len() {
        num += b[i].high - b[i].open;
        den += b[i].open - b[i].low;
        if i >= n {
            num -= b[i - n].high - b[i - n].open;
            den -= b[i - n].open - b[i - n].low;
        }
        out.push((i + 1 >= n).then(|| if den.abs() < 1e-9 { 1e6 } else { num / den }));
    }
    out
}

pub fn oracle_br(s: &PriceSeries, n: usize) -> Vec<Option<f64>> {
    let b = s.bars();
    let term = |j: usize| (b[j].high - b[j - 1].close, b[j - 1].close - b[j].low);
    let (mut num, mut den) = (0.0, 0.0);
    let mut out = vec![None];
    for i in 1..b.len() {
        let (a, d) = term(i);
        num += a;
        den += d;
        if i > n {
            let (a, d) = term(i - n);
            num -= a;
            den -= d;
        }
        out.push((i >= n).then(|| if den.abs() < 1e-9 { 1e6 } else { num / den }));
    }
    out
}

pub fn oracle_vr(s: &PriceSeries, n: usize, standard: bool) -> Vec<Option<f64>> {
    let b = s.bars();
    let sign = if standard { 1.0 } else { -1.0 };
    (0..b.len())
        .map(|i| {
            if i < n {
                return None;
            }
            let mut tv = [0.0; 3];
            for j in i + 1 - n..=i {
                let k = match b[j].close.partial_cmp(&b[j - 1].close).unwrap() {
                    std::cmp::Ordering::Greater => 0,
                    std::cmp::Ordering::Less => 1,
                    std::cmp::Ordering::Equal => 2,
                };
                tv[k] += b[j].volume as f64;
            }
            let den = tv[1] + sign * tv[2] / 2.0;
            Some(if den <= 0.0 { 1e6 } else { 100.0 * (tv[0] + sign * tv[2] / 2.0) / den })
        })
        .collect()
}

pub fn oracle_ad(s: &PriceSeries) -> Vec<Option<f64>> {
    let (h, l, c) = hlc(s);
    (0..c.len())
        .map(|i| {
            (i >= 1).then(|| if h[i] > l[i] { (h[i] - c[i - 1]) / (h[i] - l[i]) } else { 0.5 })
        })
        .collect()
}

pub fn oracle_bias5(s: &PriceSeries) -> Vec<Option<f64>> {
    let (_, _, c) = hlc(s);
    (0..c.len())
        .map(|i| {
            (i >= 4).then(|| {
                let ma = (c[i - 4] + c[i - 3] + c[i - 2] + c[i - 1] + c[i]) / 5.0;
                (c[i] - ma) / ma
            })
        })
        .collect()
}

pub struct MacdOracle {
    pub dif: Vec<f64>,
    pub macd: Vec<f64>,
    pub ema12: Vec<f64>,
    pub ema26: Vec<f64>,
}

pub fn oracle_macd(s: &PriceSeries) -> MacdOracle {
    let (h, l, c) = hlc(s);
    let mut o = MacdOracle {
        dif: vec![],
        macd: vec![],
        ema12: vec![],
        ema26: vec![],
    };
    for i in 0..c.len() {
        let di = (h[i] + l[i] + 2.0 * c[i]) / 4.0;
        let (e12, e26, m) = if i == 0 {
            (di, di, 0.0)
        } else {
            let e12 = o.ema12[i - 1] * 11.0 / 13.0 + di * 2.0 / 13.0;
            let e26 = o.ema26[i - 1] * 25.0 / 27.0 + di * 2.0 / 27.0;
            (e12, e26, 0.8 * o.macd[i - 1] + 0.2 * (e12 - e26))
        };
        o.ema12.push(e12);
        o.ema26.push(e26);
        o.dif.push(e12 - e26);
        o.macd.push(m);
    }
    o
}
