//! Subcommand implementations. Each computes its outputs in full before
//! writing any file, and writes the run manifest last.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qgf_core::features::{pca_transform, randomized_pca_fit, rfe, ProbeConfig};
use qgf_core::indicators::{build_feature_matrix, IndicatorParams, VrConvention};
use qgf_core::market::{
    fetch_csv, label_trend, parse_csv, read_csv_file, serialize_csv, sliding_windows, PriceSeries,
    WindowSpec,
};
use qgf_core::metrics::{compare_sequences, Pairing};
use qgf_models::baselines::{train_baseline, AeConfig, BaselineModel, CellKind};
use qgf_models::checkpoint::{load_checkpoint, save_checkpoint, ModelKind};
use qgf_models::gan::{
    standardize_sequences, train_gan, DiscriminatorConfig, GLoss, GanModel, GeneratorConfig,
    TrainConfig,
};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::gradsuite::{run_suite, SuiteConfig};
use crate::io::{
    digest_path, format_sequences, is_price_csv, parse_sequences, read_text, sha256_bytes,
    write_atomic, write_json, DatedTable, FileDigest,
};
use crate::manifest::RunManifest;
use crate::plot::{plot_series, Series};
use crate::{
    Cli, Command, EvaluateArgs, GLossArg, GenerateArgs, GradcheckArgs, IndicatorsArgs,
    IngestArgs, LabelArgs, ModelArg, PairingArg, PlotArgs, ReduceArgs, SelectArgs, TrainArgs,
    VrArg,
};

pub const GAN_DEFAULT_HIDDEN: usize = 90;

struct Ctx<'a> {
    cli: &'a Cli,
    argv: Vec<String>,
    start: Instant,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.cli.seed
    }

    /// Writes `<out>.run.json` and prints the summary unless quiet.
    fn finish(&self, out: &Path, inputs: Vec<FileDigest>, outputs: &[&Path], summary: Value) -> Result<()> {
        let manifest = RunManifest {
            tool: "qgf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.cli.command.name().into(),
            argv: self.argv.clone(),
            flags: serde_json::to_value(self.cli).map_err(|e| CliError::Data(e.to_string()))?,
            seed: self.seed(),
            inputs,
            outputs: outputs.iter().map(|p| digest_path(p)).collect::<Result<_>>()?,
            summary: summary.clone(),
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        manifest.write(out)?;
        if !self.cli.quiet {
            println!("{}", json!({ "command": self.cli.command.name(), "out": out, "summary": summary }));
        }
        Ok(())
    }
}

pub fn execute(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let ctx = Ctx {
        cli,
        argv,
        start: Instant::now(),
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Indicators(a) => indicators(&ctx, a),
        Command::Label(a) => label(&ctx, a),
        Command::Select(a) => select(&ctx, a),
        Command::Reduce(a) => reduce(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Gradcheck(a) => gradcheck(&ctx, a),
        Command::Plot(a) => plot(&ctx, a),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into())
}

fn load_prices(path: &Path) -> Result<(PriceSeries, FileDigest)> {
    Ok((read_csv_file(path, &stem(path))?, digest_path(path)?))
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let (series, input) = match (&a.input, &a.fetch_url) {
        (Some(path), None) => {
            let symbol = a.symbol.clone().unwrap_or_else(|| stem(path));
            (read_csv_file(path, &symbol)?, digest_path(path)?)
        }
        (None, Some(template)) => {
            let symbol = a
                .symbol
                .as_deref()
                .ok_or_else(|| CliError::Usage("--fetch-url requires --symbol".into()))?;
            let body = fetch_csv(template, symbol)?;
            let series = parse_csv(body.as_bytes(), symbol)?;
            let digest = FileDigest {
                path: template.replace("{symbol}", symbol),
                sha256: sha256_bytes(body.as_bytes()),
            };
            (series, digest)
        }
        _ => return Err(CliError::Usage("give exactly one of --input and --fetch-url".into())),
    };
    write_atomic(&a.out, serialize_csv(&series).as_bytes())?;
    let dates = series.dates();
    let summary = json!({
        "symbol": series.symbol,
        "bars": series.len(),
        "first_date": dates.first().map(ToString::to_string),
        "last_date": dates.last().map(ToString::to_string),
        "adj_close_imputed": series.adj_close_imputed,
    });
    ctx.finish(&a.out, vec![input], &[&a.out], summary)
}

fn indicators(ctx: &Ctx, a: &IndicatorsArgs) -> Result<()> {
    let (series, input) = load_prices(&a.input)?;
    let params = IndicatorParams {
        vr_convention: match a.vr_convention {
            VrArg::Printed => VrConvention::Printed,
            VrArg::Standard => VrConvention::Standard,
        },
        ..IndicatorParams::default()
    };
    let fm = build_feature_matrix(&series, &params)?;
    let mut table = DatedTable {
        columns: fm.feature_names.clone(),
        dates: fm.dates.clone(),
        rows: fm.rows.clone(),
    };
    if let Some(n) = a.label_horizon {
        let labels = label_trend(&series, n)?;
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for (k, (date, row)) in table.dates.iter().zip(&table.rows).enumerate() {
            // Rows whose target bar lies past the end of the series are dropped.
            if let Some(y) = labels.at_bar(fm.valid_from + k + n) {
                let mut row = row.clone();
                row.push(f64::from(y));
                dates.push(date.clone());
                rows.push(row);
            }
        }
        if rows.is_empty() {
            return Err(CliError::Data(format!("no feature row has a label {n} bars ahead")));
        }
        table.columns.push(format!("label_n{n}"));
        table.dates = dates;
        table.rows = rows;
    }
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    let capped: serde_json::Map<String, Value> = fm
        .feature_names
        .iter()
        .zip(&fm.capped)
        .filter(|(_, &c)| c > 0)
        .map(|(n, &c)| (n.clone(), json!(c)))
        .collect();
    let summary = json!({
        "rows": table.rows.len(),
        "valid_from": fm.valid_from,
        "columns": table.columns,
        "capped": capped,
    });
    ctx.finish(&a.out, vec![input], &[&a.out], summary)
}

fn label(ctx: &Ctx, a: &LabelArgs) -> Result<()> {
    let (series, input) = load_prices(&a.input)?;
    let labels = label_trend(&series, a.horizon)?;
    let table = DatedTable {
        columns: vec![format!("label_n{}", a.horizon)],
        dates: series.dates()[a.horizon..]
            .iter()
            .map(|d| d.format("%Y-%m-%d").to_string())
            .collect(),
        rows: labels.labels.iter().map(|&y| vec![f64::from(y)]).collect(),
    };
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    let positives = labels.labels.iter().filter(|&&y| y == 1).count();
    let summary = json!({ "horizon": a.horizon, "labels": labels.labels.len(), "positives": positives });
    ctx.finish(&a.out, vec![input], &[&a.out], summary)
}

fn label_horizon(name: &str) -> Option<usize> {
    name.strip_prefix("label_n").and_then(|n| n.parse().ok())
}

fn to_label(v: f64, what: &str) -> Result<u8> {
    match v {
        0.0 => Ok(0),
        1.0 => Ok(1),
        _ => Err(CliError::Data(format!("{what}: label {v} is not 0 or 1"))),
    }
}

/// Feature columns (label columns removed) of a dated table.
fn feature_part(table: &DatedTable) -> (Vec<String>, Vec<Vec<f64>>) {
    let keep: Vec<usize> = (0..table.columns.len())
        .filter(|&j| label_horizon(&table.columns[j]).is_none())
        .collect();
    let names = keep.iter().map(|&j| table.columns[j].clone()).collect();
    let rows = table
        .rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    (names, rows)
}

fn single_label_column(table: &DatedTable, path: &Path) -> Result<(usize, usize)> {
    let found: Vec<(usize, usize)> = table
        .columns
        .iter()
        .enumerate()
        .filter_map(|(j, c)| label_horizon(c).map(|n| (j, n)))
        .collect();
    match found.as_slice() {
        [one] => Ok(*one),
        _ => Err(CliError::Data(format!(
            "{}: expected exactly one label_n{{N}} column, found {}",
            path.display(),
            found.len()
        ))),
    }
}

fn select(ctx: &Ctx, a: &SelectArgs) -> Result<()> {
    let ft = DatedTable::parse(&read_text(&a.features)?, &a.features)?;
    let (names, features) = feature_part(&ft);
    let mut inputs = vec![digest_path(&a.features)?];
    let (rows, labels, horizon) = match &a.labels {
        Some(path) => {
            let lt = DatedTable::parse(&read_text(path)?, path)?;
            let (col, n) = single_label_column(&lt, path)?;
            // Label rows are keyed by the labelled bar and run over consecutive
            // bars, so the target of the bar dated `d` sits `n` rows below `d`.
            let position: HashMap<&str, usize> =
                lt.dates.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for (date, row) in ft.dates.iter().zip(features) {
                if let Some(target) = position.get(date.as_str()).and_then(|&i| lt.rows.get(i + n)) {
                    labels.push(to_label(target[col], "labels")?);
                    rows.push(row);
                }
            }
            inputs.push(digest_path(path)?);
            (rows, labels, n)
        }
        None => {
            let (col, n) = single_label_column(&ft, &a.features)?;
            let labels = ft
                .rows
                .iter()
                .map(|r| to_label(r[col], "features"))
                .collect::<Result<Vec<u8>>>()?;
            (features, labels, n)
        }
    };
    let cfg = ProbeConfig {
        seed: ctx.seed(),
        ..ProbeConfig::default()
    };
    let report = rfe(&rows, &names, &labels, a.keep, &cfg)?;
    let out = json!({
        "features": a.features,
        "labels": a.labels,
        "horizon": horizon,
        "samples": rows.len(),
        "keep": a.keep,
        "probe": cfg,
        "elimination_order": report.elimination_order,
        "survivors": report.survivors,
        "round_accuracy": report.round_accuracy,
    });
    write_json(&a.out, &out)?;
    let summary = json!({ "samples": rows.len(), "survivors": report.survivors });
    ctx.finish(&a.out, inputs, &[&a.out], summary)
}

fn reduce(ctx: &Ctx, a: &ReduceArgs) -> Result<()> {
    let ft = DatedTable::parse(&read_text(&a.features)?, &a.features)?;
    let (names, x) = feature_part(&ft);
    let model = randomized_pca_fit(&x, a.components, a.oversample, ctx.seed())?;
    let z = pca_transform(&model, &x)?;
    let table = DatedTable {
        columns: (1..=model.k()).map(|i| format!("PC{i}")).collect(),
        dates: ft.dates.clone(),
        rows: z,
    };
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    let summary = json!({
        "features": names,
        "components": model.k(),
        "explained_variance_ratio": model.explained_variance_ratio,
    });
    ctx.finish(&a.out, vec![digest_path(&a.features)?], &[&a.out], summary)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .csv files", dir.display())));
    }
    Ok(files)
}

/// Training sequences of length `seq_len`: close-price windows cut from price
/// files, or rows of sequence files.
pub fn load_training_data(
    path: &Path,
    seq_len: usize,
    stride: usize,
) -> Result<(Vec<Vec<f64>>, Vec<FileDigest>)> {
    let files = if path.is_dir() {
        csv_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let spec = WindowSpec::new(seq_len, stride)?;
    let mut data = Vec::new();
    let mut digests = Vec::new();
    for file in files {
        let text = read_text(&file)?;
        if is_price_csv(&text) {
            let closes = parse_csv(text.as_bytes(), &stem(&file))?.closes();
            for range in sliding_windows(closes.len(), spec)? {
                data.push(closes[range].to_vec());
            }
        } else {
            for (i, row) in parse_sequences(&text, &file)?.into_iter().enumerate() {
                if row.len() != seq_len {
                    return Err(CliError::Data(format!(
                        "{} row {}: length {}, expected {seq_len}",
                        file.display(),
                        i + 1,
                        row.len()
                    )));
                }
                data.push(row);
            }
        }
        digests.push(digest_path(&file)?);
    }
    Ok((data, digests))
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".history.csv");
    PathBuf::from(name)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let (data, inputs) = load_training_data(&a.data, a.seq_len, a.stride)?;
    let tcfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        seed: ctx.seed(),
        d_steps: a.d_steps,
        g_loss: match a.g_loss {
            GLossArg::Minimax => GLoss::Minimax,
            GLossArg::Nonsaturating => GLoss::NonSaturating,
        },
    };
    let (ckpt, history, summary) = if a.model == ModelArg::Gan {
        let gcfg = GeneratorConfig {
            noise_dim: a.noise_dim,
            seq_len: a.seq_len,
            hidden: a.hidden.unwrap_or(GAN_DEFAULT_HIDDEN),
            dropout: a.dropout,
        };
        let dcfg = DiscriminatorConfig::for_length(a.seq_len)?;
        let (model, h) = train_gan(&data, &gcfg, &dcfg, &tcfg)?;
        let mut csv = String::from("iteration,d_loss,g_loss,d_real,d_fake\n");
        for i in 0..h.g_loss.len() {
            csv.push_str(&format!("{i},{},{},{},{}\n", h.d_loss[i], h.g_loss[i], h.d_real[i], h.d_fake[i]));
        }
        let tail = h.g_loss.len().min(10);
        let summary = json!({
            "model": "gan",
            "sequences": data.len(),
            "iterations": model.iterations,
            "g_loss_first10": mean(&h.g_loss[..tail]),
            "g_loss_last10": mean(&h.g_loss[h.g_loss.len() - tail..]),
            "d_loss_last": h.d_loss.last(),
        });
        (model.to_checkpoint()?, csv, summary)
    } else {
        let (cell, variational) = match a.model {
            ModelArg::RnnAe => (CellKind::Rnn, false),
            ModelArg::RnnVae => (CellKind::Rnn, true),
            ModelArg::LstmAe => (CellKind::Lstm, false),
            _ => (CellKind::Lstm, true),
        };
        let defaults = AeConfig::new(cell, variational, a.seq_len);
        let cfg = AeConfig {
            hidden: a.hidden.unwrap_or(defaults.hidden),
            latent: a.latent.unwrap_or(defaults.latent),
            ..defaults
        };
        let standardized = standardize_sequences(&data);
        let (model, h) = train_baseline(&cfg, &standardized, &tcfg)?;
        let mut csv = String::from("iteration,loss\n");
        for (i, v) in h.iter().enumerate() {
            csv.push_str(&format!("{i},{v}\n"));
        }
        let summary = json!({
            "model": cfg.kind().as_str(),
            "sequences": data.len(),
            "standardized_per_sequence": true,
            "iterations": model.iterations,
            "loss_first": h.first(),
            "loss_last": h.last(),
        });
        (model.to_checkpoint()?, csv, summary)
    };
    save_checkpoint(&ckpt, &a.out)?;
    let hist = history_path(&a.out);
    write_atomic(&hist, history.as_bytes())?;
    ctx.finish(&a.out, inputs, &[&a.out, &hist], summary)
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let rows = if ckpt.manifest.model == ModelKind::Gan {
        let model = GanModel::from_checkpoint(&ckpt)?;
        let len = a.len.unwrap_or(model.generator.seq_len);
        if len == 0 {
            return Err(CliError::Usage("--len must be positive".into()));
        }
        model.sample(a.count, len, ctx.seed())?
    } else {
        let model = BaselineModel::from_checkpoint(&ckpt)?;
        if let Some(len) = a.len.filter(|&l| l != model.config.seq_len) {
            return Err(CliError::Usage(format!(
                "{} decodes sequences of length {}, not {len}",
                ckpt.manifest.model.as_str(),
                model.config.seq_len
            )));
        }
        model.sample(a.count, ctx.seed())?
    };
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("generated values are not finite".into()));
    }
    write_atomic(&a.out, format_sequences(&rows).as_bytes())?;
    let summary = json!({
        "model": ckpt.manifest.model.as_str(),
        "count": rows.len(),
        "len": rows[0].len(),
    });
    ctx.finish(&a.out, vec![digest_path(&a.ckpt)?], &[&a.out], summary)
}

/// Price files become non-overlapping close windows of `len`.
fn load_real_sequences(path: &Path, len: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    if is_price_csv(&text) {
        let closes = parse_csv(text.as_bytes(), &stem(path))?.closes();
        let spec = WindowSpec::new(len, len)?;
        Ok(sliding_windows(closes.len(), spec)?
            .into_iter()
            .map(|r| closes[r].to_vec())
            .collect())
    } else {
        parse_sequences(&text, path)
    }
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let mut generated = parse_sequences(&read_text(&a.generated)?, &a.generated)?;
    let mut real = load_real_sequences(&a.real, generated[0].len())?;
    if a.standardize {
        real = standardize_sequences(&real);
        generated = standardize_sequences(&generated);
    }
    let pairing = match a.pairing {
        PairingArg::Paired => Pairing::Paired,
        PairingArg::Concatenated => Pairing::Concatenated,
    };
    let report = compare_sequences(
        &real,
        &generated,
        pairing,
        &a.real.display().to_string(),
        &a.generated.display().to_string(),
    )?;
    write_json(&a.out, &report)?;
    let summary = serde_json::to_value(&report.values).map_err(|e| CliError::Data(e.to_string()))?;
    let inputs = vec![digest_path(&a.real)?, digest_path(&a.generated)?];
    ctx.finish(&a.out, inputs, &[&a.out], summary)
}

fn gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let report = run_suite(&SuiteConfig {
        seeds: a.seeds,
        base_seed: ctx.seed(),
        ..SuiteConfig::default()
    })?;
    write_json(&a.out, &report)?;
    let failed: Vec<&str> = report
        .kernels
        .iter()
        .filter(|k| !k.passed)
        .map(|k| k.kernel.as_str())
        .collect();
    let summary = json!({ "passed": report.passed, "failed": failed });
    ctx.finish(&a.out, Vec::new(), &[&a.out], summary)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

/// Series from a price file (closes), a headerless sequence file (one series
/// per row) or a headed table (one series per numeric column).
fn plot_inputs(path: &Path) -> Result<Vec<Series>> {
    let text = read_text(path)?;
    let name = stem(path);
    if is_price_csv(&text) {
        let closes = parse_csv(text.as_bytes(), &name)?.closes();
        return Ok(vec![Series { name, values: closes }]);
    }
    let first_field = text.lines().next().and_then(|l| l.split(',').next()).unwrap_or("");
    if first_field.trim().parse::<f64>().is_ok() {
        return Ok(parse_sequences(&text, path)?
            .into_iter()
            .enumerate()
            .map(|(i, values)| Series {
                name: format!("{name}[{i}]"),
                values,
            })
            .collect());
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let mut series = Vec::new();
    for (j, col) in header.iter().enumerate() {
        if col == "Date" || col == "iteration" {
            continue;
        }
        let values = records
            .iter()
            .map(|r| r.get(j).and_then(|f| f.trim().parse::<f64>().ok()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Data(format!("{}: column `{col}` is not numeric", path.display())))?;
        series.push(Series {
            name: col.to_string(),
            values,
        });
    }
    Ok(series)
}

fn plot(ctx: &Ctx, a: &PlotArgs) -> Result<()> {
    let mut series = Vec::new();
    let mut inputs = Vec::new();
    for path in &a.input {
        series.extend(plot_inputs(path)?);
        inputs.push(digest_path(path)?);
    }
    plot_series(&series, &a.title, &a.out)?;
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    ctx.finish(&a.out, inputs, &[&a.out], json!({ "series": names }))
}
