mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::{fixture, ok, p, qgf, stderr_json};
use qgf::manifest::{manifest_path, RunManifest};

fn read_manifest(out: &std::path::Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(manifest_path(out)).unwrap()).unwrap()
}

#[test]
fn evaluate_identical_files_gives_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = dir.path().join("s.csv");
    fs::write(&seqs, "1,2,3,2.5\n0.5,0.25,1,4\n").unwrap();
    let report = dir.path().join("r.json");
    let out = qgf(["evaluate", "--real", p(&seqs), "--generated", p(&seqs), "--out", p(&report)]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["prd"], 0.0);
    assert_eq!(v["rmse"], 0.0);
    assert_eq!(v["fd"], 0.0);
    assert_eq!(v["pearson_r"], 1.0);
    assert_eq!(v["undefined_flags"], serde_json::json!([]));
    let m = read_manifest(&report);
    assert_eq!(m.subcommand, "evaluate");
    assert_eq!(m.seed, 42);
    assert_eq!(m.inputs.len(), 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = qgf(["evaluate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage:"), "{stderr}");
    assert_eq!(stderr_json(&out)["error"], "usage");

    let help = qgf(["--help"]);
    ok(&help);
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["ingest", "indicators", "label", "select", "reduce", "train", "generate", "evaluate", "gradcheck", "plot"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn data_errors_exit_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-01,1,0.5,1,1,1,10\n").unwrap();
    let target = dir.path().join("out.csv");
    let out = qgf(["ingest", "--input", p(&bad), "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "data");
    assert!(!target.exists());
    assert!(!manifest_path(&target).exists());
    // No stray temporary files either.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

    let seqs = dir.path().join("a.csv");
    fs::write(&seqs, "1,2,3\n").unwrap();
    let other = dir.path().join("b.csv");
    fs::write(&other, "1,2,3\n4,5,6\n").unwrap();
    let out = qgf(["evaluate", "--real", p(&seqs), "--generated", p(&other), "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!target.exists());
}

#[test]
fn diverging_training_exits_4_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    let out = qgf([
        "train", "--model", "rnn-ae", "--data", p(&fixture("fixture60.csv")), "--seq-len", "8",
        "--epochs", "20", "--batch", "8", "--lr", "1e300", "--out", p(&ckpt),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "numeric");
    assert!(!ckpt.exists());
}

#[test]
fn ingest_fetches_file_urls() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("p.csv");
    let template = format!("file://{}/{{symbol}}.csv", common::fixtures().display());
    let out = qgf(["ingest", "--fetch-url", &template, "--symbol", "fixture60", "--out", p(&target)]);
    ok(&out);
    let local = dir.path().join("q.csv");
    ok(&qgf(["ingest", "--input", p(&fixture("fixture60.csv")), "--out", p(&local), "--quiet"]));
    assert_eq!(fs::read(&target).unwrap(), fs::read(&local).unwrap());
    assert_eq!(read_manifest(&target).inputs[0].sha256, read_manifest(&local).inputs[0].sha256);

    let out = qgf(["ingest", "--fetch-url", "file:///nowhere/x.csv", "--symbol", "A", "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(3));
    let out = qgf(["ingest", "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("l.csv");
    let out = qgf(["--quiet", "label", "--input", p(&fixture("bars30.csv")), "--horizon", "2", "--out", p(&target)]);
    ok(&out);
    assert!(out.stdout.is_empty());
    let loud = qgf(["label", "--input", p(&fixture("bars30.csv")), "--horizon", "2", "--out", p(&target)]);
    let summary: serde_json::Value = serde_json::from_slice(&loud.stdout).unwrap();
    assert_eq!(summary["summary"]["labels"], 28);
}

#[test]
fn plot_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = dir.path().join("s.csv");
    fs::write(&seqs, "1,2,3\n3,3,3\n").unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    for target in [&a, &b] {
        ok(&qgf(["plot", "--input", p(&seqs), p(&fixture("bars30.csv")), "--title", "t", "--out", p(target)]));
    }
    let svg = fs::read_to_string(&a).unwrap();
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn gradcheck_subcommand_reports_every_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("g.json");
    ok(&qgf(["gradcheck", "--seeds", "2", "--out", p(&target)]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["kernels"].as_array().unwrap().len(), qgf::gradsuite::KERNELS.len());
}

/// ingest → indicators → label → select → reduce → train → generate →
/// evaluate → plot on the bundled 60-bar fixture, then a replay of every
/// step from its run manifest.
#[test]
fn full_pipeline_on_fixture() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let steps: Vec<Vec<String>> = vec![
        vec!["ingest", "--input", p(&fixture("fixture60.csv")), "--out", p(&d("prices.csv"))],
        vec!["indicators", "--input", p(&d("prices.csv")), "--out", p(&d("features.csv"))],
        vec!["label", "--input", p(&d("prices.csv")), "--horizon", "1", "--out", p(&d("labels.csv"))],
        vec!["select", "--features", p(&d("features.csv")), "--labels", p(&d("labels.csv")), "--keep", "4", "--out", p(&d("select.json"))],
        vec!["reduce", "--features", p(&d("features.csv")), "--components", "3", "--out", p(&d("reduced.csv"))],
        vec![
            "train", "--model", "gan", "--data", p(&d("prices.csv")), "--seq-len", "16", "--epochs", "3",
            "--batch", "16", "--lr", "3e-4", "--hidden", "8", "--out", p(&d("gan")),
        ],
        vec![
            "train", "--model", "lstm-vae", "--data", p(&d("prices.csv")), "--seq-len", "16", "--epochs", "3",
            "--batch", "16", "--lr", "3e-3", "--hidden", "8", "--latent", "4", "--out", p(&d("vae")),
        ],
        vec!["generate", "--ckpt", p(&d("gan")), "--count", "3", "--len", "16", "--out", p(&d("gen.csv"))],
        vec!["generate", "--ckpt", p(&d("vae")), "--count", "3", "--out", p(&d("vae.csv"))],
        vec![
            "evaluate", "--real", p(&d("prices.csv")), "--generated", p(&d("gen.csv")), "--standardize",
            "--out", p(&d("report.json")),
        ],
        vec!["plot", "--input", p(&d("gen.csv")), p(&d("gan.history.csv")), "--out", p(&d("plot.svg"))],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();

    let mut digests = Vec::new();
    for step in &steps {
        let out = qgf(step);
        ok(&out);
        let target = step.iter().position(|a| a == "--out").map(|i| &step[i + 1]).unwrap();
        let m = read_manifest(std::path::Path::new(target));
        assert_eq!(&m.argv, step);
        digests.push(m.outputs);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 3);
    for key in ["prd", "rmse", "fd", "pearson_r"] {
        assert!(report[key].as_f64().is_some_and(f64::is_finite), "{key}");
    }
    let features = fs::read_to_string(d("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 1 + 60 - 26);

    // Replaying each step from its manifest reproduces its outputs bitwise.
    for (step, expected) in steps.iter().zip(&digests) {
        let target = step.iter().position(|a| a == "--out").map(|i| &step[i + 1]).unwrap();
        let argv = read_manifest(std::path::Path::new(target)).argv;
        ok(&qgf(&argv));
        assert_eq!(&read_manifest(std::path::Path::new(target)).outputs, expected, "{step:?}");
    }
    assert!(start.elapsed() < Duration::from_secs(120), "took {:?}", start.elapsed());
}

#[test]
fn seed_changes_stochastic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("gan");
    ok(&qgf([
        "train", "--model", "gan", "--data", p(&fixture("fixture60.csv")), "--seq-len", "8", "--epochs", "1",
        "--batch", "8", "--lr", "1e-3", "--hidden", "4", "--out", p(&ckpt), "--quiet",
    ]));
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    ok(&qgf(["generate", "--ckpt", p(&ckpt), "--count", "2", "--out", p(&a), "--seed", "1"]));
    ok(&qgf(["generate", "--ckpt", p(&ckpt), "--count", "2", "--out", p(&b), "--seed", "1"]));
    ok(&qgf(["generate", "--ckpt", p(&ckpt), "--count", "2", "--out", p(&c), "--seed", "2"]));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}
