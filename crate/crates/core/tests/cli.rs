use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rtacm::checkpoint;
use rtacm::metrics::MetricsReport;
use rtacm::pipeline::{DataSource, RunConfig, RunSummary, SyntheticSuite};

fn small_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::quick();
    c.data = DataSource::Synthetic(SyntheticSuite::standard(32, 40));
    c.target_ratios = (0.5, 0.1, 0.4);
    c.net.hidden_size = 6;
    c.net.layers = 2;
    c.finetune.frozen_layers = 1;
    c.relevance.hidden = vec![8];
    c.relevance.latent_dim = 3;
    c.relevance.epochs = 5;
    c.teacher.epochs = 2;
    c.meta.total_steps = 12;
    c.finetune.train.epochs = 4;
    c.out_dir = out.to_path_buf();
    c
}

fn write_config(dir: &Path, config: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn rtacm(args: &[&str], config: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_rtacm"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn run_all_artifacts_exist_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &small_config(&out));
    rtacm(&["run-all"], &config);

    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(out.join("run_summary.json")).unwrap()).unwrap();
    for name in &summary.artifacts {
        let path = out.join(name);
        assert!(path.is_file(), "missing {name}");
        let bytes = fs::read(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_slice::<serde_json::Value>(&bytes).unwrap();
            }
            Some("csv") => {
                let text = String::from_utf8(bytes).unwrap();
                let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
                assert!(widths.len() > 1, "{name} has no rows");
                assert!(widths.iter().all(|&w| w == widths[0]), "{name} is ragged");
            }
            Some("ckpt") => {
                checkpoint::decode(&bytes).unwrap();
            }
            _ => panic!("unexpected artifact {name}"),
        }
    }
    let metrics: MetricsReport =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.accuracy, summary.accuracy);
    let total: usize = metrics.support.iter().sum();
    let trace: usize = (0..metrics.confusion.len()).map(|c| metrics.confusion[c][c]).sum();
    assert_eq!(metrics.accuracy, trace as f64 / total as f64);
    // embeddings: header plus one row per test window
    let emb = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert_eq!(emb.lines().count(), total + 1);

    let resolved: RunConfig =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_ne!(resolved.meta.seed, 0);
    assert!(!out.join(".rtacm.lock").exists());
}

#[test]
fn stages_reuse_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &small_config(&out));
    rtacm(&["ingest"], &config);
    assert!(out.join("data_summary.json").is_file());
    rtacm(&["relevance"], &config);
    rtacm(&["difficulty"], &config);
    let relevance = fs::read(out.join("relevance.json")).unwrap();
    rtacm(&["meta-train"], &config);
    assert_eq!(fs::read(out.join("relevance.json")).unwrap(), relevance);
    let theta = fs::read(out.join("checkpoints/theta.ckpt")).unwrap();
    rtacm(&["fine-tune"], &config);
    assert_eq!(fs::read(out.join("checkpoints/theta.ckpt")).unwrap(), theta);
    rtacm(&["evaluate"], &config);
    let staged = fs::read(out.join("metrics.json")).unwrap();

    // the staged path and the one-shot path agree
    let whole = dir.path().join("whole");
    let config = write_config(dir.path(), &small_config(&whole));
    rtacm(&["run-all"], &config);
    assert_eq!(fs::read(whole.join("metrics.json")).unwrap(), staged);
}

#[test]
fn synth_then_manifest_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = write_config(dir.path(), &small_config(&data));
    rtacm(&["synth"], &config);
    let replay = data.join("config.json");
    let loaded = RunConfig::from_json_file(&replay).unwrap();
    assert!(matches!(loaded.data, DataSource::Manifest(_)));
    rtacm(&["run-all"], &replay);
    assert!(data.join("run/metrics.json").is_file());
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(&dir.path().join("unused")));
    let out = dir.path().join("flagged");
    let out_str = out.to_str().unwrap();
    rtacm(&["ingest", "--out", out_str, "--seed", "9", "--k-shot", "3", "--target", "aux_b"], &config);
    let resolved: RunConfig =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved.seed, 9);
    assert_eq!(resolved.meta.k_shot, 3);
    assert_eq!(resolved.target.as_deref(), Some("aux_b"));
    let summary = fs::read_to_string(out.join("data_summary.json")).unwrap();
    assert!(summary.contains("\"target_train\": 9"));
}

#[test]
fn missing_manifest_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = small_config(&out);
    c.data = DataSource::Manifest(dir.path().join("absent.json"));
    let config = write_config(dir.path(), &c);
    let res = Command::new(env!("CARGO_BIN_EXE_rtacm"))
        .args(["run-all", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("absent.json"));
    assert!(!out.exists());
}

#[test]
fn sweeps_have_expected_rows_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let config = write_config(dir.path(), &small_config(&out));
    rtacm(&["sweep", "--axis", "frozen-layers"], &config);
    let csv = fs::read_to_string(out.join("sweep_frozen_layers.csv")).unwrap();
    let values: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(values, ["1", "2"]);

    rtacm(&["sweep", "--axis", "local-steps"], &config);
    let first = fs::read(out.join("sweep_local_steps.csv")).unwrap();
    rtacm(&["sweep", "--axis", "local-steps"], &config);
    assert_eq!(fs::read(out.join("sweep_local_steps.csv")).unwrap(), first);
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 6);
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".rtacm.lock"), "").unwrap();
    let config = write_config(dir.path(), &small_config(&out));
    let res = Command::new(env!("CARGO_BIN_EXE_rtacm"))
        .args(["ingest", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!res.status.success());
}
