use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use grokdyn::artifacts::{read_matrix_stack, read_metrics, MatrixStack};
use grokdyn::{ConfigPatch, RunConfig};

fn grokdyn(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_grokdyn"));
    cmd.args(args).env_remove("GROKDYN_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn grokdyn")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = grokdyn(&["bogus"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("possible values"));
}

#[test]
fn gradcheck_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(&["gradcheck", "--out", path_str(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max relative error "))
        .expect("summary line")
        .parse()
        .unwrap();
    assert!(err < 1e-4);
}

#[test]
fn flags_override_config_file_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("in.json");
    fs::write(&cfg_path, r#"{"lambda": 0.2, "steps": 300, "eta": 0.02}"#).unwrap();
    let out_dir = dir.path().join("run");
    let out = grokdyn(
        &["toy", "--config", path_str(&cfg_path), "--steps", "40", "--out", path_str(&out_dir)],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!((echoed.lambda, echoed.steps, echoed.eta), (0.2, 40, 0.02));
    let patch: ConfigPatch = serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(patch.apply(RunConfig::defaults(echoed.subcommand)), echoed);

    let csv = fs::read_to_string(out_dir.join("toy.csv")).unwrap();
    assert!(csv.starts_with("step,w1,w2,train_loss,test_loss\n"));
    assert_eq!(csv.lines().count(), 42);
}

#[test]
fn config_for_other_subcommand_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("in.json");
    fs::write(&cfg_path, r#"{"subcommand": "sim-isolated"}"#).unwrap();
    let out = grokdyn(&["toy", "--config", path_str(&cfg_path)], &[]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&cfg_path, r#"{"learning_rate": 1}"#).unwrap();
    assert_eq!(grokdyn(&["toy", "--config", path_str(&cfg_path)], &[]).status.code(), Some(2));
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(&["toy", "--kind", "linear3", "--steps", "5"], &[("GROKDYN_OUT", dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("toy").join("toy.csv")).unwrap();
    assert!(csv.starts_with("step,w1,w2,w3,train_loss,test_loss\n"));
}

#[test]
fn fourier_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(grokdyn(&["fourier", "--out", path_str(dir.path())], &[]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    let out = grokdyn(&["fourier", "--embedding", path_str(&missing), "--out", path_str(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn sim_isolated_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(
        &[
            "sim-isolated", "--p", "11", "--dh", "64", "--steps", "30", "--seed", "3", "--snapshot-stride", "10",
            "--out", path_str(dir.path()),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let seed = dir.path().join("seed_3");
    let log = read_metrics(&seed.join("metrics.csv")).unwrap();
    assert_eq!(log.rows.len(), 31);
    assert!(log.rows.iter().all(|r| r.train_loss < 1e-8 && r.train_acc == 1.0));
    let stack = read_matrix_stack(&seed.join("embeddings.json")).unwrap();
    assert_eq!(stack.iter().map(|s| s.0).collect::<Vec<_>>(), [0, 10, 20, 30]);
    assert_eq!(stack[0].1.shape(), (11, 64));
    let meta: MatrixStack = serde_json::from_str(&fs::read_to_string(seed.join("embeddings.json")).unwrap()).unwrap();
    assert_eq!(meta.dtype, "f64-le");
    let fourier: serde_json::Value = serde_json::from_str(&fs::read_to_string(seed.join("fourier.json")).unwrap()).unwrap();
    assert_eq!(fourier["frequencies"].as_array().unwrap().len(), 5);
    let dataset = fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert!(dataset.starts_with("a,b,c,split\n"));
    assert_eq!(dataset.lines().filter(|l| l.ends_with(",train")).count(), 46);
    for svg in ["accuracy.svg", "loss.svg"] {
        assert!(fs::read_to_string(dir.path().join(svg)).unwrap().contains("</svg>"));
    }
    let out = grokdyn(
        &["fourier", "--embedding", path_str(&seed.join("embeddings.json")), "--out", path_str(&dir.path().join("f"))],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let bars = fs::read_to_string(dir.path().join("f").join("fourier_norms.svg")).unwrap();
    assert_eq!(bars.matches("<rect x=").count() - 1, 5);
}

#[test]
fn single_row_metrics_still_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(
        &["sim-isolated", "--p", "5", "--dh", "16", "--steps", "0", "--seed", "0", "--out", path_str(dir.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("accuracy.svg")).unwrap();
    assert!(svg.contains("<circle"));
}

#[test]
fn probe_cosine_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(
        &["probe-cosine", "--steps", "40", "--seed", "0", "--probe-stride", "20", "--out", path_str(dir.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let probe = fs::read_to_string(dir.path().join("seed_0").join("probe.csv")).unwrap();
    let mut lines = probe.lines();
    assert_eq!(lines.next(), Some("step,cos_sim,proj_loss,update_norm,gtilde_norm"));
    assert_eq!(lines.map(|l| l.split(',').next().unwrap().to_string()).collect::<Vec<_>>(), ["0", "20", "40"]);
    assert!(dir.path().join("seed_0").join("params.bin").exists());
    assert!(dir.path().join("seed_0").join("params_layout.json").exists());
    assert!(dir.path().join("cosine.svg").exists());
}

#[test]
fn divergence_exits_numerical_with_partial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = grokdyn(
        &[
            "train-real", "--reduction", "sum", "--eta", "1e6", "--steps", "2000", "--log-every", "1",
            "--out", path_str(dir.path()),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let log = read_metrics(&dir.path().join("seed_0").join("metrics.csv")).unwrap();
    assert!(!log.rows.is_empty() && log.rows.len() < 2001);
    let summary = fs::read_to_string(dir.path().join("seed_0").join("summary.json")).unwrap();
    assert!(summary.contains("non-finite"));
}
