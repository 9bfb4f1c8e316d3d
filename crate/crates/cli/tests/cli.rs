use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use barlab_cli::RunConfig;
use tempfile::TempDir;

const MINIMAL: &str = r#"
[model]
p = 1
a = [1.0, 0.5]
b = [1.0, 0.5]

[noise]
family = "gaussian"
sigma2 = 1.0
rho = 0.3

[experiment]
n = 6
replicates = 50
master_seed = 17
"#;

fn barlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_every_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("sim");
    let o = barlab(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("tree.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# barlab-tree p=1 n=6 seed=17"));
    assert_eq!(lines.next().unwrap(), "label,generation,x,eps");
    assert_eq!(lines.count(), (1 << 7) - 1);
}

#[test]
fn seed_override_changes_the_tree() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "17"), (&b, "18"), (&c, "17")] {
        assert!(barlab(&["simulate", "--config", s(&cfg), "--out", s(out), "--seed", seed]).status.success());
    }
    let read = |d: &Path| fs::read_to_string(d.join("tree.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
}

#[test]
fn noise_column_can_be_dropped() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("sim");
    let o = barlab(&["simulate", "--config", s(&cfg), "--out", s(&out), "--no-record-noise"]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("tree.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "label,generation,x");
}

/// Noiseless order-one tree written by hand in the dump format.
fn noiseless_dump(a: [f64; 2], b: [f64; 2], n: u32) -> String {
    let len = (1usize << (n + 1)) - 1;
    let mut x = vec![0.0; len + 1];
    x[1] = 0.7;
    for k in 1..=len / 2 {
        x[2 * k] = a[0] + a[1] * x[k];
        x[2 * k + 1] = b[0] + b[1] * x[k];
    }
    let mut text = format!("# barlab-tree p=1 n={n} seed=0\nlabel,generation,x\n");
    for (k, v) in x.iter().enumerate().skip(1) {
        text += &format!("{k},{},{v}\n", 63 - (k as u64).leading_zeros());
    }
    text
}

#[test]
fn estimate_recovers_noiseless_parameters() {
    let dir = TempDir::new().unwrap();
    let tree = dir.path().join("tree.csv");
    fs::write(&tree, noiseless_dump([0.4, -0.6], [1.5, 0.3], 6)).unwrap();
    let o = barlab(&["estimate", "--tree", s(&tree)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let theta: Vec<f64> = serde_json::from_value(json["theta_hat"].clone()).unwrap();
    for (got, want) in theta.iter().zip([0.4, -0.6, 1.5, 0.3]) {
        assert!((got - want).abs() < 1e-8, "{theta:?}");
    }
    assert!(json["sigma2_bar"].is_null());
    assert!(json["rho_bar"].is_null());
}

#[test]
fn estimate_writes_json_when_asked() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("est");
    let o = barlab(&["estimate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success());
    let saved = fs::read_to_string(out.join("estimate.json")).unwrap();
    assert_eq!(saved, stdout(&o));
    let json: serde_json::Value = serde_json::from_str(&saved).unwrap();
    assert!(json["sigma2_bar"].as_f64().is_some());
}

#[test]
fn corrupted_tree_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let tree = dir.path().join("tree.csv");
    let mut text = noiseless_dump([0.4, -0.6], [1.5, 0.3], 4);
    text = text.replacen("5,2,", "5,2,oops", 1);
    fs::write(&tree, text).unwrap();
    let o = barlab(&["estimate", "--tree", s(&tree)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tree.csv:7"), "{err}");
}

#[test]
fn limits_of_the_reference_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = barlab(&["limits", "--config", s(&cfg)]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((json["xi"][0].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((json["lambda"][0][0].as_f64().unwrap() - 16.0 / 3.0).abs() < 1e-10);
    assert_eq!(json["beta"].as_f64().unwrap(), 0.5);
}

#[test]
fn limits_without_offsets_center_the_process() {
    let dir = TempDir::new().unwrap();
    let text = MINIMAL.replace("a = [1.0, 0.5]", "a = [0.0, 0.5]").replace("b = [1.0, 0.5]", "b = [0.0, -0.4]");
    let cfg = write_config(dir.path(), &text);
    let o = barlab(&["limits", "--config", s(&cfg)]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["xi"][0].as_f64().unwrap(), 0.0);
}

#[test]
fn unstable_model_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("a = [1.0, 0.5]", "a = [1.0, 1.2]"));
    let o = barlab(&["limits", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_noise_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("rho = 0.3", "rho = 1.5"));
    assert_eq!(barlab(&["simulate", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn smoke_campaign_is_quick_and_complete() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("mc");
    let start = std::time::Instant::now();
    let o = barlab(&["montecarlo", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    for f in ["report.json", "tails.csv", "cov.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let text = stdout(&o);
    assert!(text.starts_with("montecarlo: 50 replicates"), "{text}");
    assert!(text.lines().skip(1).all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
}

#[test]
fn report_echo_reparses() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("mc");
    assert!(barlab(&["montecarlo", "--config", s(&cfg_path), "--out", s(&out), "--workers", "2"]).status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(json["config"].clone()).unwrap();
    let original = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(echoed, original.echo());
    assert_eq!(RunConfig::from_toml(&echoed.to_toml()).unwrap(), echoed);
}

#[test]
fn failing_checks_under_assert_exit_three() {
    let dir = TempDir::new().unwrap();
    // an impossible covariance tolerance forces a failure
    let text = MINIMAL.replace("master_seed = 17", "master_seed = 17\ncov_tol = 1e-9");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("mc");
    let o = barlab(&["montecarlo", "--config", s(&cfg), "--out", s(&out), "--assert"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL covariance"));
}

#[test]
fn check_scales_table() {
    let o = barlab(&["check-scales", "--case", "1", "--beta", "0.4,0.8", "--alpha", "0.1,0.25"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "case,beta,alpha,verdict,alpha_max,regime");
    assert_eq!(rows.len(), 5);
    // beta = 0.8 allows alpha < -log2(0.8)/2 = 0.161
    assert!(rows[1].starts_with("1,0.4,0.1,pass,"));
    assert!(rows[2].starts_with("1,0.4,0.25,pass,"));
    assert!(rows[3].starts_with("1,0.8,0.1,pass,0.160964"));
    assert!(rows[4].starts_with("1,0.8,0.25,fail,"));
    let o = barlab(&["check-scales", "--case", "1", "--beta", "0.8", "--alpha", "0.25", "--assert"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(barlab(&[]).status.code(), Some(1));
    assert_eq!(barlab(&["simulate"]).status.code(), Some(1));
    assert_eq!(barlab(&["frobnicate"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let empty = write_config(dir.path(), "");
    assert_eq!(barlab(&["limits", "--config", s(&empty)]).status.code(), Some(1));
    let typo = write_config(dir.path(), &MINIMAL.replace("replicates", "replicate"));
    let o = barlab(&["limits", "--config", s(&typo)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}
