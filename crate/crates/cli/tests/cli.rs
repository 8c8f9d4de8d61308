use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kpzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpzlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const KERNELS: &str = r#"
kind = "kernels"
truncation = 32
[model]
N = 64
beta = 1.0
A = 0.0
[noise]
family = "rademacher"
seed = 1
"#;

#[test]
fn kernels_writes_csv_and_json_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", KERNELS);
    let out = dir.path().join("out");
    let o = kpzlab(&["kernels", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("power_sums.csv")).unwrap();
    assert!(csv.starts_with("t,S2,S4,S2*t^1.5\n"));
    assert_eq!(csv.lines().count(), 1 + 33);
    assert!(!csv.contains('\r'));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["master_seed"], 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall: PASS"));
}

#[test]
fn json_config_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.json",
        r#"{"kind": "kernels", "truncation": 16, "model": {"N": 16, "beta": 1.0, "A": 0.0},
            "noise": {"family": "gaussian", "parameter": 1.0, "seed": 5}}"#,
    );
    let o = kpzlab(&["kernels", "--config", &cfg, "--seed", "9", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["provenance"]["master_seed"], 9);
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kpzlab(&["bogus"]).status.code(), Some(2));
    assert_eq!(kpzlab(&["kernels"]).status.code(), Some(2));
    let missing = dir.path().join("none.toml");
    assert_eq!(kpzlab(&["kernels", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.toml", "kind = \"kernels\"\nreplicates = 0\n");
    assert_eq!(kpzlab(&["kernels", "--config", &bad]).status.code(), Some(2));
    // Kind does not match the subcommand.
    let cfg = write(dir.path(), "k.toml", KERNELS);
    let o = kpzlab(&["she", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("she_compare"));
}

#[test]
fn failing_verdicts_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // A 100% pass requirement with an envelope exponent this small fails.
    let cfg = write(
        dir.path(),
        "b.toml",
        r#"
kind = "bound_scan"
replicates = 4
epsilon = 0.001
min_pass_fraction = 1.0
[model]
N = 256
beta = 4.0
A = 0.0
[noise]
family = "rademacher"
seed = 2
"#,
    );
    let out = dir.path().join("out");
    let o = kpzlab(&["polymer", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    let field = fs::read_to_string(out.join("polymer_field.csv")).unwrap();
    assert!(field.starts_with("x,t,Z,f_poly\n"));
}

#[test]
fn simulate_applies_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", KERNELS);
    let csv = dir.path().join("f.csv");
    let o = kpzlab(&[
        "simulate", "--config", &cfg, "--psi", "polymer", "--noise", "gaussian", "--noise-parameter", "0.5",
        "--N", "16", "--A", "-1", "--beta", "0.5", "--T", "6", "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,t,f_raw,f_tilted\n"));
    // x in [0, 4], t in [0, 6]
    assert_eq!(text.lines().count(), 1 + 5 * 7);
    let again = dir.path().join("g.csv");
    kpzlab(&[
        "simulate", "--config", &cfg, "--psi", "polymer", "--noise", "gaussian", "--noise-parameter", "0.5",
        "--N", "16", "--A", "-1", "--beta", "0.5", "--T", "6", "--csv", again.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn renorm_writes_the_v_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        r#"
kind = "renorm_mean"
replicates = 20
relative_tolerance = 10.0
[model]
N = 64
beta = 1.0
A = 0.0
[noise]
family = "rademacher"
seed = 4
[[points]]
x = 0.5
t = 0.5
[field]
x_max = 4
t_max = 8
stride = 2
"#,
    );
    let out = dir.path().join("out");
    let o = kpzlab(&["renorm", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("renorm.json")).unwrap()).unwrap();
    for key in ["c", "V", "truncation", "tail_bound"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let delta = fs::read_to_string(out.join("delta.csv")).unwrap();
    assert!(delta.starts_with("x,t,K,Y,delta\n"));
    assert_eq!(delta.lines().count(), 1 + 5 * 5);
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 20);
}
