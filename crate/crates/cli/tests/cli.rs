use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levyma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyma"))
        .args(args)
        .env_remove("LEVYMA_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const OU: &str = r#"{"name": "ou", "kind": "rate-mc",
    "model": {"example": "ou", "lambda": 1.0, "beta": 1.5},
    "n_grid": [64, 128, 256], "replications": 300, "master_seed": 4}"#;

#[test]
fn rates_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.json", OU);
    let one = levyma(&["--config", &cfg, "--threads", "1", "rates"]);
    let four = levyma(&["--config", &cfg, "--threads", "4", "rates"]);
    assert!(
        one.status.success(),
        "{}",
        String::from_utf8_lossy(&one.stderr)
    );
    assert_eq!(one.stdout, four.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.starts_with("experiment,n,metric,value,stderr,R,seed,flag\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.json", OU);
    let a = levyma(&["--config", &cfg, "rates"]);
    let b = levyma(&["--config", &cfg, "--seed", "5", "rates"]);
    assert!(b.status.success());
    assert_ne!(a.stdout, b.stdout);
    assert!(String::from_utf8(b.stdout).unwrap().contains(",5,"));
}

#[test]
fn out_directory_gets_csv_and_json_then_report_merges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.json", OU);
    let out = dir.path().join("res");
    let st = levyma(&["--config", &cfg, "--out", out.to_str().unwrap(), "run"]);
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    let csv = out.join("ou.csv");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ou.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "ou");
    assert_eq!(json["provenance"]["master_seed"], 4);

    let rep = levyma(&["report", csv.to_str().unwrap()]);
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("ou,d_K,")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("ou,d_W,")), "{text}");
}

#[test]
fn table_prints_exact_exponents() {
    let out = levyma(&["table", "--alpha-beta", "5/2,3,4,9/2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(
        rows,
        [
            "alpha_beta=5/2,d_K,-1/8,-0.125,0",
            "alpha_beta=5/2,d_W,-1/4,-0.25,0",
            "alpha_beta=3,d_K,-1/4,-0.25,0",
            "alpha_beta=3,d_W,-1/2,-0.5,1",
            "alpha_beta=4,d_K,-1/2,-0.5,1",
            "alpha_beta=4,d_W,-1/2,-0.5,0",
            "alpha_beta=9/2,d_K,-1/2,-0.5,0",
            "alpha_beta=9/2,d_W,-1/2,-0.5,0",
        ]
    );
}

#[test]
fn table_json_format() {
    let out = levyma(&["--format", "json", "table", "--alpha-beta", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[1]["log_power"], 1);
    assert_eq!(v[1]["exponent"], "-1/2");
}

#[test]
fn simulate_dumps_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"name": "sim", "kind": "rate-mc",
            "model": {"example": "lfsn", "h": 0.2, "beta": 1.5, "sigma": 1.0},
            "n_grid": [32], "replications": 100, "master_seed": 1, "grid": {"m": 2}}"#,
    );
    let out = dir.path().join("paths");
    let st = levyma(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    let bin = fs::read(out.join("sim_n32.bin")).unwrap();
    assert_eq!(bin.len(), 100 * 32 * 8);
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sim_n32.bin.json")).unwrap()).unwrap();
    assert_eq!(side["rows"], 100);
    assert_eq!(side["cols"], 32);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(levyma(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(levyma(&["rates"]).status.code(), Some(1));
    assert_eq!(
        levyma(&["table", "--alpha-beta", "two"]).status.code(),
        Some(1)
    );

    let missing = dir.path().join("nope.json");
    assert_eq!(
        levyma(&["--config", missing.to_str().unwrap(), "rates"])
            .status
            .code(),
        Some(2)
    );
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"name": "x", "kind": "rate-mc", "model": {"example": "ou", "lambda": -1.0, "beta": 1.5}, "n_grid": [64]}"#,
    );
    assert_eq!(levyma(&["--config", &bad, "rates"]).status.code(), Some(2));
    let table_out_of_regime = levyma(&["table", "--alpha-beta", "2"]);
    assert_eq!(table_out_of_regime.status.code(), Some(2));
}
