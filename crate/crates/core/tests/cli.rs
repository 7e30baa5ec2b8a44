use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dhgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhgl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path_str(&path).to_string()
}

fn identity_csv(p: usize) -> String {
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if i == j { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn theta_rows(result: &Path) -> Vec<Vec<f64>> {
    let v: Value =
        serde_json::from_str(&fs::read_to_string(result.join("result.json")).unwrap()).unwrap();
    serde_json::from_value(v["result"]["theta_hat"].clone()).unwrap()
}

const SMALL: &str = r#"{
    "scenario": "cli",
    "network": { "p": 20, "hub_count": 2 },
    "n": 25,
    "replications": 2,
    "methods": ["hgl", "algorithm1"],
    "known_hubs": 1,
    "extraction": { "t": 0.005, "r": 5 },
    "seed": 3
}"#;

#[test]
fn generate_writes_expected_files_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.json", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = dhgl(&["generate", "--config", &cfg, "--out", path_str(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "sample_000.csv",
            "sample_001.csv",
            "truth.csv",
            "truth.json"
        ]
    );
    for name in &names {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seed_flag_changes_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.json", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    dhgl(&["generate", "--config", &cfg, "--out", path_str(&a)]);
    dhgl(&[
        "generate",
        "--config",
        &cfg,
        "--out",
        path_str(&b),
        "--seed",
        "4",
    ]);
    assert_ne!(
        fs::read(a.join("sample_000.csv")).unwrap(),
        fs::read(b.join("sample_000.csv")).unwrap()
    );
}

#[test]
fn gl_on_identity_covariance_returns_identity() {
    let dir = TempDir::new().unwrap();
    let cov = write(&dir, "cov.csv", &identity_csv(5));
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{ "gl_lambda": 0.1, "extraction": { "r": 2 } }"#,
    );
    let out = dir.path().join("out");
    let o = dhgl(&[
        "estimate",
        "--method",
        "gl",
        "--covariance",
        &cov,
        "--n",
        "50",
        "--config",
        &cfg,
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for (i, row) in theta_rows(&out).iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-6, "({i}, {j}) = {x}");
        }
    }
    let hubs: Vec<usize> =
        serde_json::from_str(&fs::read_to_string(out.join("hubs.json")).unwrap()).unwrap();
    assert!(hubs.is_empty());
}

#[test]
fn dhgl_with_empty_set_matches_hgl() {
    let dir = TempDir::new().unwrap();
    let gen_cfg = write(&dir, "gen.json", SMALL);
    let data_dir = dir.path().join("data");
    dhgl(&[
        "generate",
        "--config",
        &gen_cfg,
        "--out",
        path_str(&data_dir),
    ]);
    let data = data_dir.join("sample_000.csv");

    let hgl_cfg = write(
        &dir,
        "hgl.json",
        r#"{ "hgl": { "lambda1": 0.3, "lambda2": 0.3, "lambda3": 0.8 }, "extraction": { "t": 0.005, "r": 5 } }"#,
    );
    let dhgl_cfg = write(
        &dir,
        "dhgl.json",
        r#"{ "penalty": { "lambda1": 0.3, "lambda2": 0.3, "lambda3": 0.8, "lambda4": 0.1, "lambda5": 0.1, "discriminated": [] },
             "extraction": { "t": 0.005, "r": 5 } }"#,
    );
    let out_h = dir.path().join("h");
    let out_d = dir.path().join("d");
    let oh = dhgl(&[
        "estimate",
        "--method",
        "hgl",
        "--data",
        path_str(&data),
        "--config",
        &hgl_cfg,
        "--out",
        path_str(&out_h),
    ]);
    let od = dhgl(&[
        "estimate",
        "--method",
        "dhgl",
        "--data",
        path_str(&data),
        "--config",
        &dhgl_cfg,
        "--out",
        path_str(&out_d),
    ]);
    assert!(oh.status.success() && od.status.success());
    assert_eq!(theta_rows(&out_h), theta_rows(&out_d));
    assert_eq!(
        fs::read(out_h.join("hubs.json")).unwrap(),
        fs::read(out_d.join("hubs.json")).unwrap()
    );
}

#[test]
fn screening_method_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let gen_cfg = write(&dir, "gen.json", SMALL);
    let data_dir = dir.path().join("data");
    dhgl(&[
        "generate",
        "--config",
        &gen_cfg,
        "--out",
        path_str(&data_dir),
    ]);
    let cfg = write(
        &dir,
        "a2.json",
        r#"{ "hgl": { "lambda1": 0.4, "lambda2": [0.1, 0.2], "lambda3": 1.0 },
             "screening": { "a": 2, "b": 1.1 }, "screening_bic": { "c": 0.1 },
             "extraction": { "t": 0.005, "r": 5 } }"#,
    );
    let out = dir.path().join("out");
    let o = dhgl(&[
        "estimate",
        "--method",
        "algorithm2",
        "--data",
        path_str(&data_dir.join("sample_001.csv")),
        "--config",
        &cfg,
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(theta_rows(&out).len(), 20);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = path_str(&out);

    let bad = write(&dir, "bad.csv", "1,0\n0,x\n");
    let o = dhgl(&[
        "estimate",
        "--method",
        "hgl",
        "--covariance",
        &bad,
        "--n",
        "10",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let ragged = write(&dir, "ragged.csv", "1,0\n0\n");
    let o = dhgl(&[
        "estimate", "--method", "hgl", "--data", &ragged, "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(1));

    let cov = write(&dir, "cov.csv", &identity_csv(3));
    let o = dhgl(&[
        "estimate",
        "--method",
        "nope",
        "--covariance",
        &cov,
        "--n",
        "10",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));

    // usage errors are input errors, not convergence shortfalls
    let o = dhgl(&["estimate", "--method", "hgl", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let o = dhgl(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let data = write(&dir, "x.csv", "1,2,0.5\n0.3,-1,2\n-2,0.1,1\n0.7,0.4,-0.9\n");
    let capped = write(
        &dir,
        "capped.json",
        r#"{ "admm": { "max_iterations": 1 }, "extraction": { "r": 1 } }"#,
    );
    let o = dhgl(&[
        "estimate", "--method", "hgl", "--data", &data, "--config", &capped, "--out", out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let o = dhgl(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn experiment_writes_one_row_per_replication_and_method() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.json", SMALL);
    let out = dir.path().join("exp");
    let o = dhgl(&[
        "experiment",
        "--config",
        &cfg,
        "--out",
        path_str(&out),
        "--jobs",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "replication",
            "method",
            "correct_edges",
            "hub_edge_prop",
            "hub_node_prop",
            "sse",
            "hub_accuracy",
            "effective",
            "seed"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let sse_of = |method: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| &r[1] == method)
            .map(|r| r[5].parse().unwrap())
            .collect()
    };
    for m in summary["methods"].as_array().unwrap() {
        let name = m["method"].as_str().unwrap();
        let sse = sse_of(name);
        let mean = sse.iter().sum::<f64>() / sse.len() as f64;
        assert!(
            (m["sse"].as_f64().unwrap() - mean).abs() < 1e-9 * mean.max(1.0),
            "{name}"
        );
    }
    assert!(out.join("runs.csv").exists());
    assert!(out.join("aggregates.csv").exists());
}

#[test]
fn invalid_experiment_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{ "replications": 0, "output_dir": "x" }"#,
    );
    let o = dhgl(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replications"));
}

#[test]
fn bench_single_size() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "bench.json",
        r#"{ "sizes": [30], "n": 20, "r": 6, "hub_count": 2, "known_hubs": 1, "replications": 1 }"#,
    );
    let out = dir.path().join("bench");
    let o = dhgl(&["bench", "--config", &cfg, "--out", path_str(&out)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let mut rdr = csv::Reader::from_path(out.join("bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(rows.iter().all(|r| &r[0] == "30"));
    assert!(rows.iter().any(|r| &r[4] == "hgl"));
}
