use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rulsearch"));
    c.env("RUST_LOG", "warn");
    c
}

fn synth(dir: &Path, instances: usize, dim: usize, seed: u64) {
    let ok = bin()
        .args(["synth", "--instances", &instances.to_string(), "--dim", &dim.to_string()])
        .args(["--base-length", "50", "--seed", &seed.to_string(), "--out"])
        .arg(dir)
        .status()
        .unwrap()
        .success();
    assert!(ok);
}

fn fit(data: &Path, test: &Path, out: &Path, seeds: &str) -> std::process::Output {
    bin()
        .args(["fit", "--data-format", "csv", "--train"])
        .arg(data.join("data.csv"))
        .arg("--schema")
        .arg(data.join("schema.json"))
        .arg("--test")
        .arg(test.join("data.csv"))
        .args(["--walltime-seconds", "120", "--trial-timeout-seconds", "20", "--max-budget", "3"])
        .args(["--workers", "1", "--max-trials", "8", "--ensemble-size", "5", "--seeds", seeds, "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn fit_writes_artifacts_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, test) = (tmp.path().join("data"), tmp.path().join("test"));
    synth(&data, 8, 2, 1);
    synth(&test, 3, 2, 2);
    let a = tmp.path().join("a");
    let out = fit(&data, &test, &a, "3,4");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in ["3", "4"] {
        for f in ["history.jsonl", "regret.csv", "metrics.json", "ensemble/ensemble.json"] {
            assert!(a.join(seed).join(f).exists(), "{seed}/{f}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert!(summary["test_rmse_std"].as_f64().is_some());

    let b = tmp.path().join("b");
    assert!(fit(&data, &test, &b, "3,4").status.success());
    assert_eq!(
        std::fs::read_to_string(a.join("summary.json")).unwrap(),
        std::fs::read_to_string(b.join("summary.json")).unwrap()
    );

    // predictions from the saved ensemble
    let pred = bin()
        .args(["predict", "--data-format", "csv", "--bundle"])
        .arg(a.join("3/ensemble"))
        .arg("--data")
        .arg(test.join("data.csv"))
        .arg("--schema")
        .arg(test.join("schema.json"))
        .output()
        .unwrap();
    assert!(pred.status.success());
    let text = String::from_utf8(pred.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap() >= 0.0));

    // channel mismatch is reported
    let other = tmp.path().join("other");
    synth(&other, 2, 3, 5);
    let bad = bin()
        .args(["predict", "--data-format", "csv", "--bundle"])
        .arg(a.join("3/ensemble"))
        .arg("--data")
        .arg(other.join("data.csv"))
        .arg("--schema")
        .arg(other.join("schema.json"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("channels"));
}

#[test]
fn missing_training_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fit", "--train"])
        .arg(tmp.path().join("absent.txt"))
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn space_manifest_reports_structure_counts() {
    let out = bin().arg("space").output().unwrap();
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["reference_structures"], 624);
    assert!(m["count_structures"].as_u64().unwrap() > 0);
}

#[test]
fn env_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fit", "--train"])
        .arg(tmp.path().join("absent.txt"))
        .arg("--out")
        .arg(tmp.path().join("o"))
        .env("RULSEARCH_ETA", "1")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));
}
