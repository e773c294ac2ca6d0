use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wassball_cli::wadv;

fn wassball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wassball"))
        .args(args)
        .env("WASSBALL_LOG", "off")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write_images(file: &Path, dims: Vec<u32>, data: Vec<f64>) {
    let array = wadv::Array::new(dims, data).unwrap();
    wadv::write(std::fs::File::create(file).unwrap(), &array).unwrap();
}

#[test]
fn attack_is_deterministic() {
    let args = [
        "attack",
        "--samples",
        "6",
        "--iterations",
        "5",
        "--seed",
        "3",
    ];
    let a = wassball(&args);
    let b = wassball(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let doc = json(&a);
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["kind"], "attack");
    assert_eq!(doc["samples"].as_array().unwrap().len(), 6);
}

#[test]
fn attack_then_verify() {
    let dir = TempDir::new().unwrap();
    for method in ["pgd-dual-projection", "fw-dual-lmo"] {
        let result = path(&dir, &format!("{method}.json"));
        let trace = path(&dir, &format!("{method}.csv"));
        let run = wassball(&[
            "attack",
            "--method",
            method,
            "--samples",
            "8",
            "--iterations",
            "10",
            "--out",
            &result,
            "--trace",
            &trace,
        ]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        let rows = std::fs::read_to_string(&trace).unwrap();
        assert!(rows.starts_with("iteration,mean_loss,accuracy"));
        // Header, the clean images, then one row per iteration.
        assert_eq!(rows.lines().count(), 12);

        let check = wassball(&["verify", "--input", &result]);
        assert_eq!(check.status.code(), Some(0));
        let report = json(&check);
        assert_eq!(report["kind"], "verify");
        assert_eq!(report["summary"]["budget_violations"], 0);
        assert_eq!(report["summary"]["coupling_violations"], 0);
    }
}

#[test]
fn verify_flags_tampered_images() {
    let dir = TempDir::new().unwrap();
    let result = path(&dir, "run.json");
    let run = wassball(&[
        "attack",
        "--samples",
        "3",
        "--iterations",
        "5",
        "--out",
        &result,
    ]);
    assert!(run.status.success());
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    // Moving mass across the whole image costs far more than the budget.
    let adv = doc["samples"][0]["adversarial"].as_array_mut().unwrap();
    let first = adv[0].as_f64().unwrap();
    let last = adv.len() - 1;
    let moved = adv[last].as_f64().unwrap() + first;
    adv[0] = Value::from(0.0);
    adv[last] = Value::from(moved);
    std::fs::write(&result, serde_json::to_string(&doc).unwrap()).unwrap();

    let check = wassball(&["verify", "--input", &result]);
    assert_eq!(check.status.code(), Some(1));
    assert!(
        json(&check)["summary"]["budget_violations"]
            .as_u64()
            .unwrap()
            >= 1
    );
}

#[test]
fn post_processed_run_stays_in_the_cube() {
    let dir = TempDir::new().unwrap();
    let result = path(&dir, "run.json");
    let run = wassball(&[
        "attack",
        "--samples",
        "4",
        "--iterations",
        "10",
        "--epsilon",
        "0.3",
        "--post-process",
        "--out",
        &result,
    ]);
    assert!(run.status.success());
    let check = wassball(&["verify", "--input", &result]);
    assert_eq!(check.status.code(), Some(0));
    assert_eq!(json(&check)["summary"]["hypercube_violations"], 0);
}

#[test]
fn zero_iterations_and_zero_budget_keep_the_image() {
    for args in [
        vec!["attack", "--samples", "4", "--iterations", "0"],
        vec![
            "attack",
            "--samples",
            "4",
            "--epsilon",
            "0",
            "--method",
            "fw-dual-lmo",
        ],
    ] {
        let out = wassball(&args);
        assert!(out.status.success());
        let doc = json(&out);
        for s in doc["samples"].as_array().unwrap() {
            assert_eq!(s["original"], s["adversarial"]);
            assert_eq!(s["adversarial_label"], s["clean_label"]);
        }
        let summary = &doc["summary"];
        assert_eq!(summary["clean_accuracy"], summary["adversarial_accuracy"]);
    }
}

#[test]
fn csv_output() {
    let out = wassball(&[
        "--format",
        "csv",
        "attack",
        "--samples",
        "3",
        "--iterations",
        "2",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().starts_with("index,"));
}

#[test]
fn attack_reads_wadv_input() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("images.wadv");
    let data: Vec<f64> = (0..2 * 64).map(|i| ((i * 37) % 64) as f64 / 64.0).collect();
    write_images(&file, vec![2, 1, 8, 8], data);
    let out = wassball(&[
        "attack",
        "--input",
        file.to_str().unwrap(),
        "--iterations",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["shape"]["width"], 8);
    assert_eq!(doc["samples"].as_array().unwrap().len(), 2);
    assert_eq!(doc["summary"]["clean_accuracy"], 1.0);
}

#[test]
fn project_from_wadv_input() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("pair.wadv");
    let mut data = vec![0.0; 2 * 16];
    data[0] = 1.0;
    data[16 + 5] = 1.0;
    write_images(&file, vec![2, 1, 4, 4], data);
    let out = wassball(&[
        "project",
        "--input",
        file.to_str().unwrap(),
        "--epsilon",
        "0.5",
        "--k",
        "3",
        "--iterations",
        "2000",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["kind"], "project");
    // Source and target are one diagonal step apart.
    let w = doc["wasserstein_xb"].as_f64().unwrap();
    assert!((w - 2f64.sqrt()).abs() < 1e-9);
    assert!(doc["row"]["error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 4] = [
        &["attack", "--gamma", "0.01"],
        &["attack", "--epsilon=-1"],
        &["attack", "--method", "nope"],
        &["project", "--gamma", "0.1"],
    ];
    for args in cases {
        let out = wassball(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bad_input_files_exit_1() {
    let dir = TempDir::new().unwrap();
    let junk = path(&dir, "junk");
    std::fs::write(&junk, b"not an array").unwrap();
    assert_eq!(
        wassball(&["attack", "--input", &junk]).status.code(),
        Some(1)
    );
    assert_eq!(
        wassball(&["verify", "--input", &junk]).status.code(),
        Some(1)
    );
    let missing = path(&dir, "missing.json");
    assert_eq!(
        wassball(&["verify", "--input", &missing]).status.code(),
        Some(1)
    );
}

#[test]
fn small_dykstra_bench() {
    let dir = TempDir::new().unwrap();
    let trace = path(&dir, "residuals.csv");
    let out = wassball(&[
        "dykstra-bench",
        "--samples",
        "2",
        "--side",
        "3",
        "--k",
        "3",
        "--iterations",
        "500",
        "--trace",
        &trace,
    ]);
    assert!(out.status.success());
    let doc = json(&out);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
    assert_eq!(
        std::fs::read_to_string(&trace).unwrap().lines().count(),
        501
    );
}
