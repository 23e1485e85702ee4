use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfif::paths::csv::read_path_file;

const N2: &str = r#"
n = 2
horizon = 0.8
dt = 1e-4
alpha = 0.5
drift_kind = "constant"
drift_params = [1.0]
init_kind = "points"
init_params = [0.0, 0.5]
epsilon0 = 0.5
noise_scale = 0.0
record_trajectories = true
"#;

const NOISY: &str = r#"
n = 200
horizon = 0.5
dt = 1e-3
alpha = 0.5
init_kind = "uniform"
init_params = [0.0, 0.8]
epsilon0 = 0.2
record_trajectories = true
record_cap = 3
delta = 0.05
replicas = 200
record_replicas = 2
"#;

fn mfif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfif")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_str().unwrap().to_string();
        files.push((rel, fs::read(&entry).unwrap()));
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn deterministic_pair_steps_at_half_and_three_quarters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n2.toml", N2);
    let out = tmp.path().join("out");
    let res = mfif(&[
        "simulate-particles",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let ebar = read_path_file(&out.join("ebar.csv")).unwrap();
    let jumps: Vec<(f64, f64, f64)> = ebar.jumps().collect();
    assert_eq!(jumps.len(), 2);
    assert!((jumps[0].0 - 0.5).abs() <= 1e-4 + 1e-12);
    assert!((jumps[1].0 - 0.75).abs() <= 1e-4 + 1e-12);
    assert_eq!((jumps[0].2, jumps[1].2), (0.5, 1.0));

    let events = fs::read_to_string(out.join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 2);
    let jumps_csv = fs::read_to_string(out.join("jumps.csv")).unwrap();
    assert!(jumps_csv.starts_with("t,size,criterion_pass\n"));
    assert_eq!(jumps_csv.lines().count(), 3);

    // particle 0 is kicked by the first spike, then resets from 1 to 0.25
    let x0 = read_path_file(&out.join("particle_0.csv")).unwrap();
    let x0_jumps: Vec<(f64, f64, f64)> = x0.jumps().collect();
    assert_eq!(x0_jumps.len(), 2);
    assert!((x0_jumps[0].2 - x0_jumps[0].1 - 0.25).abs() < 1e-12);
    assert!((x0_jumps[1].1 - 1.0).abs() < 2e-4);
    assert!((x0_jumps[1].2 - 0.25).abs() < 2e-4);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy.toml", NOISY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["simulate-particles", "simulate-delayed"] {
            let out = dir.join(cmd);
            let res = mfif(&[
                cmd,
                "--config",
                &cfg,
                "--out-dir",
                out.to_str().unwrap(),
                "--seeds",
                "4,9",
                "--threads",
                threads,
            ]);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        }
    }
    let fa = read_dir_sorted(&a);
    assert!(fa.iter().any(|(n, _)| n == "simulate-particles/seed_9/particle_2.csv"));
    assert!(fa.iter().any(|(n, _)| n == "simulate-delayed/seed_4/replica_1.csv"));
    assert_eq!(fa, read_dir_sorted(&b));
}

#[test]
fn path_outputs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy.toml", NOISY);
    let out = tmp.path().join("out");
    let res = mfif(&[
        "simulate-particles",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    for name in ["ebar.csv", "particle_0.csv", "particle_2.csv"] {
        let p = out.join(name);
        let path = read_path_file(&p).unwrap();
        let mut buf = Vec::new();
        mfif::paths::csv::write_path(&path, &mut buf).unwrap();
        assert_eq!(buf, fs::read(&p).unwrap(), "{name}");
    }
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let typo = write_config(tmp.path(), "typo.toml", &N2.replace("alpha", "alhpa"));
    let res = mfif(&["simulate-particles", "--config", &typo, "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("alhpa"));

    let bad_alpha = write_config(tmp.path(), "alpha.toml", &N2.replace("alpha = 0.5", "alpha = 1.5"));
    let res = mfif(&["simulate-particles", "--config", &bad_alpha, "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));

    let empty = write_config(
        tmp.path(),
        "sweep.toml",
        &format!("{NOISY}sweep_axis = \"n\"\nsweep_values = []\n"),
    );
    let res = mfif(&["sweep", "--config", &empty, "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sweep_values"));

    let res = mfif(&[
        "simulate-particles",
        "--config",
        "/nonexistent/cfg.toml",
        "--out-dir",
        out,
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn exploding_run_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "boom.toml",
        r#"
        n = 10
        horizon = 1.0
        dt = 0.1
        alpha = 0.5
        drift_kind = "affine"
        drift_params = [-1e300, 0.0]
        init_kind = "point_mass"
        init_params = [-1e10]
        epsilon0 = 0.5
        "#,
    );
    let out = tmp.path().join("out");
    let res = mfif(&[
        "simulate-particles",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("step"));
}

#[test]
fn cascade_check_prints_rounds() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("state.txt"), "1.0\n0.8\n0.55\n0.1\n").unwrap();
    let cfg = write_config(tmp.path(), "cc.toml", "alpha = 0.8\nstate_file = \"state.txt\"\n");
    let res = mfif(&["cascade-check", "--config", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    // kicks of 0.2 per spike: 1.0 fires, then 0.8, then 0.55 + 0.4 < 1 stops
    assert!(stdout.contains("gamma: [0, 1]"), "{stdout}");
    assert!(stdout.contains("rounds: [[0], [1]]"), "{stdout}");
    assert!(stdout.contains("cascade_size_inf: 2"), "{stdout}");
    assert!(stdout.contains("jump_fraction: 0.5"), "{stdout}");
}

#[test]
fn sweep_over_n_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        &format!("{NOISY}sweep_axis = \"n\"\nsweep_values = [50, 100, 400]\nm1_resolution = 200\n"),
    );
    let out = tmp.path().join("out");
    let res = mfif(&[
        "sweep",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--seeds",
        "1,2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reference"], "n_400");
    let groups = report["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["label"], "n_50");
    assert_eq!(groups[0]["paired"], true);
    assert!(out.join("n_100/seed_2/ebar.csv").exists());
    assert!(out.join("n_400/seed_1/ebar.csv").exists());
}

#[test]
fn compare_reads_curve_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy.toml", NOISY);
    let out = tmp.path().join("runs");
    let res = mfif(&[
        "simulate-particles",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--seeds",
        "1,2,3",
    ]);
    assert!(res.status.success());
    let cmp = write_config(
        tmp.path(),
        "cmp.toml",
        r#"
        curve_files = ["runs/seed_1/ebar.csv", "runs/seed_2/ebar.csv"]
        curve_labels = ["a", "a"]
        reference_files = ["runs/seed_3/ebar.csv"]
        m1_resolution = 200
        "#,
    );
    let report_dir = tmp.path().join("cmp");
    let res = mfif(&["compare", "--config", &cmp, "--out-dir", report_dir.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["groups"][0]["seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn dry_run_reports_grid_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n2.toml", N2);
    let res = mfif(&["simulate-particles", "--config", &cfg, "--dry-run"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["runs"][0]["steps"], 8000);
    assert!(v["runs"][0]["memory_estimate_bytes"].as_u64().unwrap() > 0);
}

#[test]
fn delay_sweep_uses_particle_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "delta.toml",
        &format!("{NOISY}sweep_axis = \"delta\"\nsweep_values = [0.05, 0.1]\nm1_resolution = 200\n"),
    );
    let out = tmp.path().join("out");
    let res = mfif(&["sweep", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let labels: Vec<&str> = report["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["delta_0.1", "delta_0.05"]);
    assert!(out.join("reference/seed_0/ebar.csv").exists());
    assert!(out.join("delta_0.05/seed_0/e_delta.csv").exists());
}
