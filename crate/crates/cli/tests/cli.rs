use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn vsqs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsqs")).args(args).env("VSQS_THREADS", "1").output().unwrap()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_bundled_files() {
    for name in ["h2_d1.00.ham", "p4_d2.00.ham", "ising_n8_seed1.ham"] {
        let out = vsqs(&["validate", "--problem", path_str(&data(name))]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    }
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(vsqs(&["validate", "--problem", "/nonexistent.ham"]).status.code(), Some(2));
    assert_eq!(vsqs(&["sweep", "--times", "1,2"]).status.code(), Some(2));
    let h2 = data("h2_d1.00.ham");
    assert_eq!(vsqs(&["sweep", "--problem", path_str(&h2), "--times", "2,1"]).status.code(), Some(2));
    assert_eq!(vsqs(&["tca", "--problem", path_str(&h2), "--resolution", "0"]).status.code(), Some(2));
    assert_eq!(vsqs(&["sweep", "--problem", path_str(&h2), "--schedule", "5,1"]).status.code(), Some(2));
}

#[test]
fn failed_row_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    let h2 = format!("1.0={}", path_str(&data("h2_d1.00.ham")));
    let status = vsqs(&[
        "bondscan",
        "--method",
        "standard",
        "--bond-file",
        &h2,
        "--bond-file",
        "2.0=/nonexistent.ham",
        "--times",
        "5",
        "--out",
        path_str(&out),
    ])
    .status;
    assert_eq!(status.code(), Some(1));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().contains("io error"));
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "problem = {:?}\nmethod = \"vsqs\"\ntimes = [0.1, 0.3]\n\n[vsqs]\nsplit_count = 5\namplitude_bound = 10.0\n\n[vsqs.optimizer]\ntolerance = 1e-6\n",
            path_str(&data("h2_d1.00.ham"))
        ),
    )
    .unwrap();
    let out = dir.path().join("sweep.csv");
    let status = vsqs(&["sweep", "--config", path_str(&cfg), "--bound", "1", "--out", path_str(&out)]).status;
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["vsqs"]["amplitude_bound"], 1.0);
    assert_eq!(meta["config"]["vsqs"]["split_count"], 5);
    assert_eq!(meta["command"], "sweep");

    std::fs::write(&cfg, "problem = \"x\"\nunknown_key = 1\n").unwrap();
    assert_eq!(vsqs(&["sweep", "--config", path_str(&cfg)]).status.code(), Some(2));
}

#[test]
fn tca_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tca.csv");
    let h2 = data("h2_d1.00.ham");
    let args = [
        "tca",
        "--problem",
        path_str(&h2),
        "--schedule",
        "5,1,1",
        "--bound",
        "10",
        "--tmax",
        "0.5",
        "--grid-points",
        "5",
        "--resolution",
        "0.01",
        "--out",
        path_str(&out),
    ];
    assert_eq!(vsqs(&args).status.code(), Some(0));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tca.csv.json")).unwrap()).unwrap();
    let t = meta["t_ca"].as_f64().unwrap();
    assert!((0.1..=0.3).contains(&t));
    let first = std::fs::read(&out).unwrap();
    assert_eq!(vsqs(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn ising_gen_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ising.ham");
    assert_eq!(vsqs(&["ising-gen", "--seed", "1", "--out", path_str(&out)]).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(data("ising_n8_seed1.ham")).unwrap());
    assert_eq!(vsqs(&["ising-gen", "--per-layer", "2", "--seed", "1", "--out", path_str(&out)]).status.code(), Some(2));
}

#[test]
fn schedules_export_has_flag_column() {
    let out = vsqs(&[
        "schedules",
        "--problem",
        path_str(&data("h2_d1.00.ham")),
        "--method",
        "standard",
        "--t",
        "4",
        "--samples",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,A0,B0,nav_sign_change");
    assert_eq!(lines.len(), 7);
}

#[test]
fn sampled_energy_column() {
    let out = vsqs(&[
        "sweep",
        "--problem",
        path_str(&data("h2_d1.00.ham")),
        "--method",
        "standard",
        "--times",
        "20",
        "--shots",
        "100000",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()].parse::<f64>().unwrap();
    assert!((col("energy_sampled") - col("energy")).abs() < 0.01);
}
