use std::path::Path;
use std::process::{Command, Output};

fn ark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ark")).args(args).output().expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

const SMALL: &str = "setting = \"linear_gauss_estimated\"\nn = 120\np = 30\nreplications = 4\nn_signals = 5\n";

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("setting1.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let outs: Vec<_> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for out in &outs {
        let o = ark(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["replications.csv", "summary.csv"] {
        assert_eq!(read(&outs[0].join(f)), read(&outs[1].join(f)), "{f}");
    }
    let rows = read(&outs[0].join("replications.csv"));
    assert_eq!(rows.lines().count(), 5);
    assert!(rows.starts_with("rep,fdp,power,n_selected"));

    let json = dir.path().join("json");
    let o = ark(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "json", "--out", json.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(&json.join("report.json"))).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert!(v.get("wall_seconds").is_none());
}

#[test]
fn missing_config_names_the_flag() {
    let o = ark(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    let o = ark(&["simulate", "--config", "/nonexistent/setting.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/setting.toml"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("replications = 4", "replications = 0")).unwrap();
    let o = ark(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn select_matches_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.csv");
    std::fs::write(&w, "j,w\n1,3\n2,2\n3,-1\n4,5\n").unwrap();
    let truth = dir.path().join("truth.txt");
    std::fs::write(&truth, "1 2 3").unwrap();
    let o = ark(&[
        "select", "--w", w.to_str().unwrap(), "--q", "0.5", "--truth", truth.to_str().unwrap(), "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("selection.csv"));
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "fdr");
    assert_eq!(row[3], "1");
    assert_eq!(row[4], "3");
    assert_eq!(row[7], "1 2 4");
    let fdp: f64 = row[5].parse().unwrap();
    assert!((fdp - 1.0 / 3.0).abs() < 1e-12);

    let o = ark(&["select", "--w", w.to_str().unwrap(), "--rule", "kfwer", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "kfwer without --k");
}

#[test]
fn knockoffs_and_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = ark_knockoffs::rng::normal_matrix(80, 6, 3);
    let xp = dir.path().join("x.csv");
    ark_knockoffs::harness::io::write_matrix(&xp, &x).unwrap();
    let y: Vec<String> = (0..80).map(|i| format!("{}", x[[i, 0]] * 2.0 + (i % 3) as f64 * 0.1)).collect();
    let yp = dir.path().join("y.csv");
    std::fs::write(&yp, y.join("\n")).unwrap();
    let out = dir.path().join("ko");
    let o = ark(&[
        "knockoffs", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--seed", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let x_hat = ark_knockoffs::harness::io::read_matrix(&out.join("x_hat.csv")).unwrap();
    assert_eq!(x_hat.dim(), (80, 6));
    let w = ark_knockoffs::harness::io::read_stats(&out.join("w.csv")).unwrap();
    assert_eq!(w.len(), 6);
    assert!(w[0] > 0.0);

    let xh = out.join("x_hat.csv");
    let o = ark(&[
        "diagnose", "--x-hat", xh.to_str().unwrap(), "--x-tilde", xh.to_str().unwrap(), "--x", xp.to_str().unwrap(),
        "--nu", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&read(&out.join("coupling.json"))).unwrap();
    assert_eq!(rep["norm_1_2"].as_f64(), Some(0.0));
    assert_eq!(read(&out.join("kl.csv")).lines().count(), 7);
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let xp = dir.path().join("x.csv");
    std::fs::write(&xp, "1,2\n3,4\n5,7\n").unwrap();
    let sp = dir.path().join("sigma.csv");
    std::fs::write(&sp, "1,2\n2,1\n").unwrap();
    let o = ark(&["knockoffs", "--x", xp.to_str().unwrap(), "--sigma", sp.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
