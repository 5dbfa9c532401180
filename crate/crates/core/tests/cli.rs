mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{cli_exe, plugin_cmd, read_tree};
use evbench::fixture::{write_fixture_dataset, FixtureSpec};

fn run(args: &[&str]) -> Output {
    Command::new(cli_exe()).args(args).env_remove("EVB_SEED").output().unwrap()
}

fn fixture(dir: &Path) -> String {
    let specs = vec![
        FixtureSpec { step: 0.005, ..FixtureSpec::new("a", 32, 24, 0.4, 1) },
        FixtureSpec { step: 0.005, ..FixtureSpec::new("b", 32, 20, 0.4, 2) },
        FixtureSpec { step: 0.005, ..FixtureSpec::new("c", 32, 24, 0.4, 3) },
    ];
    write_fixture_dataset(dir, &specs).unwrap().to_string_lossy().into_owned()
}

#[test]
fn convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("in.txt");
    std::fs::write(&text, "# t x y p\n0.1 1 2 1\n0.123456789012 3 0 0\n0.5 0 1 -1\n").unwrap();
    let bin = dir.path().join("ev.evt1");
    let back = dir.path().join("back.txt");
    let out = run(&["convert", text.to_str().unwrap(), bin.to_str().unwrap(), "--width", "4", "--height", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run(&["convert", bin.to_str().unwrap(), back.to_str().unwrap()]).status.success());
    let parse = |s: &str| -> Vec<(f64, u16, u16, i8)> {
        s.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                let p: i8 = f[3].parse().unwrap();
                (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), if p > 0 { 1 } else { -1 })
            })
            .collect()
    };
    let a = parse(&std::fs::read_to_string(&text).unwrap());
    let b = parse(&std::fs::read_to_string(&back).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.0 - y.0).abs() <= 1e-9 * x.0.abs().max(1.0));
        assert_eq!((x.1, x.2, x.3), (y.1, y.2, y.3));
    }
}

#[test]
fn convert_rejects_out_of_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("in.txt");
    std::fs::write(&text, "0.1 9 2 1\n").unwrap();
    let out = run(&["convert", text.to_str().unwrap(), dir.path().join("o.evt1").to_str().unwrap(), "--width", "4", "--height", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn eval_writes_bundle_and_report_rerenders_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&["eval", "--config", &config, "--out-dir", out_dir.to_str().unwrap(), "--montage-stride", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("results.json").exists());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sequences"].as_array().unwrap().len(), 6);
    assert_eq!(summary["datasets"].as_array().unwrap().len(), 2);

    let strip = std::fs::read(out_dir.join("montage/voxel_collapse__synthetic__a/000000.pgm")).unwrap();
    assert!(strip.starts_with(b"P5\n96 24\n255\n"));

    let again = dir.path().join("again");
    let out = run(&["report", "--results", out_dir.to_str().unwrap(), "--out-dir", again.to_str().unwrap()]);
    assert!(out.status.success());
    let original: Vec<_> = read_tree(&out_dir).into_iter().filter(|(p, _)| !p.starts_with("montage") && !p.ends_with("results.json")).collect();
    assert_eq!(read_tree(&again), original);
}

#[test]
fn missing_config_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    std::fs::remove_dir_all(dir.path().join("b/frames")).unwrap();
    let out = run(&["eval", "--config", &config, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["eval", "--config", "/nonexistent.json", "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn partial_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = fixture(dir.path());
    let mut config: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    config["reconstructors"] = serde_json::json!([{ "name": "p", "plugin": plugin_cmd(&["crash-height", "20"]) }]);
    std::fs::write(&path, config.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["eval", "--config", &path, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    let failed: Vec<bool> = summary["sequences"].as_array().unwrap().iter().map(|s| s["failed"].as_bool().unwrap()).collect();
    assert_eq!(failed, vec![false, true, false]);
}

#[test]
fn sweeps_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out_dir = dir.path().join("count");
    let out = Command::new(cli_exe())
        .args(["sweep", "count", "--config", &config, "--values", "100,400"])
        .env("EVB_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["points"].as_array().unwrap().len(), 2);
    assert!(out_dir.join("point_01/summary.json").exists());

    let rate_dir = dir.path().join("rate");
    assert!(run(&["sweep", "rate", "--config", &config, "--out-dir", rate_dir.to_str().unwrap()]).status.success());
    let csv = std::fs::read_to_string(rate_dir.join("rates.csv")).unwrap();
    // header plus 10 bins for each of two reconstructors
    assert_eq!(csv.lines().count(), 21);

    let bad = run(&["sweep", "discard", "--config", &config, "--out-dir", rate_dir.to_str().unwrap(), "--values", "0.5,1.0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_flag_and_env_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["eval", "--config", &config, "--out-dir", a.to_str().unwrap(), "--seed", "7", "--noise-rate", "0.5"]).status.success());
    let out = Command::new(cli_exe())
        .args(["eval", "--config", &config, "--out-dir", b.to_str().unwrap(), "--noise-rate", "0.5"])
        .env("EVB_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
}
