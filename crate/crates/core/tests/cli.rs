use std::fs;
use std::process::{Command, Output};

use ogalab::dictionary::Dictionary;

fn ogalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ogalab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_dict_reports_coherence_and_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let out = ogalab(&["gen-dict", "--family", "hadamard-union", "--k", "10", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("coherence 0.03125"), "{text}");
    assert!(text.contains("regime ceiling 1"), "{text}");
    let d = Dictionary::load(&path).unwrap();
    assert_eq!((d.len(), d.dim()), (2048, 1024));
}

#[test]
fn gen_dict_random_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = ogalab(&[
            "gen-dict", "--family", "random", "--dim", "64", "--count", "16", "--seed", "1", "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gen_dict_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    let out = ogalab(&["gen-dict", "--family", "hadamard-union", "--k", "14", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = ogalab(&["gen-dict", "--family", "random", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("rep.json");
    let trace = dir.path().join("tr.csv");
    let out = ogalab(&[
        "run", "--dict", "hadamard-union:k=10", "--m", "1", "--seeds", "0..4", "--report-out",
        report.to_str().unwrap(), "--trace-out", trace.to_str().unwrap(), "--workers", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let arr = json.as_array().unwrap();
    assert_eq!(arr.len(), 4);
    let seeds: Vec<u64> = arr.iter().map(|r| r["instance"]["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![0, 1, 2, 3]);
    assert_eq!(arr[0]["instance"]["coherence"].as_f64(), Some(0.03125));
    assert!(arr[0]["lebesgue"]["passed"].as_bool().unwrap());
    assert!(arr[0]["checks"].as_array().unwrap().len() > 10);

    let csv = fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("seed,kind,m,regime_ok"));
    let steps = fs::read_to_string(dir.path().join("tr_seed2.csv")).unwrap();
    assert!(steps.starts_with("n,selected_index,d_n,residual_norm"));
    let x = fs::read_to_string(dir.path().join("tr_seed2_x.csv")).unwrap();
    assert!(x.starts_with("n,i,x"));
}

#[test]
fn out_of_regime_run_exits_zero() {
    let out = ogalab(&["run", "--dict", "hadamard-union:k=6", "--m", "2", "--seeds", "0..5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("in regime 0"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let report = dir.path().join("r.json");
    fs::write(
        &cfg,
        format!("dict = orthonormal:dim=16\nm = 3\nseeds = 0..3\nreport_out = {}\n", report.display()),
    )
    .unwrap();
    let out = ogalab(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "5,6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let seeds: Vec<u64> = json.as_array().unwrap().iter().map(|r| r["instance"]["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![5, 6]);
    for r in json.as_array().unwrap() {
        assert!(r["lebesgue"]["ratio"].as_f64().is_none_or(|x| x <= 1.0));
    }
}

#[test]
fn run_rejects_bad_input() {
    assert_eq!(ogalab(&["run", "--dict", "orthonormal:dim=8", "--m", "1,2"]).status.code(), Some(2));
    assert_eq!(ogalab(&["run", "--dict", "orthonormal:dim=8", "--m", "0"]).status.code(), Some(2));
    assert_eq!(
        ogalab(&["run", "--dict", "hadamard-union:k=5", "--m", "3", "--budget", "10"]).status.code(),
        Some(2)
    );
    assert_eq!(ogalab(&["run", "--dict", "/nonexistent/d.csv", "--m", "1"]).status.code(), Some(2));
}

#[test]
fn sweep_covers_each_m() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("s.json");
    let out = ogalab(&[
        "sweep", "--dict", "orthonormal:dim=12", "--m", "1,2,3", "--seeds", "0..2", "--report-out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let ms: Vec<u64> = json.as_array().unwrap().iter().map(|r| r["instance"]["m"].as_u64().unwrap()).collect();
    assert_eq!(ms, vec![1, 1, 2, 2, 3, 3]);
}

#[test]
fn selftest_passes() {
    let out = ogalab(&["selftest"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
