use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kmle::io::{read_dataset, read_models, ResultJson};
use kmle::kvars::score_series;
use serde_json::Value;
use tempfile::TempDir;

fn kmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmle")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kmle(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    kmle(args).status.code().expect("exit code")
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--m", "2", "--p", "2", "--k", "3", "--nc", "5", "--t", "100", "--seed", "7", "--out"];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_expected_files_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), "a", &[]);
    let b = simulate(tmp.path(), "b", &[]);
    let csvs = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv").count();
    assert_eq!(csvs, 15);
    assert!(a.join("manifest.json").exists() && a.join("truth.json").exists());
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let truth = json(&a.join("truth.json"));
    assert_eq!(truth["labels"].as_array().unwrap().len(), 15);
    assert_eq!(truth["models"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_rejects_snr_below_white_noise() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        code(&["simulate", "--m", "2", "--p", "2", "--k", "3", "--nc", "5", "--t", "100", "--snr-db", "-10", "--out", s(&out)]),
        2
    );
}

#[test]
fn oracle_clustering_recovers_truth() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let result = tmp.path().join("r.json");
    ok(&["cluster", s(&data), "--k", "3", "--p", "2", "--init", "oracle", "--out", s(&result)]);
    let parsed: ResultJson = serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
    assert!(parsed.labels.iter().all(|&l| (1..=3).contains(&l)));
    let metrics = tmp.path().join("m.json");
    ok(&["evaluate", s(&result), s(&data.join("truth.json")), "--out", s(&metrics)]);
    assert!(json(&metrics)["ari"].as_f64().unwrap() >= 0.9);
}

#[test]
fn single_cluster_is_one_step() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let out = ok(&["cluster", s(&data), "--k", "1", "--p", "2"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["iters"], 1);
    assert_eq!(v["clusters"].as_array().unwrap().len(), 1);
}

#[test]
fn threshold_with_no_qualifying_restart_exits_5() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    assert_eq!(
        code(&["cluster", s(&data), "--k", "3", "--p", "2", "--restarts", "10", "--loglik-threshold", "1e9"]),
        5
    );
    ok(&["cluster", s(&data), "--k", "3", "--p", "2", "--restarts", "10", "--loglik-threshold", "-1e12"]);
}

#[test]
fn degenerate_covariance_exits_4_unless_ridged() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("trend");
    fs::create_dir(&dir).unwrap();
    let mut files = Vec::new();
    for i in 0..4 {
        let name = format!("s{i}.csv");
        let rows: Vec<String> = (0..20).map(|t| format!("{}", t as f64 + i as f64)).collect();
        fs::write(dir.join(&name), rows.join("\n") + "\n").unwrap();
        files.push(name);
    }
    let manifest = serde_json::json!({"m": 1, "T": 20, "N": 4, "files": files});
    fs::write(dir.join("manifest.json"), manifest.to_string()).unwrap();
    assert_eq!(code(&["cluster", s(&dir), "--k", "1", "--p", "1"]), 4);
    ok(&["cluster", s(&dir), "--k", "1", "--p", "1", "--ridge"]);
}

#[test]
fn missing_and_malformed_inputs_exit_3() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&["cluster", s(&tmp.path().join("none")), "--k", "2", "--p", "1"]), 3);
    let data = simulate(tmp.path(), "d", &[]);
    fs::write(data.join("series_0001.csv"), "1,2\nfoo,3\n").unwrap();
    assert_eq!(code(&["cluster", s(&data), "--k", "2", "--p", "1"]), 3);
}

#[test]
fn single_cell_grid_writes_one_row() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let out = tmp.path().join("sel");
    ok(&["select", s(&data), "--k-grid", "3:1:3", "--p-grid", "2", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("bic.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "K,p,bic,loglik,status");
    assert_eq!(lines.len(), 2);
    let best = json(&out.join("best.json"));
    assert_eq!((best["K"].as_u64(), best["p"].as_u64()), (Some(3), Some(2)));
}

fn bic_rows(path: &Path) -> Vec<(u64, u64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn cyclic_search_stays_on_grid_and_never_beats_it() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let grid = tmp.path().join("grid");
    let cyc = tmp.path().join("cyc");
    ok(&["select", s(&data), "--k-grid", "1:1:4", "--p-grid", "1:1:3", "--out", s(&grid)]);
    ok(&["select", s(&data), "--k-grid", "1:1:4", "--p-grid", "1:1:3", "--mode", "cyclic", "--start", "2,2", "--out", s(&cyc)]);
    let full = bic_rows(&grid.join("bic.csv"));
    let visited = bic_rows(&cyc.join("bic.csv"));
    assert_eq!(full.len(), 12);
    for row in &visited {
        assert!(full.contains(row), "{row:?} not in the full grid");
    }
    let g = json(&grid.join("best.json"))["bic"].as_f64().unwrap();
    let c = json(&cyc.join("best.json"))["bic"].as_f64().unwrap();
    assert!(c >= g);
}

#[test]
fn bad_grid_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    assert_eq!(code(&["select", s(&data), "--k-grid", "2:x", "--p-grid", "1", "--out", s(&tmp.path().join("o"))]), 2);
}

#[test]
fn evaluate_examples() {
    let tmp = TempDir::new().unwrap();
    let write = |name: &str, text: &str| {
        let p = tmp.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let u = write("u.json", "[0,0,1,1]");
    let v = write("v.json", "[0,1,0,1]");
    let u1 = write("u1.json", r#"{"labels": [1,1,2,2]}"#);
    let short = write("s.json", "[0,1]");

    let same: Value = serde_json::from_slice(&ok(&["evaluate", s(&u), s(&u)]).stdout).unwrap();
    assert_eq!((same["ri"].as_f64(), same["ari"].as_f64(), same["nid"].as_f64()), (Some(1.0), Some(1.0), Some(0.0)));
    let cross: Value = serde_json::from_slice(&ok(&["evaluate", s(&u), s(&v)]).stdout).unwrap();
    assert_eq!(cross["ari"].as_f64(), Some(-0.5));
    assert_eq!(cross["nid"].as_f64(), Some(1.0));
    let a = ok(&["evaluate", s(&u), s(&v)]).stdout;
    let b = ok(&["evaluate", s(&u1), s(&v)]).stdout;
    assert_eq!(a, b);
    assert_eq!(code(&["evaluate", s(&u), s(&short)]), 2);
}

#[test]
fn scoring_reproduces_labels_and_library_scores() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let result = tmp.path().join("r.json");
    ok(&["cluster", s(&data), "--k", "3", "--p", "2", "--out", s(&result)]);
    let out = ok(&["score", s(&data), s(&result)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("D1,D2,D3,label"));
    let parsed: ResultJson = serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
    let dataset = read_dataset(&data).unwrap();
    let models = read_models(&result).unwrap();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3].parse::<usize>().unwrap(), parsed.labels[n]);
        for (k, m) in models.iter().enumerate() {
            let lib = score_series(dataset.get(n), m, 2).unwrap();
            let cli: f64 = f[k].parse().unwrap();
            assert!((cli - lib).abs() <= 1e-12 * lib.abs().max(1.0));
        }
    }
}

#[test]
fn single_model_scores_one_column() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let result = tmp.path().join("r.json");
    ok(&["cluster", s(&data), "--k", "1", "--p", "1", "--out", s(&result)]);
    let text = String::from_utf8(ok(&["score", s(&data), s(&result)]).stdout).unwrap();
    assert!(text.lines().all(|l| l.split(',').count() == 2));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn score_rejects_mismatched_dimension() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let other = tmp.path().join("o");
    ok(&["simulate", "--m", "3", "--p", "1", "--k", "2", "--nc", "2", "--t", "50", "--out", s(&other)]);
    assert_eq!(code(&["score", s(&data), s(&other.join("truth.json"))]), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "d", &[]);
    let one = ok(&["cluster", s(&data), "--k", "3", "--p", "2", "--restarts", "4", "--threads", "1"]).stdout;
    let four = ok(&["cluster", s(&data), "--k", "3", "--p", "2", "--restarts", "4", "--threads", "4"]).stdout;
    let a: ResultJson = serde_json::from_slice(&one).unwrap();
    let b: ResultJson = serde_json::from_slice(&four).unwrap();
    assert_eq!(a.labels, b.labels);
    for (x, y) in a.loglik_trace.iter().zip(&b.loglik_trace) {
        assert!((x - y).abs() <= 1e-9 * x.abs());
    }
}
