use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn plrf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plrf")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("sweep.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const TINY: &str = r#"
alpha = 0.7
beta = 0.7
d_list = [20, 40]
seeds = 2
horizon = 400
out_dir = "runs"
"#;

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_curves_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), TINY);
    let manifest = ok(&plrf(&["simulate", "--config", "sweep.toml"], tmp.path()));
    let runs = tmp.path().join("runs");
    let names = listing(&runs);
    assert_eq!(names.iter().filter(|n| n.starts_with("sgd_") && n.ends_with(".csv")).count(), 4, "{names:?}");
    assert_eq!(names.iter().filter(|n| n.starts_with("manifest_simulate_")).count(), 1);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join(manifest.trim())).unwrap()).unwrap();
    assert_eq!(m["config"]["d_list"], serde_json::json!([20, 40]));
    assert_eq!(m["runs"].as_array().unwrap().len(), 2);
    assert_eq!(m["manifest_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), TINY);
    ok(&plrf(&["simulate", "--config", "sweep.toml", "--jobs", "2"], tmp.path()));
    let runs = tmp.path().join("runs");
    let first: Vec<(String, Vec<u8>)> = listing(&runs).into_iter().map(|n| (n.clone(), std::fs::read(runs.join(&n)).unwrap())).collect();
    std::fs::remove_dir_all(&runs).unwrap();
    ok(&plrf(&["simulate", "--config", "sweep.toml", "--jobs", "1"], tmp.path()));
    let manifest = first.iter().find(|(n, _)| n.starts_with("manifest_")).unwrap().0.clone();
    let again: Vec<(String, Vec<u8>)> = listing(&runs).into_iter().map(|n| (n.clone(), std::fs::read(runs.join(&n)).unwrap())).collect();
    assert_eq!(first, again);

    // Reproduce from the manifest alone.
    std::fs::copy(runs.join(&manifest), tmp.path().join("m.json")).unwrap();
    std::fs::remove_dir_all(&runs).unwrap();
    ok(&plrf(&["simulate", "--config", "m.json"], tmp.path()));
    let third: Vec<(String, Vec<u8>)> = listing(&runs).into_iter().map(|n| (n.clone(), std::fs::read(runs.join(&n)).unwrap())).collect();
    assert_eq!(first, third);
}

#[test]
fn phase_json() {
    let tmp = tempfile::tempdir().unwrap();
    let v: serde_json::Value = serde_json::from_str(&ok(&plrf(&["phase", "0.7", "1.2"], tmp.path()))).unwrap();
    assert_eq!(v["phase"], "III");
    assert!((v["eta"].as_f64().unwrap() - 0.9 / 1.4).abs() < 1e-12);
    assert_eq!(v["xi"].as_f64().unwrap(), 0.5);
    let off: serde_json::Value = serde_json::from_str(&ok(&plrf(&["phase", "0.1", "0.2"], tmp.path()))).unwrap();
    assert_eq!(off["phase"], "NoPowerLaw");
    assert!(off["eta"].is_null());
}

#[test]
fn theory_without_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = ok(&plrf(&["theory", "--alpha", "0.7", "--beta", "0.6", "--d", "100", "--gamma", "0", "--horizon", "1000"], tmp.path()));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "r,F0,Fpp,Fac,Kpp,surrogate,argmax");
    let mut n = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let x: Vec<f64> = f[1..6].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(x[3], 0.0);
        assert_eq!(x[4], x[0].max(x[1]).max(x[2]));
        n += 1;
    }
    assert!(n > 10);
}

#[test]
fn naive_volterra_matches_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["volterra", "--alpha", "0.6", "--beta", "0.9", "--d-list", "50", "--horizon", "2000"];
    let mut a = base.to_vec();
    a.extend(["--out-dir", "fast"]);
    let mut b = base.to_vec();
    b.extend(["--out-dir", "naive", "--naive"]);
    ok(&plrf(&a, tmp.path()));
    ok(&plrf(&b, tmp.path()));
    let read = |dir: &str| {
        let name = listing(&tmp.path().join(dir)).into_iter().find(|n| n.ends_with(".csv")).unwrap();
        let f = std::fs::File::open(tmp.path().join(dir).join(name)).unwrap();
        plrf::problem::read_curves_csv(f).unwrap().remove(0)
    };
    let (fast, naive) = (read("fast"), read("naive"));
    assert_eq!(fast.points.len(), naive.points.len());
    for (p, q) in fast.points.iter().zip(&naive.points) {
        assert!((p.risk - q.risk).abs() <= 1e-10 * q.risk, "{} {}", p.risk, q.risk);
    }
}

#[test]
fn frontier_reads_simulate_and_volterra_output() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        r#"
alpha = 0.7
beta = 0.7
d_list = [20, 30, 40, 60]
seeds = 2
flops_budget = 2e5
window = [1e3, 1e5]
slices = 6
out_dir = "runs"
"#,
    );
    ok(&plrf(&["volterra", "--config", "sweep.toml"], tmp.path()));
    ok(&plrf(&["simulate", "--config", "sweep.toml"], tmp.path()));
    for src in ["volterra", "sgd"] {
        let out = ok(&plrf(
            &["frontier", "runs/*.csv", "--window", "1e3,1e5", "--slices", "6", "--source", src, "--out", "f.json"],
            tmp.path(),
        ));
        assert!(out.is_empty());
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("f.json")).unwrap()).unwrap();
        assert!(v["eta"]["eta_hat"].as_f64().unwrap() > 0.0, "{src}");
        assert_eq!(v["slices"].as_array().unwrap().len(), 6);
        assert!(v["xi"]["approach1"]["b"].is_number());
        assert_eq!(v["config"]["manifest_hashes"].as_array().unwrap().len(), 1);
    }
    // Mixed sources are refused without --source.
    let mixed = plrf(&["frontier", "runs/*.csv", "--window", "1e3,1e5"], tmp.path());
    assert_eq!(mixed.status.code(), Some(2));

    let sweep: serde_json::Value = serde_json::from_str(&ok(&plrf(&["sweep", "--config", "sweep.toml"], tmp.path()))).unwrap();
    assert!(sweep["volterra"]["eta"]["eta_hat"].is_number());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // Config errors: unsorted ladder, missing horizon, unknown key, bad flag.
    let unsorted = plrf(&["volterra", "--alpha", "0.7", "--beta", "0.7", "--d-list", "40,20", "--horizon", "10"], tmp.path());
    assert_eq!(unsorted.status.code(), Some(2));
    let no_horizon = plrf(&["volterra", "--alpha", "0.7", "--beta", "0.7", "--d-list", "20"], tmp.path());
    assert_eq!(no_horizon.status.code(), Some(2));
    write_config(tmp.path(), &format!("{TINY}\nlearning_rate = 1.0\n"));
    assert_eq!(plrf(&["simulate", "--config", "sweep.toml"], tmp.path()).status.code(), Some(2));
    assert_eq!(plrf(&["phase", "0.7"], tmp.path()).status.code(), Some(2));
    // Numerical failure: a learning rate above the stability threshold.
    let unstable =
        plrf(&["volterra", "--alpha", "0.7", "--beta", "0.7", "--d-list", "20", "--horizon", "10", "--gamma", "5"], tmp.path());
    assert_eq!(unstable.status.code(), Some(3), "{}", String::from_utf8_lossy(&unstable.stderr));
}
