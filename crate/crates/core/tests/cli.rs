use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn darklock(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darklock"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn keygen(dir: &Path, seed: &str, n: &str) -> Output {
    darklock(dir, &["--seed", seed, "keygen", "--n", n])
}

#[test]
fn keygen_writes_key_and_lock() {
    let dir = TempDir::new().unwrap();
    let o = keygen(dir.path(), "5", "4");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let key = read_json(&dir.path().join("key.json"));
    assert_eq!(key["n_atoms"], 4);
    assert_eq!(key["pairs"].as_array().unwrap().len(), 2);
    assert_eq!(key["meta"]["seed"], 5);
    let lock = read_json(&dir.path().join("lock.json"));
    assert!(lock["dark_residual"].as_f64().unwrap() < 1e-12);
    let nonzero = lock["state"]["amplitudes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a[0].as_f64().unwrap().hypot(a[1].as_f64().unwrap()) > 1e-12)
        .count();
    assert_eq!(nonzero, 4);

    let again = TempDir::new().unwrap();
    keygen(again.path(), "5", "4");
    for f in ["key.json", "lock.json"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
    let odd = keygen(again.path(), "5", "3");
    assert_eq!(odd.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&odd.stderr).starts_with("error:"));
}

#[test]
fn verify_accepts_key_and_names_failing_pair() {
    let dir = TempDir::new().unwrap();
    keygen(dir.path(), "11", "4");
    let lock = dir.path().join("lock.json");
    let key_path = dir.path().join("key.json");
    let (l, k) = (lock.to_str().unwrap(), key_path.to_str().unwrap());
    for mode in ["abstract", "exact"] {
        let o = darklock(dir.path(), &["--seed", "1", "verify", "--lock", l, "--password", k, "--mode", mode]);
        assert_eq!(o.status.code(), Some(0), "{mode}");
        assert_eq!(stdout(&o).trim(), "accept");
        let t = read_json(&dir.path().join("transcript.json"));
        assert_eq!(t["decision"], "accept");
        assert_eq!(t["mode"], mode);
    }

    // Re-pair the two key pairs crosswise.
    let key = read_json(&key_path);
    let p: Vec<Vec<u64>> = serde_json::from_value(key["pairs"].clone()).unwrap();
    let (a, b, c, d) = (p[0][0], p[0][1], p[1][0], p[1][1]);
    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, format!(r#"{{"n_atoms": 4, "pairs": [[{a}, {c}], [{b}, {d}]]}}"#)).unwrap();
    let o = darklock(dir.path(), &["--seed", "1", "verify", "--lock", l, "--password", wrong.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), format!("reject: pair ({a}, {c}) failed"));
    let t = read_json(&dir.path().join("transcript.json"));
    assert_eq!(t["rejecting_pair"], serde_json::json!([a, c]));

    let six = dir.path().join("six.json");
    std::fs::write(&six, r#"{"n_atoms": 6, "pairs": [[0, 1], [2, 3], [4, 5]]}"#).unwrap();
    let o = darklock(dir.path(), &["--seed", "1", "verify", "--lock", l, "--password", six.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prep_sweep_grid_is_reproducible() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let o = darklock(
            dir.path(),
            &["--seed", "3", "prep-sweep", "--ds-range", "0,0.004,3", "--dg-range", "0,0.002,3"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    };
    let (a, b) = (run(), run());
    let csv = std::fs::read_to_string(a.path().join("prep_sweep.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 9);
    let zero = records.iter().find(|r| &r[0] == "0.0" && &r[1] == "0.0").unwrap();
    assert!(zero[3].parse::<f64>().unwrap() < 1e-28);
    assert!(records.iter().filter(|r| r != &zero).all(|r| r[3].parse::<f64>().unwrap() > 0.0));
    for f in ["prep_sweep.csv", "prep_sweep.meta.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn analyze_reports_key_space() {
    let dir = TempDir::new().unwrap();
    let o = darklock(dir.path(), &["--seed", "2", "analyze", "--n", "24", "--trials", "100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("matchings: 316234143225"));
    assert!(text.contains("guess probability: 3.1622e-12"));
    assert!(text.contains("meets 1e-8 target: true"));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["matchings_count"], "316234143225");
    assert_eq!(report["minimal_n_for_target"], 20);

    let o = darklock(dir.path(), &["--seed", "2", "analyze", "--n", "4", "--trials", "10000"]);
    assert!(o.status.success());
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["adversary"], "one-pair-off");
    assert_eq!(report["grid"][0]["far"], 0.0);

    let o = darklock(dir.path(), &["--seed", "2", "analyze", "--n", "4", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_ignore_thread_count() {
    let run = |threads: &str| {
        let dir = TempDir::new().unwrap();
        let o = darklock(
            dir.path(),
            &[
                "--seed", "9", "--threads", threads, "analyze", "--n", "6", "--trials", "4000", "--eta1", "0.6,1",
                "--epsilon", "0.02", "--adversary", "random-password",
            ],
        );
        assert!(o.status.success());
        let o = darklock(dir.path(), &["--seed", "9", "--threads", threads, "prep-sweep", "--ds-range", "0.001,0.003,2", "--samples", "500"]);
        assert!(o.status.success());
        dir
    };
    let (one, four) = (run("1"), run("4"));
    for f in ["report.json", "report.csv", "prep_sweep.csv", "prep_sweep.meta.json"] {
        assert_eq!(std::fs::read(one.path().join(f)).unwrap(), std::fs::read(four.path().join(f)).unwrap(), "{f}");
    }
    let o = darklock(one.path(), &["--seed", "9", "--threads", "0", "spectrum", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_seed_is_reported() {
    let dir = TempDir::new().unwrap();
    let o = darklock(dir.path(), &["keygen", "--n", "2"]);
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let seed: u64 = err.lines().find_map(|l| l.strip_prefix("seed: ")).unwrap().parse().unwrap();
    assert_eq!(read_json(&dir.path().join("key.json"))["meta"]["seed"], seed);
}
