use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn optrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optrec"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn set_file(path: &Path) -> Vec<i64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn ruzsa_set_written_and_solution_free() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["construct", "ruzsa", "--a", "1,2,3,4,5", "--epsilon", "19/20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("ruzsa_set.json"));
    assert_eq!(r["report"]["verification"]["status"], "pass");
    assert_eq!(r["report"]["sidecar"]["L"], 884736);
    assert_eq!(r["run_config"]["params"]["a"], "1,2,3,4,5");
    assert!(r["version"].as_str().unwrap().starts_with("optrec "));

    // Values on a quadratic at a = 1..5: the first three fix the rest.
    let s = set_file(&dir.path().join("ruzsa_set.txt"));
    assert_eq!(s.len(), 12);
    for &b1 in &s {
        for &b2 in &s {
            for &b3 in &s {
                // Quadratic through (1,b1),(2,b2),(3,b3), evaluated at 4 and 5.
                let b4 = b1 - 3 * b2 + 3 * b3;
                let b5 = 3 * b1 - 8 * b2 + 6 * b3;
                if (b1, b2) != (b2, b3) && s.contains(&b4) && s.contains(&b5) {
                    panic!("solution {:?}", [b1, b2, b3, b4, b5]);
                }
            }
        }
    }
}

#[test]
fn ruzsa_at_half_hits_resource_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["construct", "ruzsa", "--a", "1,2,3,4,5", "--epsilon", "0.5"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("resource cap"));
}

#[test]
fn missing_a_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["construct", "ruzsa", "--epsilon", "0.5"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--a") && err.contains("Usage: optrec construct"));
    let o = optrec(dir.path(), &["construct", "nonsense"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn behrend_set_is_ap3_free() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["construct", "behrend", "--n", "1000"]);
    assert_eq!(code(&o), 0);
    let s = set_file(&dir.path().join("behrend_set.txt"));
    let members: HashSet<i64> = s.iter().copied().collect();
    assert!(s.iter().all(|&x| (0..1000).contains(&x)));
    for (i, &x) in s.iter().enumerate() {
        for &z in &s[i + 1..] {
            assert!((x + z) % 2 != 0 || !members.contains(&((x + z) / 2)));
        }
    }
    let r = json(&dir.path().join("behrend_set.json"));
    assert_eq!(r["report"]["cardinality"], s.len());
}

#[test]
fn prop113_passes_at_thousand() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["verify", "prop113", "--ell", "2", "--n", "1000", "--n-max", "1000"]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("verify_prop113.json"));
    assert_eq!(r["report"]["pass"], true);
    assert_eq!(r["report"]["verification"]["per_n"].as_array().unwrap().len(), 1000);
}

#[test]
fn prop113_rejects_large_ell() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["verify", "prop113", "--ell", "3", "--n", "1000"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds the bound"));
}

#[test]
fn thm15_reports_symbolic_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = optrec(dir.path(), &["verify", "thm15", "--a", "1,2,3,4,5", "--ell", "3", "--n-max", "200"]);
    assert_eq!(code(&o), 1);
    let v = &json(&dir.path().join("verify_thm15.json"))["report"]["verification"];
    assert_eq!(v["symbolic_holds"], false);
    assert_eq!(v["all_below_target"], true);
    assert_eq!(v["witness"], Value::Null);
}

#[test]
fn thm19_snapping_audit() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("E.txt");
    std::fs::write(&e, "0\n1\n2\n3\n").unwrap();
    for layout in ["paper", "wrap-free"] {
        let o = optrec(
            dir.path(),
            &["verify", "thm19", "--a", "1,2,3,4", "--set", e.to_str().unwrap(), "--n0", "4", "--layout", layout, "--trials", "2000000"],
        );
        assert_eq!(code(&o), 0);
        let r = json(&dir.path().join("verify_thm19.json"))["report"].clone();
        assert_eq!(r["violations"], 0);
        assert!(r["hits"].as_u64().unwrap() > 0);
    }
}

#[test]
fn density_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let e: Vec<i64> = (0..64).step_by(3).collect();
    let path = dir.path().join("E.txt");
    std::fs::write(&path, e.iter().map(|x| format!("{x}\n")).collect::<String>()).unwrap();
    let o = optrec(dir.path(), &["density", "--a", "0,2,3,4", "--set", path.to_str().unwrap(), "--n", "64"]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("density.json"));
    let solutions = |pts: &[i64]| {
        let mut c = 0u64;
        for &x in pts {
            for &y in pts {
                for &z in pts {
                    for &w in pts {
                        c += (x - 6 * y + 8 * z - 3 * w == 0) as u64;
                    }
                }
            }
        }
        c
    };
    let all: Vec<i64> = (0..64).collect();
    let (num, den) = (solutions(&e), solutions(&all));
    let d = &r["report"]["density"];
    assert_eq!(d["solution_count"], num.to_string());
    assert_eq!(d["denominator_count"], den.to_string());
}

#[test]
fn scan_is_deterministic_and_writes_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["scan", "--system", "weyl", "--family", "kn", "--k", "3", "--eps", "0.05", "--n-max", "2000"];
    assert_eq!(code(&optrec(a.path(), &args)), 0);
    assert_eq!(code(&optrec(b.path(), &args)), 0);
    let csv_a = std::fs::read(a.path().join("scan.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("scan.csv")).unwrap());
    assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), 2001);
    let (ja, jb) = (json(&a.path().join("scan.json")), json(&b.path().join("scan.json")));
    assert_eq!(ja["report"], jb["report"]);
    assert!(ja["report"]["max_gap"].as_u64().unwrap() >= 1);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# equidist run\nalpha=sqrt2\ndelta=0.1\nwindow=20000\nboxes=4\n").unwrap();
    let o = optrec(dir.path(), &["equidist", "--config", cfg.to_str().unwrap(), "--delta", "0.05"]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("equidist.json"));
    let p = &r["run_config"]["params"];
    assert_eq!(p["delta"], "0.05");
    assert_eq!(p["window"], "20000");
    assert_eq!(r["report"]["boxes"].as_array().unwrap().len(), 4);
    let first = std::fs::read(dir.path().join("equidist.json")).unwrap();
    optrec(dir.path(), &["equidist", "--config", cfg.to_str().unwrap(), "--delta", "0.05"]);
    assert_eq!(first, std::fs::read(dir.path().join("equidist.json")).unwrap());
}

#[test]
fn limit_runs_with_list_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("limit.cfg");
    std::fs::write(&cfg, "deltas=0.1\ndeltas=0.05\nwindow=200000\nsamples=4\nmin-members=1000\n").unwrap();
    let o = optrec(dir.path(), &["limit", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("limit.json"));
    assert_eq!(r["report"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(r["run_config"]["params"]["seed"], "7");
    assert_eq!(r["run_config"]["params"]["deltas"].as_array().unwrap().len(), 2);
}
