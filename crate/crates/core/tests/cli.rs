use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cmtop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmtop")).args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cmtop-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn lax_appendix_r3_entry_13_is_g13() {
    let out = tmp("r3.json");
    let o = cmtop(&["lax", "--family", "appendix-R", "--N", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let e = v["entries"].as_array().unwrap().iter().find(|e| e["row"] == 1 && e["col"] == 3).unwrap();
    let terms = e["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 1);
    let poly = &terms[0]["poly"]["terms"];
    assert_eq!(poly.as_array().unwrap().len(), 1);
    assert_eq!(poly[0]["monomial"], serde_json::json!([[1, 3, 1]]));
    assert_eq!(poly[0]["coeff"][0]["re_num"], "1");
}

#[test]
fn lax_usage_errors() {
    assert_eq!(cmtop(&["lax", "--family", "trig", "--N", "1"]).status.code(), Some(2));
    assert_eq!(cmtop(&["lax", "--family", "appendix-T", "--N", "5"]).status.code(), Some(2));
    assert_eq!(cmtop(&["lax", "--family", "elliptic", "--N", "2"]).status.code(), Some(2));
    assert_eq!(cmtop(&["lax", "--family", "trig", "--N", "2"]).status.code(), Some(0));
}

#[test]
fn ham_appendix_r2() {
    let o = cmtop(&["ham", "--family", "appendix-R", "--N", "2", "--kmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let sel = v["selected"].as_array().unwrap();
    assert_eq!(sel[0]["central"], true);
    assert_eq!(sel[1]["index"], "z^1");
    assert_eq!(sel[1]["text"], "(2)·g11·g12 + (-2)·g12·g22");
}

#[test]
fn ham_kmax_one_is_central_and_explicit_index_works() {
    let v = stdout_json(&cmtop(&["ham", "--family", "appendix-T", "--N", "3", "--kmax", "1"]));
    assert_eq!(v["selected"][0]["central"], true);
    let v = stdout_json(&cmtop(&["ham", "--family", "appendix-T", "--N", "2", "--kmax", "2", "--index", "0"]));
    assert_eq!(v["selected"][1]["index"], "z^0");
    assert_eq!(v["selected"][1]["central"], false);
    assert_eq!(cmtop(&["ham", "--family", "appendix-T", "--N", "2", "--index", "top"]).status.code(), Some(2));
}

#[test]
fn commute_file_round_trip_and_tamper() {
    let out = tmp("t3.json");
    let o = cmtop(&["ham", "--family", "appendix-T", "--N", "3", "--kmax", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = cmtop(&["check", "commute", "--in", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["pass"], true);

    // perturb one coefficient of the printed H2
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/hamiltonians_R_N4.json");
    let o = cmtop(&["check", "commute", "--in", data]);
    assert_eq!(o.status.code(), Some(0));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data).unwrap()).unwrap();
    let c = &mut v["hamiltonians"]["2"]["terms"][0]["coeff"][0]["re_num"];
    let bumped = c.as_str().unwrap().parse::<i64>().unwrap() + 1;
    *c = Value::String(bumped.to_string());
    let bad = tmp("tampered.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = cmtop(&["check", "commute", "--in", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rep = stdout_json(&o);
    assert!(rep["pairs"].as_array().unwrap().iter().any(|p| p["status"] == "FAIL" && p["residual_terms"].as_u64().unwrap() > 0));
    assert_eq!(cmtop(&["check", "commute", "--in", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn against_paper_trig_2_reports_calibration() {
    let o = cmtop(&["check", "against-paper", "--family", "trig", "--N", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let h2 = &v["hamiltonians"][0];
    assert_eq!(h2["comparison"]["central"], true);
    assert_eq!(h2["laurent_z0"]["lambda"], "-2");
    assert_eq!(h2["laurent_z0"]["central"], true);
    for (fam, n) in [("trig", "3"), ("trig", "4"), ("rational", "2"), ("rational", "3"), ("rational", "4")] {
        assert_eq!(cmtop(&["check", "against-paper", "--family", fam, "--N", n]).status.code(), Some(0), "{fam} {n}");
    }
}

#[test]
fn verify_exit_codes_and_determinism() {
    assert_eq!(cmtop(&["verify", "--case", "sl2-rational", "--seed", "7"]).status.code(), Some(0));
    assert_eq!(cmtop(&["verify", "--case", "unknown", "--seed", "7"]).status.code(), Some(2));
    assert_eq!(cmtop(&["verify", "--case", "sl2-trig"]).status.code(), Some(2));
    let a = cmtop(&["verify", "--case", "limit-trig", "--N", "3", "--q", "1e-2,1e-4,1e-6", "--seed", "5"]);
    let b = cmtop(&["verify", "--case", "limit-trig", "--N", "3", "--q", "1e-2,1e-4,1e-6", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    let d: Vec<f64> = v["decay"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(cmtop(&["verify", "--case", "limit-trig", "--q", "1e-4,1e-2", "--seed", "1"]).status.code(), Some(2));
    // N = 2 rational limit does not reproduce the printed appendix matrix
    assert_eq!(cmtop(&["verify", "--case", "limit-rational", "--N", "2", "--seed", "1"]).status.code(), Some(1));
}

#[test]
fn evolve_writes_csv() {
    let out = tmp("traj.csv");
    let o = cmtop(&["evolve", "--N", "2", "--tau", "2i", "--dt", "1e-3", "--steps", "50", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(&out).unwrap();
    let headers = rd.headers().unwrap().clone();
    assert_eq!(&headers[0], "t");
    assert!(headers.iter().any(|h| h == "re_Omega2"));
    assert_eq!(rd.records().count(), 51);
    assert!(stdout_json(&o)["Omega2_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(cmtop(&["evolve", "--N", "2", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cmtop(&["evolve", "--N", "2", "--tau", "-1i", "--seed", "1", "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn evolve_conjugate_pair_is_constant() {
    let out = tmp("pair.csv");
    let o = cmtop(&["evolve", "--N", "3", "--init", "pair", "--steps", "100", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<Vec<f64>> = rd.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    let first = &rows[0];
    for r in &rows {
        for k in 1..first.len() - 1 {
            assert!((r[k] - first[k]).abs() < 1e-14);
        }
    }
}
