use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distopt_cli::schema::{to_json, AnalysisReport, CarveoutReport, InstanceFile, RunReport};
use serde_json::Value;
use tempfile::TempDir;

fn distopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distopt")).args(args).env("DISTOPT_LOG", "error").output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FIVE_POINT: &str = r#"{
  "schema_version": 1,
  "points": [
    {"id": "c1", "c": 1.0, "p": 1.0, "n": 1.0},
    {"id": "c2", "c": 2.0, "p": 1.0, "n": 1.0},
    {"id": "c3", "c": 3.0, "p": 1.0, "n": 1.0},
    {"id": "c4", "c": 4.0, "p": 1.0, "n": 1.0},
    {"id": "c5", "c": 5.0, "p": 1.0, "n": 1.0}
  ],
  "participation": {"kind": "power", "zeta": 1.0, "alpha": 1.0}
}
"#;

fn five_point(dir: &TempDir) -> PathBuf {
    let p = dir.path().join("five.json");
    fs::write(&p, FIVE_POINT).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn optimize_five_point_instance() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = distopt(&["optimize", "--input", path(&five_point(&dir)), "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["d_star"]["n"], 4.0);
    let ids: Vec<&str> = r["d_star"]["points"].as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["c2", "c3", "c4", "c5"]);
    assert_eq!(r["probe"]["kappa"], -0.5);
    assert_eq!(r["verdict"]["kind"], "stay");
}

#[test]
fn report_summary_recomputes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    distopt(&["gen", "--seed", "11", "--size", "9", "--output", path(&dir.path().join("g.json"))]);
    let o = distopt(&["optimize", "--input", path(&dir.path().join("g.json")), "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let inst = json(&dir.path().join("g.json"));
    let r = json(&out);
    let pts = inst["points"].as_array().unwrap();
    let (mut n, mut c) = (0.0, 0.0);
    for w in r["d_star"]["points"].as_array().unwrap() {
        let p = pts.iter().find(|p| p["id"] == w["id"]).unwrap();
        n += w["n"].as_f64().unwrap();
        c += w["n"].as_f64().unwrap() * p["c"].as_f64().unwrap();
    }
    let q = c / n;
    let (zeta, alpha) = (inst["participation"]["zeta"].as_f64().unwrap(), inst["participation"]["alpha"].as_f64().unwrap());
    assert!((n - r["d_star"]["n"].as_f64().unwrap()).abs() <= 1e-9);
    assert!((q - r["d_star"]["q"].as_f64().unwrap()).abs() <= 1e-9);
    assert!((zeta * q.powf(alpha) - r["d_star"]["m"].as_f64().unwrap()).abs() <= 1e-9);
}

#[test]
fn malformed_json_exits_1_without_output() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"schema_version\": 1, \"points\": [").unwrap();
    let out = dir.path().join("report.json");
    let o = distopt(&["optimize", "--input", path(&bad), "--output", path(&out), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
    assert!(!dir.path().join("report.crossing.csv").exists());
}

#[test]
fn unknown_field_and_non_finite_values_are_rejected() {
    let dir = TempDir::new().unwrap();
    let extra = dir.path().join("extra.json");
    fs::write(&extra, FIVE_POINT.replacen("\"schema_version\": 1,", "\"schema_version\": 1, \"colour\": 3,", 1)).unwrap();
    assert_eq!(distopt(&["optimize", "--input", path(&extra)]).status.code(), Some(1));
    let version = dir.path().join("version.json");
    fs::write(&version, FIVE_POINT.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1)).unwrap();
    assert_eq!(distopt(&["optimize", "--input", path(&version)]).status.code(), Some(1));
    let huge = dir.path().join("huge.json");
    fs::write(&huge, FIVE_POINT.replacen("\"c\": 1.0", "\"c\": 1e999", 1)).unwrap();
    assert_eq!(distopt(&["optimize", "--input", path(&huge)]).status.code(), Some(1));
}

#[test]
fn csv_curves_have_fixed_headers() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run.json");
    let o = distopt(&["optimize", "--input", path(&five_point(&dir)), "--output", path(&out), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let crossing = fs::read_to_string(dir.path().join("run.crossing.csv")).unwrap();
    let thresholds = fs::read_to_string(dir.path().join("run.thresholds.csv")).unwrap();
    assert_eq!(crossing.lines().next(), Some("j,n,m"));
    assert_eq!(crossing.lines().count(), 6);
    assert_eq!(
        thresholds.lines().next(),
        Some("n_r2,x_l_kappa,x_u_kappa,alt_x_u_kappa,kappa_r2,kappa_ar2,tp1_ratio,tp2_ratio,tau")
    );
    assert!(thresholds.lines().count() > 1);
}

#[test]
fn csv_requires_an_output_path() {
    let dir = TempDir::new().unwrap();
    assert_eq!(distopt(&["optimize", "--input", path(&five_point(&dir)), "--format", "csv"]).status.code(), Some(1));
}

#[test]
fn gen_is_deterministic_by_seed() {
    let a = distopt(&["gen", "--seed", "42", "--size", "7"]);
    let b = distopt(&["gen", "--seed", "42", "--size", "7"]);
    let c = distopt(&["gen", "--seed", "43", "--size", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn gen_uniform_size_12() {
    let o = distopt(&["gen", "--seed", "5", "--size", "12", "--profile", "uniform"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 12);
    assert!(pts.iter().all(|p| p["n"].as_f64().unwrap() > 0.0));
}

#[test]
fn gen_rejects_bad_arguments() {
    assert_eq!(distopt(&["gen", "--profile", "lumpy"]).status.code(), Some(1));
    assert_eq!(distopt(&["gen", "--profile", "scenario:nonsense"]).status.code(), Some(1));
    assert_eq!(distopt(&["gen", "--size", "0"]).status.code(), Some(1));
}

#[test]
fn underserved_profile_exits_2() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let inst = dir.path().join(format!("u{seed}.json"));
        let out = dir.path().join(format!("u{seed}.report.json"));
        distopt(&["gen", "--seed", &seed.to_string(), "--size", "4", "--profile", "underserved", "--output", path(&inst)]);
        let o = distopt(&["optimize", "--input", path(&inst), "--output", path(&out)]);
        assert_eq!(o.status.code(), Some(2));
        assert_eq!(json(&out)["verdict"]["kind"], "underserved");
    }
}

#[test]
fn saturated_profile_exits_2() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("s.json");
    let out = dir.path().join("s.report.json");
    distopt(&["gen", "--seed", "1", "--size", "6", "--profile", "saturated", "--output", path(&inst)]);
    let o = distopt(&["optimize", "--input", path(&inst), "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out)["verdict"]["kind"], "saturated");
}

#[test]
fn analyze_c1_of_five_point() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.json");
    let o = distopt(&["analyze", "--input", path(&five_point(&dir)), "--r2", "c1", "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let a = json(&out);
    assert_eq!(a["thresholds"]["kappa_r2"], -0.5);
    assert_eq!(a["verdict"]["kind"], "stay");
    assert_eq!(a["verdict"]["is_nash"], true);
}

#[test]
fn analyze_rejects_points_in_d_star_and_unknown_ids() {
    let dir = TempDir::new().unwrap();
    let five = five_point(&dir);
    let inside = distopt(&["analyze", "--input", path(&five), "--r2", "c3"]);
    assert_eq!(inside.status.code(), Some(1));
    assert!(inside.stdout.is_empty());
    assert_eq!(distopt(&["analyze", "--input", path(&five), "--r2", "zz"]).status.code(), Some(1));
    assert_eq!(distopt(&["analyze", "--input", path(&five)]).status.code(), Some(1));
}

#[test]
fn scenario_instances_round_trip_through_analyze() {
    let dir = TempDir::new().unwrap();
    for kind in ["both_prefer", "consumer_prefers", "producer_prefers", "neither_prefers"] {
        let inst = dir.path().join(format!("{kind}.json"));
        let o = distopt(&["gen", "--seed", "3", "--profile", &format!("scenario:{kind}"), "--output", path(&inst)]);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(json(&inst)["candidate"].is_string());
        let out = dir.path().join(format!("{kind}.analysis.json"));
        let o = distopt(&["analyze", "--input", path(&inst), "--output", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&out)["verdict"]["kind"], kind);
    }
}

#[test]
fn scenario_stay_round_trips_through_optimize() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("stay.json");
    assert_eq!(distopt(&["gen", "--seed", "8", "--profile", "scenario:stay", "--output", path(&inst)]).status.code(), Some(0));
    let out = dir.path().join("stay.report.json");
    assert_eq!(distopt(&["optimize", "--input", path(&inst), "--output", path(&out)]).status.code(), Some(0));
    assert_eq!(json(&out)["verdict"]["kind"], "stay");
}

#[test]
fn carveout_reports_certificate() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("c.json");
    distopt(&["gen", "--seed", "2", "--profile", "scenario:consumer_prefers", "--output", path(&inst)]);
    let out = dir.path().join("c.carve.json");
    let o = distopt(&["carveout", "--input", path(&inst), "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&out);
    assert!(c["kappa"].is_number());
    if c["feasible"] == true {
        assert_eq!(c["certified"], true);
    }
}

#[test]
fn instance_files_round_trip_byte_identical() {
    let dir = TempDir::new().unwrap();
    for profile in ["uniform", "saturated", "scenario:producer_prefers"] {
        let a = dir.path().join("a.json");
        distopt(&["gen", "--seed", "9", "--size", "6", "--profile", profile, "--output", path(&a)]);
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(InstanceFile::parse(&text).unwrap().to_json(), text, "{profile}");
    }
}

fn round_trips<T: serde::de::DeserializeOwned + serde::Serialize>(p: &Path) {
    let text = fs::read_to_string(p).unwrap();
    let typed: T = serde_json::from_str(&text).unwrap();
    assert_eq!(to_json(&typed), text, "{}", p.display());
}

#[test]
fn reports_round_trip_byte_identical() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("i.json");
    distopt(&["gen", "--seed", "4", "--profile", "scenario:consumer_prefers", "--output", path(&inst)]);
    for input in [five_point(&dir), inst] {
        let out = dir.path().join("r.json");
        distopt(&["optimize", "--input", path(&input), "--output", path(&out)]);
        round_trips::<RunReport>(&out);
        let out = dir.path().join("c.json");
        distopt(&["carveout", "--input", path(&input), "--output", path(&out)]);
        round_trips::<CarveoutReport>(&out);
    }
    let out = dir.path().join("a.json");
    distopt(&["analyze", "--input", path(&five_point(&dir)), "--r2", "c1", "--output", path(&out)]);
    round_trips::<AnalysisReport>(&out);
}

#[test]
fn batch_writes_one_report_per_instance() {
    let dir = TempDir::new().unwrap();
    let inputs = dir.path().join("in");
    fs::create_dir(&inputs).unwrap();
    fs::write(inputs.join("five.json"), FIVE_POINT).unwrap();
    distopt(&["gen", "--seed", "1", "--size", "5", "--output", path(&inputs.join("g.json"))]);
    let outputs = dir.path().join("out");
    let o = distopt(&["optimize", "--batch", path(&inputs), "--output", path(&outputs)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&outputs.join("five.report.json"))["d_star"]["n"], 4.0);
    assert!(outputs.join("g.report.json").exists());
}

#[test]
fn batch_with_a_bad_file_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let inputs = dir.path().join("in");
    fs::create_dir(&inputs).unwrap();
    fs::write(inputs.join("a.json"), FIVE_POINT).unwrap();
    fs::write(inputs.join("b.json"), "not json").unwrap();
    let outputs = dir.path().join("out");
    assert_eq!(distopt(&["optimize", "--batch", path(&inputs), "--output", path(&outputs)]).status.code(), Some(1));
    assert!(!outputs.exists());
}

#[test]
fn oracle_check_passes_and_emits_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("oracle.json");
    let o = distopt(&["oracle-check", "--seed", "1", "--samples", "500", "--input", path(&five_point(&dir)), "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&out).is_object());
}
