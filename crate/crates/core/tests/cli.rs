use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use viscoflow::cli::report::{validate_report, TRACE_HEADER};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_viscoflow"));
    c.env_remove("VISCOFLOW_THREADS");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
    "name": "small-sphere",
    "ambient": {"kind": "euclidean", "dim": 3},
    "domain": {"kind": "sphere", "subdivision": 2},
    "initial": {"scale": 0.2, "perturbation": 0.2},
    "mode": "descend",
    "sigma": 0.05,
    "descent": {"max_iterations": 12},
    "diagnostics": {"samples_per_face": 1, "multiplicity": {"points": [[0.0, 0.0, 0.0]], "radius": 0.05}},
    "seed": 11
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_equatorial_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&scenario("equatorial-disk.json"), tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(tmp.path());
    let area = r["geometry"]["area"].as_f64().unwrap();
    assert!((area / std::f64::consts::PI - 1.0).abs() <= 0.01, "area {area}");
    let orth = r["orthogonality"]["max_degrees"].as_f64().unwrap();
    assert!(orth <= 5.0, "orthogonality {orth}");
    assert_eq!(r["mode"], "minmax");
    assert!(r["minmax"]["beta_estimate"].as_f64().unwrap() > area);
    assert!(tmp.path().join("checkpoints/minmax.obj").is_file());
    assert!(tmp.path().join("checkpoints/phase-01.obj.json").is_file());
    validate_report(&r).unwrap();
}

#[test]
fn bundled_shrinking_sphere() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&scenario("shrinking-sphere.json"), tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(tmp.path());
    let radius = r["geometry"]["rms_radius"].as_f64().unwrap();
    let target = 2f64.sqrt() * 0.05;
    assert!((radius / target - 1.0).abs() <= 0.01, "radius {radius}");
    assert_eq!(r["atoms"].as_array().unwrap().len(), 0);
    assert!(r["orthogonality"].is_null());
}

#[test]
fn unknown_ambient_kind_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("\"euclidean\"", "\"hyperbolic\""));
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("ambient") && msg.contains("hyperbolic"), "{msg}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_and_missing_fields_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("\"seed\"", "\"sede\""));
    let out = run(&cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sede"));

    let cfg = write_config(tmp.path(), &SMALL.replace("\"mode\": \"descend\",", ""));
    let out = run(&cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mode"), "{}", stderr(&out));

    let cfg = write_config(tmp.path(), &SMALL.replace("\"sigma\": 0.05,", ""));
    let out = run(&cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"), "{}", stderr(&out));
}

#[test]
fn check_only_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = run(&cfg, &tmp.path().join("out"), &["--check"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &[]).status.success());
    let single = bin().env("VISCOFLOW_THREADS", "1").arg("run").arg(&cfg).arg("--out").arg(&c).output().unwrap();
    assert!(single.status.success(), "{}", stderr(&single));

    let trace_a = std::fs::read(a.join("trace.csv")).unwrap();
    assert!(String::from_utf8_lossy(&trace_a).lines().count() > 2);
    for other in [&b, &c] {
        assert_eq!(trace_a, std::fs::read(other.join("trace.csv")).unwrap());
        assert_eq!(std::fs::read(a.join("final.obj")).unwrap(), std::fs::read(other.join("final.obj")).unwrap());
        assert_eq!(strip_timing(report(&a)), strip_timing(report(other)));
    }
    assert_eq!(report(&c)["timing"]["threads"], 1);
}

#[test]
fn seed_override_changes_the_perturbation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &["--seed", "12"]).status.success());
    assert_ne!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(report(&b)["seed"], 12);
    assert_eq!(report(&b)["scenario"]["seed"], 12);
}

#[test]
fn trace_header_and_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    assert!(run(&cfg, tmp.path(), &[]).status.success());
    let text = std::fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let r = report(tmp.path());
    assert_eq!(lines.count() as u64, r["iterations"].as_u64().unwrap());
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 10);
    }
}

#[test]
fn zero_iteration_run_writes_header_only_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("\"max_iterations\": 12", "\"max_iterations\": 0"));
    let out = run(&cfg, tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert_eq!(text, format!("{TRACE_HEADER}\n"));
}

#[test]
fn diagnose_a_stored_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let run_dir = tmp.path().join("run");
    assert!(run(&cfg, &run_dir, &[]).status.success());
    let diag_dir = tmp.path().join("diag");
    let out = bin()
        .arg("diagnose")
        .arg(run_dir.join("final.obj"))
        .arg(&cfg)
        .arg("--out")
        .arg(&diag_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let (r, d) = (report(&run_dir), report(&diag_dir));
    assert_eq!(d["mode"], "diagnose");
    assert_eq!(d["final_energy"], r["final_energy"]);
    assert_eq!(d["multiplicity"], r["multiplicity"]);
    assert_eq!(d["iterations"], 0);
}

#[test]
fn truncated_mesh_is_a_parse_error_naming_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let mesh = tmp.path().join("broken.obj");
    std::fs::write(&mesh, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2").unwrap();
    let out = bin().arg("diagnose").arg(&mesh).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("line 5"), "{msg}");
}

#[test]
fn unwritable_output_is_a_run_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = run(&cfg, &blocker.join("out"), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = bin().env("VISCOFLOW_THREADS", "zero").arg("run").arg(&cfg).arg("--check").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("VISCOFLOW_THREADS"));
}
