use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use vcox::io::{export, ingest};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn vcox(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcox"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture_args<'a>(subjects: &'a str, longitudinal: &'a str) -> Vec<&'a str> {
    vec!["--subjects", subjects, "--longitudinal", longitudinal]
}

#[test]
fn fit_matches_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = (fixture("subjects.csv"), fixture("longitudinal.csv"));
    let mut args = vec!["fit"];
    args.extend(fixture_args(s.to_str().unwrap(), l.to_str().unwrap()));
    args.extend(["--h1", "0.2", "--h2", "0.25", "--grid-points", "7"]);
    let out = vcox(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let produced = fs::read(dir.path().join("fit.csv")).unwrap();
    let golden = fs::read(fixture("golden_fit.csv")).unwrap();
    assert_eq!(String::from_utf8(produced).unwrap(), String::from_utf8(golden).unwrap());
    let manifest = json(&dir.path().join("fit_manifest.json"));
    assert_eq!(manifest["data"]["n"], 80);
    assert_eq!(manifest["converged"], 7);
    assert_eq!(manifest["bandwidth"]["selected"], false);
}

#[test]
fn two_subject_fixture_ingests() {
    let data = ingest(&fixture("two_subjects.csv"), &fixture("two_longitudinal.csv"), None).unwrap();
    assert_eq!(data.n(), 2);
    assert_eq!(data.tau(), 0.62);
    assert_eq!(data.dim(), 1);
    let a = &data.subjects()[0];
    assert_eq!((a.id.as_str(), a.follow_up_time, a.event), ("A", 0.62, true));
    assert_eq!(a.obs_times(), &[0.10, 0.40]);
    assert_eq!((a.covariate(0)[0], a.covariate(1)[0]), (0.75, 1.25));
    let b = &data.subjects()[1];
    assert_eq!((b.id.as_str(), b.follow_up_time, b.event), ("B", 0.35, false));
    assert_eq!(b.obs_times(), &[0.05, 0.30]);
    assert_eq!((b.covariate(0)[0], b.covariate(1)[0]), (2.0, -0.5));
}

#[test]
fn row_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("longitudinal.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    lines.rotate_left(37);
    let shuffled = dir.path().join("shuffled.csv");
    fs::write(&shuffled, format!("{header}\n{}\n", lines.join("\n"))).unwrap();
    let a = ingest(&fixture("subjects.csv"), &fixture("longitudinal.csv"), None).unwrap();
    let b = ingest(&fixture("subjects.csv"), &shuffled, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ingest_export_ingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let a = ingest(&fixture("subjects.csv"), &fixture("longitudinal.csv"), None).unwrap();
    let (s, l) = (dir.path().join("s.csv"), dir.path().join("l.csv"));
    export(&a, &s, &l).unwrap();
    let b = ingest(&s, &l, Some(a.tau())).unwrap();
    assert_eq!(a, b);
    let (s2, l2) = (dir.path().join("s2.csv"), dir.path().join("l2.csv"));
    export(&b, &s2, &l2).unwrap();
    assert_eq!(fs::read(&s).unwrap(), fs::read(&s2).unwrap());
    assert_eq!(fs::read(&l).unwrap(), fs::read(&l2).unwrap());
}

#[test]
fn bad_subject_id_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,obs_time,z1\nA,0.1,1\nZ,0.2,3\n").unwrap();
    let s = fixture("two_subjects.csv");
    let mut args = vec!["fit"];
    args.extend(fixture_args(s.to_str().unwrap(), bad.to_str().unwrap()));
    args.extend(["--h1", "0.1", "--h2", "0.1"]);
    let out = vcox(dir.path(), &args);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "ingest");
    assert_eq!(err["context"]["command"], "fit");
    assert_eq!(err["context"]["row"], 3);
    assert_eq!(err["context"]["column"], "id");
    assert!(err["message"].as_str().unwrap().contains("unknown subject id 'Z'"));
    assert!(!dir.path().join("fit.csv").exists());
}

#[test]
fn invalid_bandwidth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = (fixture("subjects.csv"), fixture("longitudinal.csv"));
    let mut args = vec!["fit"];
    args.extend(fixture_args(s.to_str().unwrap(), l.to_str().unwrap()));
    args.extend(["--h1", "0.6", "--h2", "0.2"]);
    let out = vcox(dir.path(), &args);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "invalid_bandwidth");
}

#[test]
fn band_is_reproducible_from_the_command_line() {
    let (s, l) = (fixture("subjects.csv"), fixture("longitudinal.csv"));
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["scb"];
        args.extend(fixture_args(s.to_str().unwrap(), l.to_str().unwrap()));
        args.extend([
            "--h1",
            "0.2",
            "--h2",
            "0.25",
            "--grid-points",
            "15",
            "--B",
            "500",
            "--seed",
            seed,
        ]);
        let out = vcox(dir.path(), &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m = json(&dir.path().join("scb_manifest.json"));
        let band = fs::read_to_string(dir.path().join("band.csv")).unwrap();
        (m["c_alpha"].as_f64().unwrap(), band)
    };
    let (c1, b1) = run("11");
    let (c2, b2) = run("11");
    let (c3, _) = run("12");
    assert_eq!(c1.to_bits(), c2.to_bits());
    assert_eq!(b1, b2);
    assert_ne!(c1.to_bits(), c3.to_bits());
    assert!(b1.starts_with("s,estimate,scb_lo,scb_hi,ci_lo,ci_hi\n"));
    assert_eq!(b1.lines().count(), 16);
}

#[test]
fn simulate_then_select_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcox(dir.path(), &["simulate", "--n", "300", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("simulate_manifest.json"));
    assert_eq!(m["data"]["n"], 300);
    let s = dir.path().join("subjects.csv");
    let l = dir.path().join("longitudinal.csv");
    let data = ingest(&s, &l, Some(1.0)).unwrap();
    assert_eq!(data.n(), 300);

    let mut args = vec!["select-bandwidth"];
    args.extend(fixture_args(s.to_str().unwrap(), l.to_str().unwrap()));
    args.extend(["--per-axis", "4", "--tau", "1"]);
    let out = vcox(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("h1="), "{stdout}");
    let table = fs::read_to_string(dir.path().join("bandwidth_mse.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);

    let mut args = vec!["fit"];
    args.extend(fixture_args(s.to_str().unwrap(), l.to_str().unwrap()));
    args.extend([
        "--auto-bandwidth",
        "--per-axis",
        "4",
        "--tau",
        "1",
        "--grid-points",
        "10",
    ]);
    let out = vcox(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("fit_manifest.json"));
    assert_eq!(m["bandwidth"]["selected"], true);
}

#[test]
fn replicate_refuses_small_studies() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcox(dir.path(), &["replicate", "pointwise", "--reps", "10"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["context"]["command"], "replicate");
}

#[test]
fn replicate_writes_a_study_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcox(
        dir.path(),
        &[
            "replicate",
            "pointwise",
            "--reps",
            "100",
            "--n",
            "400",
            "--eval-points",
            "0.4,0.6",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("study.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let m = json(&dir.path().join("study_manifest.json"));
    assert_eq!(m["replications"], 100);
    assert!(m["config_hash"].as_str().unwrap().len() == 64);
}
