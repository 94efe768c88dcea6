use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csq_core::ModelSpec;
use serde_json::Value;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn csq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csq")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn stability_of_symmetric_model() {
    let out = csq(&["stability", &model("symmetric.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["rho"], 0.5);
    assert_eq!(v["verdict"], "Stable");
}

#[test]
fn validate_lists_violations_and_exits_1() {
    let out = csq(&["validate", &model("bad.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["valid"], false);
    let kinds: Vec<&str> = v["violations"].as_array().unwrap().iter().map(|x| x["violation"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"negative_rate"), "{kinds:?}");

    let out = csq(&["validate", &model("symmetric.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["valid"], true);
}

#[test]
fn analysis_of_invalid_model_exits_1() {
    assert_eq!(csq(&["stability", &model("bad.json")]).status.code(), Some(1));
    assert_eq!(csq(&["stability", "no/such/model.json"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_64() {
    let out = csq(&["stability", &model("symmetric.json"), "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
    assert_eq!(csq(&["simulate", &model("symmetric.json")]).status.code(), Some(64), "seed is mandatory");
    assert_eq!(csq(&["fluid", &model("symmetric.json"), "--q0", "1"]).status.code(), Some(64));
    assert_eq!(csq(&["tail", &model("pareto.json"), "--seed", "1", "--class", "3"]).status.code(), Some(64));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(csq(&["--help"]).status.code(), Some(0));
    assert_eq!(csq(&["--version"]).status.code(), Some(0));
}

#[test]
fn numeric_failure_exits_2() {
    // no Pareto class, so there is no reference tail
    let out = csq(&["tail", &model("symmetric.json"), "--seed", "1", "--class", "1", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lst_columns_are_non_increasing() {
    let out = csq(&["--format", "csv", "lst", &model("pareto.json"), "--theta-min", "1e-3", "--points", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(reader.headers().unwrap(), vec!["theta", "g_1", "g_2", "residual"]);
    let rows: Vec<Vec<f64>> =
        reader.records().map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 16);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        for col in 1..=2 {
            assert!(w[1][col] <= w[0][col], "{:?} then {:?}", w[0], w[1]);
            assert!((0.0..=1.0).contains(&w[1][col]));
        }
    }
}

#[test]
fn fluid_drains_at_lyapunov_time() {
    let out = csq(&["fluid", &model("symmetric.json"), "--q0", "1,2", "--policy", "serve-in-turn"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let drain = v["drainTime"].as_f64().unwrap();
    assert!((drain - v["lyapunovDrainTime"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(v["final"]["q"], serde_json::json!([0.0, 0.0]));
}

fn run_into(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--output-dir", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    csq(&all)
}

#[test]
fn equal_manifests_give_identical_outputs() {
    let cases: [&[&str]; 3] = [
        &["simulate", &model("symmetric.json"), "--seed", "11", "--busy-periods", "500", "--sample-interval", "10"],
        &["branching", &model("pareto.json"), "--seed", "11", "--reps", "500", "--z", "50"],
        &["tail", &model("pareto.json"), "--seed", "11", "--class", "2", "--reps", "2000"],
    ];
    for args in cases {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out_a = run_into(a.path(), args);
        let out_b = run_into(b.path(), args);
        assert_eq!(out_a.status.code(), Some(0), "{}", String::from_utf8_lossy(&out_a.stderr));
        assert_eq!(out_a.stdout, out_b.stdout);
        let name = args[0];
        for file in [format!("{name}.json"), format!("{name}.csv")] {
            assert_eq!(fs::read(a.path().join(&file)).unwrap(), fs::read(b.path().join(&file)).unwrap(), "{file}");
        }
        let manifest: Value = serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["subcommand"], name);
        assert_eq!(manifest["seed"], 11);
        assert_eq!(manifest["model"]["sha256"].as_str().unwrap().len(), 64);
        assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn different_seeds_differ() {
    let run = |seed: &str| csq(&["simulate", &model("symmetric.json"), "--seed", seed, "--busy-periods", "200"]).stdout;
    assert_ne!(run("1"), run("2"));
}

#[test]
fn trace_file_is_listed_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("events.tsv");
    let out = run_into(
        dir.path(),
        &["simulate", &model("symmetric.json"), "--seed", "4", "--horizon", "50", "--trace", trace.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 4);
        assert!(["A", "S", "D", "I"].contains(&f[1]));
        assert_eq!(f[3].split(',').count(), 2);
    }
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"][2], trace.to_str().unwrap());
}

#[test]
fn reserialized_model_gives_identical_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let original = model("pareto.json");
    let spec: ModelSpec = serde_json::from_slice(&fs::read(&original).unwrap()).unwrap();
    let copy = dir.path().join("copy.json");
    fs::write(&copy, serde_json::to_vec(&spec).unwrap()).unwrap();
    let copy = copy.to_str().unwrap();
    for args in [
        vec!["stability"],
        vec!["lst", "--points", "8"],
        vec!["branching", "--seed", "3", "--reps", "300"],
        vec!["simulate", "--seed", "3", "--busy-periods", "300"],
    ] {
        let with = |path: &str| {
            let mut a = vec![args[0], path];
            a.extend_from_slice(&args[1..]);
            csq(&a)
        };
        let (a, b) = (with(&original), with(copy));
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{}", args[0]);
    }
}

#[test]
fn probe_brackets_critical_multiplier() {
    let out = csq(&[
        "simulate",
        &model("symmetric.json"),
        "--seed",
        "5",
        "--horizon",
        "5000",
        "--probe",
        "0.5,1,1.5,1.8,2.2,2.5,3",
        "--idle-threshold",
        "0.02",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["probe"]["kappaStar"], 2.0);
    assert_eq!(v["kappaStarInBracket"], true);
}
