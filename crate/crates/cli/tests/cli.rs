//! End-to-end runs of the `mixlab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn roof(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "roofs", &format!("{name}.json")].iter().collect();
    path.to_str().expect("utf-8 path").to_owned()
}

fn mixlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MIXLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn classify_reports_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixlab(dir.path(), &["classify", "--roof", &roof("example1")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("mixing"));
    let report: serde_json::Value = serde_json::from_str(&text[text.find('{').unwrap()..]).unwrap();
    assert_eq!(report["verdict"], "mixing");
    assert_eq!(json(&dir.path().join("classify.json"))["results"]["verdict"], "mixing");

    let o = mixlab(dir.path(), &["classify", "--roof", &roof("constant")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("trivial"));
}

#[test]
fn stretch_curve_matches_frozen_values() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["stretch", "--roof", &roof("example1"), "--C", "2", "--n", "100,1000,10000", "--grid", "2048"];
    let o = mixlab(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("stretch.csv")).unwrap();
    assert_eq!(
        csv,
        "n,measure,error_bound\n\
         100,1.8252086639404297e-1,1.9216537475585938e-3\n\
         1000,5.2555561065673828e-2,1.9512176513671875e-3\n\
         10000,1.7659187316894531e-2,1.9531250000000000e-3\n"
    );
}

#[test]
fn exit_codes_separate_bad_input_from_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(mixlab(dir.path(), &["classify", "--roof", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mixlab(dir.path(), &["classify"]).status.code(), Some(2));
    let sine = &roof("example1");
    assert_eq!(mixlab(dir.path(), &["classify", "--roof", sine, "--grid", "64"]).status.code(), Some(2));
    assert_eq!(mixlab(dir.path(), &["stretch", "--roof", sine, "--C", "-1"]).status.code(), Some(2));
    assert_eq!(mixlab(dir.path(), &["fiber-profile", "--roof", sine, "--grid", "16"]).status.code(), Some(2));

    let o = mixlab(dir.path(), &["solve", "--roof", sine]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not vanish"));
    assert_eq!(mixlab(dir.path(), &["conjugacy", "--roof", sine]).status.code(), Some(3));

    // A non-positive roof is well-formed input that cannot be flown.
    let zero_mean = dir.path().join("zero.json");
    let text = std::fs::read_to_string(sine).unwrap().replace("2.0", "0.0");
    std::fs::write(&zero_mean, text).unwrap();
    let o = mixlab(dir.path(), &["correlate", "--roof", zero_mean.to_str().unwrap(), "--samples", "1000"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_files_are_strict_and_resolve_relative_roofs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(roof("coboundary"), dir.path().join("cob.json")).unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"experiment": "conjugacy", "roof": "cob.json", "params": {"points": 20}}"#).unwrap();
    let out = dir.path().join("out");
    let o = mixlab(&out, &["run", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("conjugacy.json"));
    assert!(summary["results"]["max_deviation"].as_f64().unwrap() <= 1e-8);
    assert_eq!(summary["config"]["params"]["points"], 20);
    assert_eq!(summary["config"]["params"]["t"], serde_json::json!([0.7, 3.3, 10.1]));

    std::fs::write(&config, r#"{"experiment": "conjugacy", "roof": "cob.json", "params": {"pionts": 20}}"#).unwrap();
    assert_eq!(mixlab(&out, &["run", config.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_records_reproduce_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let args = ["correlate", "--roof", &roof("example2"), "--t", "-3,5.5", "--samples", "5000", "--seed", "9"];
    assert_eq!(mixlab(&first, &args).status.code(), Some(0));

    let record = json(&first.join("run_record.json"));
    assert_eq!(record["outputs"], serde_json::json!(["correlate.csv", "correlate.json"]));
    assert!(record["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let replay = dir.path().join("replay.json");
    std::fs::write(&replay, serde_json::to_string(&record["config"]).unwrap()).unwrap();
    let second = dir.path().join("second");
    let o = Command::new(env!("CARGO_BIN_EXE_mixlab"))
        .args(["--out", second.to_str().unwrap(), "run", replay.to_str().unwrap()])
        .env("MIXLAB_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["correlate.csv", "correlate.json"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
    assert_eq!(json(&second.join("run_record.json"))["config"]["params"]["workers"], 3);
}

#[test]
fn every_experiment_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let (sine, cob) = (&roof("example1"), &roof("coboundary"));
    let runs: [(&str, Vec<&str>, &str); 12] = [
        ("classify", vec!["--roof", cob], "m,n,re,im,abs"),
        ("solve", vec!["--roof", cob], "m,k,re,im"),
        ("stretch", vec!["--roof", sine, "--n", "10", "--grid", "64"], "n,measure,error_bound"),
        ("sublevel", vec!["--polys", "2", "--grid", "65536", "--deltas", "0.1,0.01"], "poly,delta,measure"),
        ("visits", vec!["--roof", sine, "--n", "50"], "n,fraction"),
        ("correlate", vec!["--roof", sine, "--t", "1", "--samples", "2000"], "t,value,stderr,samples,seed"),
        ("fiber-profile", vec!["--roof", sine, "--t", "0,3", "--grid", "256"], "t,profile,limit"),
        ("hitting", vec!["--roof", sine, "--t", "10"], "t,measure"),
        ("weyl", vec!["--roof", sine, "--terms", "8", "--grid", "128"], "n,ratio"),
        ("l2", vec!["--roof", cob, "--n", "1,2"], "time,m,n,value"),
        ("return-check", vec!["--points", "5"], "wx,wy,wz,x,z,map_error,time_error"),
        ("conjugacy", vec!["--roof", cob, "--t", "1.5", "--points", "10"], "t,deviation"),
    ];
    for (name, extra, header) in runs {
        let mut args = vec![name];
        args.extend(extra);
        let o = mixlab(dir.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(header), "{name}");
        assert!(lines.next().is_some(), "{name} wrote no rows");
        let summary = json(&dir.path().join(format!("{name}.json")));
        assert_eq!(summary["experiment"], name);
        assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
    }
}
