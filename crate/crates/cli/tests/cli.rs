use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn acdc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acdc")).current_dir(dir).args(args).output().expect("spawn acdc")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = acdc(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn flow_count(path: &Path) -> usize {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v["flows"].as_array().unwrap().len()
}

#[test]
fn generate_writes_requested_flows_into_new_dir() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--classes", "10", "--flows", "50", "--seed", "7", "-o", "nested/data"]);
    assert_eq!(flow_count(&dir.path().join("nested/data/flows.json")), 500);
}

#[test]
fn zero_classes_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = acdc(dir.path(), &["generate", "--classes", "0", "-o", "data"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("classes"), "{stderr}");
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = acdc(dir.path(), &["calibrate", "--profile", "absent.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--profile"));
}

#[test]
fn runtime_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("flows.json"), "not json").unwrap();
    let out = acdc(dir.path(), &["train-pool", "--data", "flows.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), "classes = 3\nflows = 4\n").unwrap();
    ok(dir.path(), &["--config", "gen.toml", "generate", "--classes", "10", "--flows", "50", "-o", "data"]);
    assert_eq!(flow_count(&dir.path().join("data/flows.json")), 12);

    fs::write(dir.path().join("bad.toml"), "colours = 3\n").unwrap();
    let out = acdc(dir.path(), &["--config", "bad.toml", "generate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["train-pool", "--help"]);
    for flag in ["--sizes", "--combos", "--seed", "--rounds"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert!(help.contains("[default: 10]"));
}

#[test]
fn registry_dump_has_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(dir.path(), &["registry"]);
    assert_eq!(csv.lines().count(), 38);
    assert_eq!(csv.lines().filter(|l| l.contains("tcp") && l.contains("opt")).count(), 1);
}

fn train_small_pool(dir: &Path, out: &str) {
    ok(
        dir,
        &[
            "train-pool",
            "--data",
            "data/flows.json",
            "--sizes",
            "1,2",
            "--combos",
            "3",
            "--rounds",
            "5",
            "--depth",
            "3",
            "--importance-repeats",
            "1",
            "--seed",
            "3",
            "-o",
            out,
        ],
    );
}

#[test]
fn pipeline_is_deterministic_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--classes", "3", "--flows", "40", "--seed", "5", "-o", "data"]);
    train_small_pool(d, "pool");
    train_small_pool(d, "pool2");
    let manifest = fs::read_to_string(d.join("pool/pool.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 7, "{manifest}");
    assert_eq!(manifest, fs::read_to_string(d.join("pool2/pool.csv")).unwrap());
    for f in ["train.json", "test.json", "importances.csv", "baselines.csv", "all_features.json"] {
        assert!(d.join("pool").join(f).is_file(), "{f}");
    }

    // Measured profile, then a calibrated modeled profile that is byte-identical on rerun.
    ok(d, &["profile", "--batch-sizes", "5,10,20", "--runs", "1", "-o", "measured.csv"]);
    ok(d, &["calibrate", "--profile", "measured.csv", "-o", "cost.json"]);
    let modeled = ["profile", "--mode", "modeled", "--cost-model", "cost.json", "--batch-sizes", "10,100,1000"];
    ok(d, &[&modeled[..], &["-o", "m1.csv"]].concat());
    ok(d, &[&modeled[..], &["-o", "m2.csv"]].concat());
    let m1 = fs::read(d.join("m1.csv")).unwrap();
    assert_eq!(m1, fs::read(d.join("m2.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&m1).lines().count(), 1 + 6 * 3);

    let modeled_without_model = acdc(d, &["profile", "--mode", "modeled", "-o", "x.csv"]);
    assert_eq!(modeled_without_model.status.code(), Some(2));

    for (name, rate) in [("low", "100"), ("mid", "1000"), ("high", "5000")] {
        ok(d, &["simulate", "--profile", "m1.csv", "--duration", "10", "--rate", rate, "--mem", "64GB", "-o", name]);
    }
    ok(
        d,
        &[
            "report",
            "--profile",
            "m1.csv",
            "--trace",
            "low/trace.csv",
            "--trace",
            "mid/trace.csv",
            "--trace",
            "high/trace.csv",
            "--expect",
            "increasing",
            "-o",
            "report",
        ],
    );
    let sweep = fs::read_to_string(d.join("report/sweep_summary.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4, "{sweep}");
    assert!(sweep.lines().skip(1).all(|l| l.ends_with(",true")), "{sweep}");
    assert_eq!(fs::read_to_string(d.join("report/profile_summary.csv")).unwrap().lines().count(), 7);
    assert!(fs::read_to_string(d.join("report/trend.txt")).unwrap().contains("monotone"));
}

#[test]
fn simulate_table5_first_decision() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::copy(core_fixture("table5_profile.csv"), d.join("profile.csv")).unwrap();
    let mut manifest = String::from("classifier_id,size,rank,subset,bits,heuristic_score,model_path\n");
    let profile = fs::read_to_string(d.join("profile.csv")).unwrap();
    for (i, line) in profile.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        manifest.push_str(&format!("{},{},{i},{},0,0,unused.json\n", cols[0], cols[1].split('&').count(), cols[1]));
    }
    fs::write(d.join("pool.csv"), manifest).unwrap();
    ok(
        d,
        &[
            "simulate",
            "--pool",
            "pool.csv",
            "--profile",
            "profile.csv",
            "--duration",
            "5",
            "--rate",
            "1000",
            "--mem",
            "2GB",
        ],
    );
    let log = fs::read_to_string(d.join("sim/decisions.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("tick,rate,mem_available,classifier_id,B,N,M,f1,ratio,overcommit"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..8], &["0", "1000.0", "2000000000", "t5r01", "500", "1", "315000000", "0.744"]);
    assert_eq!(first[9], "false");
    let ratio: f64 = first[8].parse().unwrap();
    assert!((ratio - 0.744 / 0.303).abs() < 1e-9);

    ok(
        d,
        &[
            "simulate",
            "--pool",
            "pool.csv",
            "--profile",
            "profile.csv",
            "--duration",
            "5",
            "--rate",
            "1000",
            "--mem",
            "0.3GB",
            "-o",
            "tight",
        ],
    );
    let log = fs::read_to_string(d.join("tight/decisions.csv")).unwrap();
    let first: Vec<&str> = log.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((first[3], first[6], first[9]), ("t5r15", "312000000", "true"));
}
