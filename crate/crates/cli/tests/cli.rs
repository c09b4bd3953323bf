use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn shop(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models/online-shop")
        .join(file)
        .display()
        .to_string()
}

fn archflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_archflow"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn analyze_reports_the_database() {
    let o = archflow(&[
        "analyze",
        &shop("model-no-encrypt.json"),
        "--constraints",
        &shop("geo.constraints"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(
        stdout(&o),
        "CONSTRAINT geo SEQ 0 ELEM 3 NODE callStore VARS record\n\
         CONSTRAINT geo SEQ 0 ELEM 4 NODE storeReturn VARS record\n\
         TOTAL 2 violations\n"
    );
}

#[test]
fn analyze_passes_with_encryption() {
    let o = archflow(&[
        "analyze",
        &shop("model.json"),
        "--constraints",
        &shop("geo.constraints"),
        "--threads",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "TOTAL 0 violations\n");
}

#[test]
fn dump_propagation_lists_every_node() {
    let o = archflow(&[
        "analyze",
        &shop("model.json"),
        "--constraints",
        &shop("geo.constraints"),
        "--dump-propagation",
    ]);
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("ELEM ")).count(), 8);
    assert!(out.contains("ELEM 4 CallingSeffNode callStore NODE ServerLocation.nonEU\n  VAR record DataSensitivity.Personal,Encryption.Encrypted\n"));
    assert!(out.ends_with("TOTAL 0 violations\n"));
}

#[test]
fn missing_files_exit_2_with_the_path() {
    let o = archflow(&[
        "analyze",
        "/nonexistent/shop.json",
        "--constraints",
        &shop("geo.constraints"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/shop.json"));

    let o = archflow(&[
        "analyze",
        &shop("model.json"),
        "--constraints",
        "/nonexistent/geo.constraints",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/geo.constraints"));
}

#[test]
fn sequences_lists_elements() {
    let o = archflow(&["sequences", &shop("model.json")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("SEQUENCE 0\n0 UserStart purchase\n1 UserVariableNode enterUserData\n2 CallingUserNode callBuy\n"));
    assert!(out.ends_with("7 ReturningUserNode callBuy\n"));
}

#[test]
fn sequences_of_two_scenarios_and_invalid_models() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.json");
    fs::write(
        &two,
        r#"{"dictionary": {"labelTypes": []},
            "usageScenarios": [{"id": "a", "actions": []}, {"id": "b", "actions": []}]}"#,
    )
    .unwrap();
    let o = archflow(&["sequences", two.to_str().unwrap()]);
    assert_eq!(
        stdout(&o),
        "SEQUENCE 0\n0 UserStart a\nSEQUENCE 1\n0 UserStart b\n"
    );

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"dictionary": {"labelTypes": []}, "assembly": {"instances": [{"id": "x", "component": "Ghost"}]}}"#).unwrap();
    assert_eq!(
        archflow(&["sequences", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let o = archflow(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o)
        .lines()
        .any(|l| l.starts_with("DEFECT") && l.contains("Ghost")));
    let o = archflow(&["validate", &shop("model.json")]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "OK\n"));
}

#[test]
fn bench_writes_runs_and_medians() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("va.csv");
    let o = archflow(&[
        "bench",
        "--feature",
        "variable-actions",
        "--sizes",
        "1,10",
        "--reps",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 6);
    assert_eq!(
        fs::read_to_string(dir.path().join("va_median.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2
    );
    assert!(dir.path().join("va_median.dat").exists());
}

#[test]
fn bench_rejects_bad_flags() {
    let o = archflow(&["bench", "--feature", "loops", "--out", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in [
        "node-characteristics",
        "characteristics-propagation",
        "variable-actions",
        "seff-parameters",
    ] {
        assert!(err.contains(name), "{err}");
    }
    for bad in [
        ["--sizes", "10,1"],
        ["--sizes", "0"],
        ["--reps", "0"],
        ["--sizes", "x"],
    ] {
        let o = archflow(&[
            "bench",
            "--feature",
            "seff-parameters",
            bad[0],
            bad[1],
            "--out",
            "/tmp/never.csv",
        ]);
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
    }
    assert!(!PathBuf::from("/tmp/never.csv").exists());
}

#[test]
fn bench_defaults_to_six_decades() {
    let o = archflow(&["bench", "--help"]);
    assert!(stdout(&o).contains("1,10,100,1000,10000,100000"));
}
