use std::process::{Command, Output};

fn ncexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncexp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

const ORACLE: [&str; 8] = ["oracle", "--word", "U1 Z1 U1 Z1 U1* Z1 U1* Z1", "--z", "1,-1", "--N", "4,8", "--order=2"];

#[test]
fn csv_goes_to_stdout_or_to_files() {
    let printed = stdout(&ncexp(&ORACLE));
    assert!(printed.starts_with("# oracle-values.csv\nn,re,im\n4,0.06666666666666667,0.0\n"), "{printed}");

    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["--out", dir.path().to_str().unwrap()];
    args.extend(ORACLE);
    stdout(&ncexp(&args));
    let values = std::fs::read_to_string(dir.path().join("oracle-values.csv")).unwrap();
    let series = std::fs::read_to_string(dir.path().join("oracle-series.csv")).unwrap();
    assert_eq!(format!("# oracle-values.csv\n{values}# oracle-series.csv\n{series}"), printed);
}

#[test]
fn dumped_configs_replay_the_same_run() {
    let mut args = vec!["--seed", "11", "--dump-config"];
    args.extend(["fit", "--poly", "U1 Z1 U1* Z1", "--z", "1,-1", "--ns", "2,4,6,8", "--samples", "50,50,50,50"]);
    let json = stdout(&ncexp(&args));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    std::fs::write(&path, &json).unwrap();

    let direct = stdout(&ncexp(&[&args[..2], &args[3..]].concat()));
    let replay = stdout(&ncexp(&["--config", path.to_str().unwrap()]));
    assert_eq!(direct, replay);
    assert!(direct.contains("# fit-summary.csv"));

    let both = ncexp(&["--config", path.to_str().unwrap(), "selftest"]);
    assert!(!both.status.success());
}

#[test]
fn bad_input_fails_with_a_position() {
    let o = ncexp(&["oracle", "--word", "U1 + ", "--N", "4"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("column 5"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn index_sets_are_dumped() {
    let out = stdout(&ncexp(&["indexsets", "dump", "--order", "1"]));
    assert!(out.contains("# indexsets-sets.csv"));
    assert!(out.contains("# indexsets-summary.csv\nn,sets,collisions\n1,4,0\n"), "{out}");
}

#[test]
fn selftest_passes() {
    let out = stdout(&ncexp(&["--seed", "1", "selftest"]));
    assert!(!out.contains(",false\n"), "{out}");
}
