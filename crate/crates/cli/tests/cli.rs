use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn userdp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_userdp"))
        .current_dir(dir)
        .env_remove("USERDP_SEED")
        .env_remove("USERDP_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .skip_while(|l| !l.starts_with("algorithm,"))
        .skip(1)
        .collect()
}

const MINIMAL: &str = "\
[problem]
kind = quadratic_mean
d = 4

[algorithm]
name = alg1
n = 2048
m = 2
";

const SWEEP: &str = "\
[problem]
d = 4

[algorithm]
name = alg3
m = 8

[privacy]
kappa = 0.1
delta = 1e-6

[schedule]
c_tau = 0.1

[run]
seed_count = 30

[sweep]
algorithm.n = 512
algorithm.n = 1024
algorithm.n = 2048
";

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn minimal_config_writes_one_row() {
    let t = TempDir::new().unwrap();
    write(t.path(), "min.conf", MINIMAL);
    let o = userdp(t.path(), &["run", "min.conf", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(t.path().join("out/min.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("userdp-sco-csv v1"));
    assert_eq!(data_rows(&csv).len(), 1);
    // the configuration is embedded verbatim
    for line in MINIMAL.lines() {
        assert!(csv.contains(&format!("# {line}\n")), "missing {line:?}");
    }
}

#[test]
fn sweep_yields_points_times_seeds_rows_and_reruns_identically() {
    let t = TempDir::new().unwrap();
    write(t.path(), "sweep.conf", SWEEP);
    let o = userdp(t.path(), &["run", "sweep.conf", "--out-dir", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("3 point(s) x 30 seed(s) = 90 run(s)"));
    let o = userdp(t.path(), &["run", "sweep.conf", "--out-dir", "b", "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let strip = |p: &str| -> Vec<String> {
        let csv = fs::read_to_string(t.path().join(p)).unwrap();
        csv.lines()
            .map(|l| match l.rsplit_once(',') {
                // drop wall_time
                Some((head, _)) if l.starts_with("alg3,") => head.to_string(),
                _ => l.to_string(),
            })
            .collect()
    };
    let (a, b) = (strip("a/sweep.csv"), strip("b/sweep.csv"));
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|l| l.starts_with("alg3,")).count(), 90);

    let o = userdp(t.path(), &["report", "a/sweep.csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("alg3 n 512 -> 2048 (x4)"), "{text}");
    assert!(text.contains("predicted 2.000 for the (nm)^-1/2 term"), "{text}");
}

#[test]
fn infeasible_schedule_exits_two_and_names_the_phase() {
    let t = TempDir::new().unwrap();
    write(t.path(), "tiny.conf", "[algorithm]\nname = alg1\nn = 64\nm = 2\n");
    let o = userdp(t.path(), &["run", "tiny.conf", "--out-dir", "out"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("infeasible schedule at phase 1"), "{}", stderr(&o));
}

#[test]
fn parse_error_exits_one_with_the_line() {
    let t = TempDir::new().unwrap();
    write(t.path(), "bad.conf", "[problem]\nd = 4\ndimension = 3\n");
    let o = userdp(t.path(), &["run", "bad.conf"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn mechanisms_and_stability_audits_pass() {
    let t = TempDir::new().unwrap();
    for name in ["mechanisms", "stability"] {
        let o = userdp(t.path(), &["audit", name, "--out-dir", "out"]);
        assert_eq!(code(&o), 0, "{name}: {}{}", stdout(&o), stderr(&o));
        let csv = fs::read_to_string(t.path().join(format!("out/audit_{name}.csv"))).unwrap();
        assert!(csv.contains("audit,group,trial,value"));
        assert!(csv.contains(&format!("# summary: {name},")));
    }
}

#[test]
fn shrunken_tau_fails_the_sensitivity_audit() {
    let t = TempDir::new().unwrap();
    let ok = userdp(t.path(), &["audit", "sensitivity", "--override", "trials=60", "--out-dir", "out"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let bad = userdp(
        t.path(),
        &["audit", "sensitivity", "--override", "trials=60", "--override", "tau_scale=0.01", "--out-dir", "out"],
    );
    assert_eq!(code(&bad), 3, "{}", stdout(&bad));
    let csv = fs::read_to_string(t.path().join("out/audit_sensitivity.csv")).unwrap();
    assert!(csv.contains("# override tau_scale=0.01"));
}

#[test]
fn unknown_audit_and_bad_override_are_usage_errors() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&userdp(t.path(), &["audit", "privacy"])), 1);
    assert_eq!(code(&userdp(t.path(), &["audit", "variance", "--override", "bogus=1"])), 1);
}

#[test]
fn report_handles_empty_and_foreign_files() {
    let t = TempDir::new().unwrap();
    write(t.path(), "empty.csv", "");
    let o = userdp(t.path(), &["report", "empty.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "no data\n");
    write(t.path(), "other.csv", "a,b,c\n1,2,3\n");
    let o = userdp(t.path(), &["report", "other.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("schema mismatch"));
}

#[test]
fn environment_sets_seed_and_output_directory() {
    let t = TempDir::new().unwrap();
    write(t.path(), "min.conf", MINIMAL);
    let o = Command::new(env!("CARGO_BIN_EXE_userdp"))
        .current_dir(t.path())
        .env("USERDP_SEED", "42")
        .env("USERDP_OUT_DIR", "envout")
        .args(["run", "min.conf", "--mode", "theory"])
        .output()
        .unwrap();
    // theory constants make n = 2048 infeasible
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_userdp"))
        .current_dir(t.path())
        .env("USERDP_SEED", "42")
        .env("USERDP_OUT_DIR", "envout")
        .args(["run", "min.conf"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(t.path().join("envout/min.csv")).unwrap();
    assert!(csv.contains("# seed override = 42"));
    assert!(data_rows(&csv)[0].starts_with("alg1,2048,2,4,1,0.00001,1,42,"));
}
