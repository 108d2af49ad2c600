use std::fs;
use std::process::{Command, Output};

use bellcert_core::games::{chsh_value, CopyIndex};
use bellcert_core::Behavior;

fn bellcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellcert")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// CSV rows without the runtime column, which is the only one allowed to vary between runs.
fn stable_rows(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn simulate_ideal_and_fully_noisy() {
    let o = bellcert(&["simulate", "--test", "double_chsh", "--eps", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let b: Behavior = serde_json::from_str(&stdout(&o)).unwrap();
    for copy in [CopyIndex::I, CopyIndex::II] {
        assert!((chsh_value(&b, copy).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-10);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let o = bellcert(&["simulate", "--test", "double_chsh", "--eps", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let b: Behavior = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert!((b.p(2, 1, 3, 0) - 1.0 / 16.0).abs() < 1e-12);
}

#[test]
fn explicit_and_analytic_sweeps() {
    let o = bellcert(&["bound", "--test", "magic", "--method", "explicit", "--eps-grid", "0:0.05:0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,test,method,moment_level,fidelity_bound,gap,status,runtime_s");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,magic,explicit,,1.0000000000,,exact,"));

    let o = bellcert(&["bound", "--test", "magic", "--method", "analytic", "--eps-grid", "1e-6,1.8e-4,2e-4"]);
    assert_eq!(o.status.code(), Some(0));
    let statuses: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(6).unwrap().to_string()).collect();
    assert_eq!(statuses, ["nontrivial", "nontrivial", "trivial"]);
}

#[test]
fn single_copy_sdp_rows_are_certified_and_stable() {
    let args = ["bound", "--test", "single_chsh", "--level", "paper", "--eps-grid", "0.000292,0.14441", "--jobs", "2"];
    let first = bellcert(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let text = stdout(&first);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][3], "full");
    assert_eq!(rows[0][6], "certified");
    assert!(rows[0][4].parse::<f64>().unwrap() >= 0.998);
    assert!(rows[1][4].parse::<f64>().unwrap() >= 0.60);
    let second = bellcert(&args);
    assert_eq!(stable_rows(&text), stable_rows(&stdout(&second)));
}

#[test]
fn recorded_behavior_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let p = path.to_str().unwrap();
    assert_eq!(bellcert(&["simulate", "--test", "single_chsh", "--eps", "0.05", "--out", p]).status.code(), Some(0));
    let from_file = bellcert(&["bound", "--test", "single_chsh", "--behavior", p, "--eps", "0.05"]);
    let simulated = bellcert(&["bound", "--test", "single_chsh", "--eps", "0.05"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(stable_rows(&stdout(&from_file)), stable_rows(&stdout(&simulated)));
    // a single-copy behavior does not fit the two-copy programs
    assert_eq!(bellcert(&["bound", "--test", "magic", "--behavior", p, "--eps", "0"]).status.code(), Some(3));
}

#[test]
fn solver_failure_is_loud() {
    let o = bellcert(&["bound", "--test", "single_chsh", "--eps", "0.1", "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "");
    assert_eq!(row[6], "max_iter");
}

#[test]
fn verifiers() {
    for (check, test, eps) in [
        ("swap", "double_chsh", "0"),
        ("swap", "magic", "0"),
        ("ideal_conditions", "double_chsh", "0"),
        ("ideal_conditions", "magic", "0.05"),
        ("magic_chain", "magic", "0.01"),
        ("feasibility", "double_chsh", "0.05"),
    ] {
        let o = bellcert(&["verify", check, "--test", test, "--eps", eps, "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{check} {test}: {}", stdout(&o));
        let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(report["pass"], true);
        assert_eq!(report["check"], check);
    }
    let o = bellcert(&["verify", "swap", "--test", "double_chsh"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["details"]["max_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn bad_input_exits_3() {
    for args in [
        vec!["bound", "--test", "nope", "--eps", "0"],
        vec!["bound", "--test", "magic", "--eps", "1.5"],
        vec!["bound", "--test", "magic", "--eps-grid", "0:0:1"],
        vec!["bound", "--test", "double_chsh", "--method", "analytic", "--eps", "0"],
        vec!["bound", "--test", "magic", "--level", "huge", "--eps", "0"],
        vec!["verify", "magic_chain", "--test", "double_chsh"],
        vec!["simulate", "--test", "magic", "--eps", "-0.1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(bellcert(&args).status.code(), Some(3), "{args:?}");
    }
}

#[test]
fn dump_program_writes_json_and_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let trip = dir.path().join("sdp.txt");
    let o = bellcert(&["dump-program", "--test", "single_chsh", "--level", "paper", "--triplets", trip.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let dump: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(dump["words"].as_array().unwrap().len(), 41);
    let text = fs::read_to_string(&trip).unwrap();
    assert!(text.starts_with("# vars "));

    let faithful = dir.path().join("faithful.txt");
    let o = bellcert(&["dump-program", "--test", "double_chsh", "--faithful", "--triplets", faithful.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let header = fs::read_to_string(&faithful).unwrap().lines().next().unwrap().to_string();
    assert!(header.ends_with("blocks 354"), "{header}");
}
