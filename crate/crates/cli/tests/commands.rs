mod common;

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use audexp_core::engine::{EventKind, SessionPlan};
use audexp_core::spec::StudyType;
use audexp_core::store::load_result;
use audexp_core::trigger::AcquisitionTimeline;
use common::*;
use tempfile::TempDir;

fn demo() -> TempDir {
    let dir = TempDir::new().unwrap();
    let o = audexp(&["demo-stimuli", "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn compile_demo(dir: &Path, seed: &str) -> std::path::PathBuf {
    let o = audexp_in(
        dir,
        &[
            "compile",
            "demoBRS.toml",
            "--subject",
            "S01",
            "--seed",
            seed,
            "--out",
            "build",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("build/plan.json")
}

#[test]
fn validate_exit_codes() {
    let dir = demo();
    let o = audexp_in(dir.path(), &["validate", "demoBRS.toml"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("0 error(s)"));

    std::fs::remove_file(dir.path().join("SCP 07_C-tonic.wav")).unwrap();
    let o = audexp_in(dir.path(), &["validate", "demoBRS.toml"]);
    assert_eq!(code(&o), 1);
    let errors: Vec<_> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with("error"))
        .map(String::from)
        .collect();
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert!(errors[0].contains("StimulusFileMissing"));

    assert_eq!(code(&audexp(&["validate", "/no/such/spec.toml"])), 3);
}

#[test]
fn stim_root_comes_from_flag_or_environment() {
    let dir = demo();
    let spec = dir.path().join("demoBRS.toml");
    let o = audexp(&[
        "validate",
        path_str(&spec),
        "--stim-root",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = Command::new(BIN)
        .args(["validate", path_str(&spec)])
        .env("AUDEXP_STIM_ROOT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    // From elsewhere without either, every stimulus is missing.
    assert_eq!(code(&audexp(&["validate", path_str(&spec)])), 1);
}

#[test]
fn compile_is_reproducible() {
    let dir = demo();
    let plan = compile_demo(dir.path(), "42");
    let first = std::fs::read(&plan).unwrap();
    let readme = std::fs::read_to_string(dir.path().join("build/README-FIRST.txt")).unwrap();
    assert!(readme.starts_with("README-FIRST: demoBRS"));
    assert!(readme.contains("audexp run plan.json"));

    compile_demo(dir.path(), "42");
    assert_eq!(std::fs::read(&plan).unwrap(), first);
    compile_demo(dir.path(), "43");
    assert_ne!(std::fs::read(&plan).unwrap(), first);

    let args = [
        "compile",
        "demoBRS.toml",
        "--subject",
        "S01",
        "--seed",
        "4x2",
    ];
    assert_eq!(code(&audexp_in(dir.path(), &args)), 3);
    let args = [
        "compile",
        "demoBRS.toml",
        "--subject",
        "S 01",
        "--seed",
        "1",
    ];
    assert_eq!(code(&audexp_in(dir.path(), &args)), 3);

    std::fs::remove_file(dir.path().join("SCP 01_B-dominant.wav")).unwrap();
    let o = audexp_in(
        dir.path(),
        &[
            "compile",
            "demoBRS.toml",
            "--subject",
            "S01",
            "--seed",
            "1",
            "--out",
            "b2",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("b2").exists());
}

#[test]
fn check_detects_tampering() {
    let dir = demo();
    let plan = compile_demo(dir.path(), "1");
    let o = audexp_in(
        dir.path(),
        &["check", "build/plan.json", "--spec", "demoBRS.toml"],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let wav = dir.path().join("SCP 05_C-tonic.wav");
    let mut bytes = std::fs::read(&wav).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&wav, bytes).unwrap();
    let o = audexp_in(dir.path(), &["check", path_str(&plan)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("HashMismatch"), "{}", stdout(&o));

    // A tampered plan also refuses to run.
    let o = audexp_in(
        dir.path(),
        &["run", "build/plan.json", "--simulate", "--out", "res"],
    );
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("res").exists());

    assert_eq!(code(&audexp_in(dir.path(), &["check", "nope.json"])), 3);
}

#[test]
fn simulated_run_writes_results() {
    let dir = demo();
    compile_demo(dir.path(), "7");
    let args = [
        "run",
        "build/plan.json",
        "--simulate",
        "--out",
        "res",
        "--answers",
        "fixed:6",
        "--epoch-us",
        "1700000000000000",
    ];
    let o = audexp_in(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result_path = dir.path().join(stdout(&o).trim());
    assert_eq!(result_path, result_dir(&dir.path().join("res")));
    let result = load_result(&result_path).unwrap();
    assert!(result.summary.completed);
    assert_eq!(result.summary.trials_presented, 12);
    assert_eq!(result.responses.len(), 12);
    assert!(result.responses.iter().all(|r| r.value == 6));

    // Same inputs and epoch: identical event log.
    let mut again = args;
    again[4] = "res2";
    let o = audexp_in(dir.path(), &again);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = result_dir(&dir.path().join("res"));
    let b = result_dir(&dir.path().join("res2"));
    let events = |d: &Path| {
        let name = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.to_string_lossy().ends_with("_events.jsonl"))
            .unwrap();
        std::fs::read(name).unwrap()
    };
    assert_eq!(events(&a), events(&b));
}

#[test]
fn failed_session_keeps_partial_results() {
    let dir = demo();
    compile_demo(dir.path(), "7");
    let o = audexp_in(
        dir.path(),
        &[
            "run",
            "build/plan.json",
            "--simulate",
            "--out",
            "res",
            "--answers",
            "script:3,4,5",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("partial results saved"));
    let result = load_result(&result_dir(&dir.path().join("res"))).unwrap();
    assert!(!result.summary.completed);
    assert_eq!(result.responses.len(), 3);
    assert!(result.summary.abort_reason.is_some());
}

#[test]
fn serve_without_subject_times_out() {
    let dir = demo();
    compile_demo(dir.path(), "7");
    let o = audexp_in(
        dir.path(),
        &[
            "run",
            "build/plan.json",
            "--serve",
            "--port",
            "0",
            "--connect-timeout",
            "0.3",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(
        stdout(&o).starts_with("http://127.0.0.1:"),
        "{}",
        stdout(&o)
    );
    assert!(stderr(&o).contains("no subject connected"));
}

#[test]
fn eeg_run_against_acquisition_server() {
    let dir = TempDir::new().unwrap();
    write_trigger_spec(dir.path(), StudyType::Eeg, 3);
    let o = audexp_in(
        dir.path(),
        &["compile", "study.toml", "--subject", "E1", "--seed", "5"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dump = dir.path().join("dump.json");
    let (mut acq, addr) = spawn_acq(&dump, &["--sessions", "1"]);

    let o = audexp_in(
        dir.path(),
        &[
            "run",
            "plan.json",
            "--simulate",
            "--acq",
            &addr,
            "--out",
            "res",
            "--answers",
            "fixed:2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(acq.wait().unwrap().success());

    let timeline: AcquisitionTimeline =
        serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    let result = load_result(&result_dir(&dir.path().join("res"))).unwrap();
    let logged: Vec<_> = result
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::TriggerSent { code, onset_us } => Some((*code, *onset_us)),
            _ => None,
        })
        .collect();
    assert_eq!(timeline.sessions(), vec![logged.clone()]);
    // Three onsets and three response triggers.
    assert_eq!(logged.len(), 6);
    assert_eq!(
        logged.iter().filter(|(c, _)| c.as_str() == "RSP2").count(),
        3
    );
}

#[test]
fn trigger_server_unreachable_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    write_trigger_spec(dir.path(), StudyType::Eeg, 1);
    audexp_in(
        dir.path(),
        &["compile", "study.toml", "--subject", "E1", "--seed", "5"],
    );
    let o = audexp_in(
        dir.path(),
        &["run", "plan.json", "--simulate", "--acq", "127.0.0.1:1"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trigger link"), "{}", stderr(&o));
}

#[test]
fn serve_acq_lifecycle() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("idle.json");
    let (mut acq, addr) = spawn_acq(&dump, &[]);

    // Occupied port.
    let port = addr.rsplit(':').next().unwrap();
    let o = audexp(&[
        "serve-acq",
        "--port",
        port,
        "--dump",
        path_str(&dir.path().join("x.json")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("already in use"));

    std::thread::sleep(Duration::from_millis(100));
    let killed = Command::new("kill")
        .args(["-INT", &acq.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    assert!(acq.wait().unwrap().success());
    let timeline: AcquisitionTimeline =
        serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(timeline.entries.is_empty());
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(code(&audexp(&["frobnicate"])), 3);
    assert_eq!(code(&audexp(&[])), 3);
    assert_eq!(code(&audexp(&["run", "plan.json"])), 3);
    assert_eq!(
        code(&audexp(&[
            "run",
            "p.json",
            "--simulate",
            "--answers",
            "loud"
        ])),
        3
    );
    let help = audexp(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("serve-acq"));
}

#[test]
fn plan_file_is_the_compiled_plan() {
    let dir = demo();
    let plan = compile_demo(dir.path(), "9");
    let parsed = SessionPlan::from_json(&std::fs::read_to_string(plan).unwrap()).unwrap();
    assert_eq!(parsed.trials.len(), 12);
    assert_eq!(parsed.subject_id, "S01");
    assert_eq!(parsed.seed, 9);
}
