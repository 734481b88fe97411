#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use audexp_core::spec::{
    serialize_spec, ExperimentSpec, Question, StimulusEntry, StudyType, TriggerConfig, TriggerMode,
};
use audexp_core::stim_array::RandomizationScheme;
use audexp_core::wav::write_tone;

pub const BIN: &str = env!("CARGO_BIN_EXE_audexp");

pub fn audexp(args: &[&str]) -> Output {
    audexp_in(Path::new("."), args)
}

pub fn audexp_in(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("AUDEXP_STIM_ROOT")
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A trigger-carrying study over `n` one-second tones, written to `dir`.
pub fn write_trigger_spec(dir: &Path, study: StudyType, n: usize) -> PathBuf {
    let mut spec = ExperimentSpec::new(format!("{study:?} study"), study);
    spec.randomization = RandomizationScheme::FullShuffle;
    spec.isi_ms = 250;
    for i in 0..n {
        let file = format!("tone{i}.wav");
        write_tone(dir.join(&file), 8000, 8000, 300.0 + 50.0 * i as f64).unwrap();
        spec.stimuli.push(StimulusEntry {
            file: file.clone(),
            title: file.clone(),
            artist: "synth".into(),
            stim_type: "tone".into(),
            condition: format!("c{i}"),
            ..Default::default()
        });
    }
    if study == StudyType::Neurophysiological {
        write_tone(dir.join("rest.wav"), 8000, 4000, 0.0).unwrap();
        spec.stimuli.push(StimulusEntry {
            file: "rest.wav".into(),
            title: "rest".into(),
            artist: "synth".into(),
            stim_type: "baseline".into(),
            condition: "rest".into(),
            baseline: true,
            ..Default::default()
        });
    }
    spec.questions.push(Question {
        prompt: "How intense?".into(),
        scale_min: 1,
        scale_max: 5,
        anchor_labels: None,
    });
    spec.trigger = Some(TriggerConfig {
        mode: TriggerMode::Tcp,
        host: "127.0.0.1".into(),
        port: 1,
        code_map: Default::default(),
        send_response_triggers: true,
        pulse_width_ms: 10,
    });
    let path = dir.join("study.toml");
    std::fs::write(&path, serialize_spec(&spec)).unwrap();
    path
}

/// `audexp serve-acq` on an ephemeral port; returns the child and its address.
pub fn spawn_acq(dump: &Path, extra: &[&str]) -> (Child, String) {
    let mut child = Command::new(BIN)
        .args(["serve-acq", "--port", "0", "--dump", path_str(dump)])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("serve-acq starts");
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    (child, addr)
}

/// The single result directory under `root`.
pub fn result_dir(root: &Path) -> PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}
