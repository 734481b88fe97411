//! Frozen result formats. Set `UPDATE_GOLDEN=1` to rewrite the files after
//! an intentional format change (and bump the schema version).

use std::path::{Path, PathBuf};

use audexp_core::clock::VirtualClock;
use audexp_core::engine::{
    compile_plan, run_session, scripted_subject, AnswerPolicy, SliderPolicy,
};
use audexp_core::spec::{ContinuousTaskConfig, ExperimentSpec, Question, StimulusEntry, StudyType};
use audexp_core::store::finalize;
use audexp_core::wav::{write_pcm_wav, SimulatedPlayback};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} differs from the frozen format");
}

#[test]
fn continuous_session_files_match_golden() {
    let stim = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new("golden", StudyType::ContinuousRating);
    for (i, frames) in [1000usize, 600].iter().enumerate() {
        let file = format!("g{i}.wav");
        let samples: Vec<i32> = (0..*frames as i32)
            .map(|s| (s * 37 + i as i32) % 2000 - 1000)
            .collect();
        write_pcm_wav(
            std::fs::File::create(stim.path().join(&file)).unwrap(),
            1,
            1000,
            16,
            &samples,
        )
        .unwrap();
        spec.stimuli.push(StimulusEntry {
            file,
            title: format!("Clip {i}"),
            artist: "fixture".into(),
            stim_type: "tone".into(),
            condition: format!("c{i}"),
            ..Default::default()
        });
    }
    spec.questions.push(Question {
        prompt: "Overall tension?".into(),
        scale_min: 1,
        scale_max: 5,
        anchor_labels: Some(("calm".into(), "tense".into())),
    });
    spec.continuous_task = Some(ContinuousTaskConfig {
        instructions: "Move the slider with the tension you hear.".into(),
        sample_period_ms: 250,
        slider_min_label: "calm".into(),
        slider_max_label: "tense".into(),
    });
    spec.isi_ms = 500;
    let plan = compile_plan(&spec, "G01", 4, stim.path()).unwrap();

    let clock = VirtualClock::with_epoch(1_700_000_000_000_000);
    let h = clock.handle();
    let mut subject = scripted_subject(
        AnswerPolicy::Script(vec![2, 4]),
        SliderPolicy::Ramp,
        h.clone(),
    )
    .with_latency_ms(800);
    let mut playback = SimulatedPlayback::new(h.clone());
    let log = run_session(&plan, &mut subject, &mut playback, None, &h).unwrap();

    let out = tempfile::tempdir().unwrap();
    let (_, files) = finalize(&log, &plan, &out.path().join("r")).unwrap();
    assert_eq!(
        files.summary.file_name().unwrap().to_str().unwrap(),
        "G01_20231114T221320Z_summary.json"
    );
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    check("summary.json", &read(&files.summary));
    check("events.jsonl", &read(&files.events));
    check("trial001_trace.csv", &read(&files.traces[0]));
    check("plan.json", &read(&files.plan));
}
