use std::collections::BTreeMap;
use std::path::Path;

use audexp_core::clock::VirtualClock;
use audexp_core::engine::{
    compile_plan, run_session, sample_count, scripted_subject, AnswerPolicy, EventKind, SessionLog,
    SessionPlan, SliderPolicy,
};
use audexp_core::spec::{
    ContinuousTaskConfig, ExperimentSpec, Question, StimulusEntry, StudyType, TriggerConfig,
    TriggerMode,
};
use audexp_core::stim_array::{RandomizationScheme, StimField};
use audexp_core::trigger::TriggerLink;
use audexp_core::wav::{write_tone, SimulatedPlayback};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Study {
    study_type: StudyType,
    /// Clip lengths in frames at 8 kHz.
    frames: Vec<usize>,
    questions: usize,
    period_ms: u32,
    isi_ms: u32,
    scheme: u8,
    response_triggers: bool,
    seed: u64,
    latency_ms: u64,
}

fn study() -> impl Strategy<Value = Study> {
    (
        audexp_core::testing::study_type(),
        proptest::collection::vec(1usize..24_000, 2..6),
        0usize..3,
        20u32..300,
        0u32..1500,
        0u8..3,
        any::<bool>(),
        any::<u64>(),
        0u64..3000,
    )
        .prop_map(
            |(
                study_type,
                frames,
                questions,
                period_ms,
                isi_ms,
                scheme,
                response_triggers,
                seed,
                latency_ms,
            )| {
                Study {
                    study_type,
                    frames,
                    questions,
                    period_ms,
                    isi_ms,
                    scheme,
                    response_triggers,
                    seed,
                    latency_ms,
                }
            },
        )
}

fn build(study: &Study, dir: &Path) -> SessionPlan {
    let mut spec = ExperimentSpec::new("laws", study.study_type);
    for (i, frames) in study.frames.iter().enumerate() {
        let file = format!("c{i}.wav");
        write_tone(dir.join(&file), 8000, *frames, 300.0 + i as f64).unwrap();
        spec.stimuli.push(StimulusEntry {
            file,
            stim_type: format!("t{}", i % 2),
            condition: format!("c{i}"),
            baseline: study.study_type == StudyType::Neurophysiological && i == 0,
            ..Default::default()
        });
    }
    let questions = if study.study_type.needs_questions() {
        study.questions.max(1)
    } else {
        study.questions
    };
    for q in 0..questions {
        spec.questions.push(Question {
            prompt: format!("q{q}"),
            scale_min: 1,
            scale_max: 7,
            anchor_labels: None,
        });
    }
    spec.isi_ms = study.isi_ms;
    spec.randomization = match (study.study_type, study.scheme) {
        (StudyType::ComparisonRating, s) => RandomizationScheme::AllPairs { ordered: s == 1 },
        (_, 0) => RandomizationScheme::FixedOrder,
        (_, 1) => RandomizationScheme::FullShuffle,
        _ => RandomizationScheme::BlockedShuffle {
            block_field: StimField::StimType,
            shuffle_within: true,
            shuffle_blocks: true,
            no_adjacent_repeat_field: None,
        },
    };
    if study.study_type == StudyType::ContinuousRating {
        spec.continuous_task = Some(ContinuousTaskConfig {
            instructions: "move".into(),
            sample_period_ms: study.period_ms,
            slider_min_label: "lo".into(),
            slider_max_label: "hi".into(),
        });
    }
    if study.study_type.needs_trigger() {
        spec.trigger = Some(TriggerConfig {
            mode: TriggerMode::SimulatedTtl,
            host: "127.0.0.1".into(),
            port: 0,
            code_map: BTreeMap::new(),
            send_response_triggers: study.response_triggers,
            pulse_width_ms: 5,
        });
    }
    compile_plan(&spec, "law", study.seed, dir).unwrap()
}

fn execute(plan: &SessionPlan, study: &Study) -> SessionLog {
    let clock = VirtualClock::new();
    let h = clock.handle();
    let mut subject = scripted_subject(
        AnswerPolicy::Uniform { seed: study.seed },
        SliderPolicy::Ramp,
        h.clone(),
    )
    .with_latency_ms(study.latency_ms);
    let mut playback = SimulatedPlayback::new(h.clone());
    let mut link = plan
        .spec
        .study_type
        .needs_trigger()
        .then(|| TriggerLink::ttl(5, h.clone()));
    run_session(plan, &mut subject, &mut playback, link.as_mut(), &h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn session_invariants(study in study()) {
        let dir = tempfile::tempdir().unwrap();
        let plan = build(&study, dir.path());
        let log = execute(&plan, &study);

        // Timeline monotonicity and one begin/end.
        prop_assert!(log.events.windows(2).all(|w| w[0].t_us <= w[1].t_us));
        let count = |name: &str| log.events.iter().filter(|e| e.kind.name() == name).count();
        prop_assert_eq!(count("session_begin"), 1);
        prop_assert_eq!(count("session_end"), 1);

        // Presentation order equals the plan.
        let presented: Vec<usize> = log.events.iter().filter_map(|e| match e.kind {
            EventKind::StimulusOnset { index, .. } | EventKind::BaselineOnset { index, .. } => Some(index),
            _ => None,
        }).collect();
        let planned: Vec<usize> = plan.trials.iter().flat_map(|t| t.stimuli.clone()).collect();
        prop_assert_eq!(presented, planned);

        // Response-time law, from the log alone.
        let mut shown = BTreeMap::new();
        for e in &log.events {
            match e.kind {
                EventKind::QuestionShown { trial, question } => { shown.insert((trial, question), e.t_us); }
                EventKind::AnswerCommitted { trial, question, rt_ms, value } => {
                    let t0 = shown[&(trial, question)];
                    prop_assert_eq!(rt_ms, (e.t_us - t0) as f64 / 1000.0);
                    prop_assert!((1..=7).contains(&value));
                }
                _ => {}
            }
        }

        // Questions never overlap playback.
        let mut last_offset = None;
        let mut playing = false;
        for e in &log.events {
            match e.kind {
                EventKind::StimulusOnset { .. } | EventKind::BaselineOnset { .. } => playing = true,
                EventKind::StimulusOffset { .. } | EventKind::BaselineOffset { .. } => {
                    playing = false;
                    last_offset = Some(e.t_us);
                }
                EventKind::QuestionShown { .. } => {
                    prop_assert!(!playing);
                    prop_assert!(last_offset.is_some_and(|t| t <= e.t_us));
                }
                _ => {}
            }
        }

        // Continuous sampling: floor(d / p) samples per trial on the virtual clock.
        if study.study_type == StudyType::ContinuousRating {
            for (n, trial) in plan.trials.iter().enumerate() {
                let info = plan.stimuli[trial.stimuli[0]].wav;
                let got = log.events.iter().filter(|e| matches!(e.kind,
                    EventKind::ContinuousSample { trial, .. } if trial == n)).count() as u64;
                let expected = (info.n_frames as u128 * 1000
                    / (u128::from(study.period_ms) * 8000)) as u64;
                prop_assert_eq!(got, expected);
                prop_assert_eq!(got, sample_count(&info, study.period_ms));
            }
        }

        // Trigger coupling: every onset trigger carries its onset time.
        if study.study_type.needs_trigger() {
            let onsets: Vec<(u64, String)> = log.events.iter().filter_map(|e| match e.kind {
                EventKind::StimulusOnset { code: Some(c), .. }
                | EventKind::BaselineOnset { code: Some(c), .. } => Some((e.t_us, c.as_str().to_string())),
                _ => None,
            }).collect();
            let onset_triggers: Vec<(u64, String)> = log.triggers()
                .filter(|(c, _)| !c.as_str().starts_with('R'))
                .map(|(c, t)| (t, c.as_str().to_string()))
                .collect();
            prop_assert_eq!(&onset_triggers, &onsets);
            let responses = log.triggers().filter(|(c, _)| c.as_str().starts_with('R')).count();
            let answers = log.answers().count();
            prop_assert_eq!(responses, if study.response_triggers { answers } else { 0 });
        }

        // Replay determinism.
        let again = execute(&plan, &study);
        prop_assert_eq!(again.to_jsonl(), log.to_jsonl());
    }
}
