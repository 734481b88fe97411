//! Generators for property tests, shared by this crate's tests and the
//! workspace acceptance suite. Enabled by the `testing` feature.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use crate::engine::{
    EventKind, PlannedStimulus, SessionLog, SessionPlan, TrialKind, TrialPlan, PLAN_FORMAT_VERSION,
};
use crate::spec::{
    ContinuousTaskConfig, DisplayStyle, ExperimentSpec, Question, StimulusEntry, StudyType,
    TriggerConfig, TriggerMode,
};
use crate::stim_array::{RandomizationScheme, StimField};
use crate::trigger::{TriggerCode, TriggerMessage};
use crate::wav::WavInfo;

/// Any string TOML and JSON can carry, including non-ASCII text.
pub fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[a-zA-Z0-9 _.-]{0,16}",
        1 => "\\PC{0,12}",
        1 => Just("quote \" backslash \\ newline \n tab \t".to_string()),
    ]
}

pub fn trigger_code() -> impl Strategy<Value = TriggerCode> {
    proptest::array::uniform4(0x20u8..=0x7e)
        .prop_map(|b| TriggerCode::from_bytes(b).expect("printable ASCII"))
}

pub fn trigger_message() -> impl Strategy<Value = TriggerMessage> {
    (trigger_code(), any::<u64>(), any::<u64>()).prop_map(|(code, onset_us, duration_us)| {
        TriggerMessage {
            code,
            onset_us,
            duration_us,
        }
    })
}

fn stim_field() -> impl Strategy<Value = StimField> {
    prop_oneof![Just(StimField::StimType), Just(StimField::Condition)]
}

fn scheme() -> impl Strategy<Value = RandomizationScheme> {
    prop_oneof![
        Just(RandomizationScheme::FixedOrder),
        Just(RandomizationScheme::FullShuffle),
        (
            stim_field(),
            any::<bool>(),
            any::<bool>(),
            option::of(stim_field())
        )
            .prop_map(
                |(block_field, shuffle_within, shuffle_blocks, no_adjacent_repeat_field)| {
                    RandomizationScheme::BlockedShuffle {
                        block_field,
                        shuffle_within,
                        shuffle_blocks,
                        no_adjacent_repeat_field,
                    }
                }
            ),
        (vec(0.0f64..1e6, 0..6), 0usize..20, any::<bool>()).prop_map(
            |(weights, draws, replacement)| RandomizationScheme::ProbabilitySelect {
                weights,
                draws,
                replacement,
            }
        ),
        any::<bool>().prop_map(|ordered| RandomizationScheme::AllPairs { ordered }),
    ]
}

fn stimulus() -> impl Strategy<Value = StimulusEntry> {
    (
        "[a-z0-9_ -]{1,12}\\.wav",
        text(),
        text(),
        text(),
        text(),
        any::<bool>(),
        option::of(text()),
        option::of(text()),
    )
        .prop_map(
            |(file, title, artist, stim_type, condition, baseline, label, set)| StimulusEntry {
                file,
                title,
                artist,
                stim_type,
                condition,
                baseline,
                label,
                set,
            },
        )
}

fn question() -> impl Strategy<Value = Question> {
    (text(), -50i64..50, 0i64..60, option::of((text(), text()))).prop_map(
        |(prompt, scale_min, span, anchor_labels)| Question {
            prompt,
            scale_min,
            scale_max: scale_min + span,
            anchor_labels,
        },
    )
}

fn continuous() -> impl Strategy<Value = ContinuousTaskConfig> {
    (text(), 1u32..2000, text(), text()).prop_map(
        |(instructions, sample_period_ms, slider_min_label, slider_max_label)| {
            ContinuousTaskConfig {
                instructions,
                sample_period_ms,
                slider_min_label,
                slider_max_label,
            }
        },
    )
}

fn trigger() -> impl Strategy<Value = TriggerConfig> {
    (
        prop_oneof![Just(TriggerMode::Tcp), Just(TriggerMode::SimulatedTtl)],
        "[a-z0-9.]{1,15}",
        any::<u16>(),
        proptest::collection::btree_map("[a-z0-9]{1,8}\\.wav", "[A-Z0-9]{4}", 0..4),
        any::<bool>(),
        0u32..1000,
    )
        .prop_map(
            |(mode, host, port, code_map, send_response_triggers, pulse_width_ms)| TriggerConfig {
                mode,
                host,
                port,
                code_map: code_map.into_iter().collect::<BTreeMap<_, _>>(),
                send_response_triggers,
                pulse_width_ms,
            },
        )
}

fn display() -> impl Strategy<Value = DisplayStyle> {
    ("#[0-9A-F]{6}", "#[0-9a-f]{6}", 1u32..200).prop_map(
        |(background_color, font_color, font_size_pt)| DisplayStyle {
            background_color,
            font_color,
            font_size_pt,
        },
    )
}

pub fn study_type() -> impl Strategy<Value = StudyType> {
    prop_oneof![
        Just(StudyType::BehavioralRating),
        Just(StudyType::ComparisonRating),
        Just(StudyType::ContinuousRating),
        Just(StudyType::Eeg),
        Just(StudyType::Neurophysiological),
    ]
}

/// Specs the text format can carry: the parse-time requirements (trigger
/// table for EEG-style studies, continuous task for continuous ones) hold,
/// but semantic validity is not guaranteed.
pub fn experiment_spec() -> impl Strategy<Value = ExperimentSpec> {
    (
        (text(), study_type(), text()),
        (vec(stimulus(), 0..6), vec(question(), 0..4)),
        (option::of(continuous()), scheme(), option::of(trigger())),
        (display(), 0u32..10, 0u32..5000),
        (continuous(), trigger()),
    )
        .prop_map(
            |(
                (name, study_type, description),
                (stimuli, questions),
                (continuous_task, randomization, trigger_cfg),
                (display, repetitions, isi_ms),
                (fallback_task, fallback_trigger),
            )| {
                let continuous_task = match study_type {
                    StudyType::ContinuousRating => continuous_task.or(Some(fallback_task)),
                    _ => continuous_task,
                };
                let trigger = if study_type.needs_trigger() {
                    trigger_cfg.or(Some(fallback_trigger))
                } else {
                    trigger_cfg
                };
                ExperimentSpec {
                    name,
                    study_type,
                    description,
                    stimuli,
                    questions,
                    continuous_task,
                    randomization,
                    trigger,
                    display,
                    repetitions,
                    isi_ms,
                }
            },
        )
}

/// A plan over `n` synthetic stimuli with one single trial per stimulus;
/// no files back it, so it is only for exercising storage.
pub fn synthetic_plan(n: usize) -> SessionPlan {
    let mut spec = ExperimentSpec::new("synthetic", StudyType::ContinuousRating);
    let mut stimuli = Vec::new();
    for i in 0..n {
        let file = format!("stim{i}.wav");
        spec.stimuli.push(StimulusEntry {
            file: file.clone(),
            stim_type: "t".into(),
            condition: format!("c{i}"),
            ..Default::default()
        });
        stimuli.push(PlannedStimulus {
            file,
            sha256: crate::sha256_hex(&(i as u64).to_le_bytes()),
            wav: WavInfo {
                channels: 1,
                sample_rate_hz: 8000,
                bits_per_sample: 16,
                n_frames: 8000,
            },
        });
    }
    let trials = (0..n)
        .map(|i| TrialPlan {
            kind: TrialKind::Single,
            stimuli: vec![i],
            questions: vec![0],
            onset_codes: Vec::new(),
            response_triggers: false,
            continuous: true,
        })
        .collect();
    SessionPlan {
        format_version: PLAN_FORMAT_VERSION,
        spec_digest: spec.digest(),
        subject_id: "fuzz".into(),
        seed: 0,
        spec,
        stimuli,
        trials,
    }
}

fn event_kind(trials: usize) -> impl Strategy<Value = EventKind> {
    let t = 0..trials;
    prop_oneof![
        (text(), text())
            .prop_map(|(study, subject_id)| EventKind::SessionBegin { study, subject_id }),
        Just(EventKind::InstructionsShown),
        Just(EventKind::InstructionsAcknowledged),
        (t.clone(), text()).prop_map(|(trial, label)| EventKind::LabelShown { trial, label }),
        (t.clone(), 0..trials, option::of(trigger_code()))
            .prop_map(|(trial, index, code)| EventKind::BaselineOnset { trial, index, code }),
        (t.clone(), 0..trials)
            .prop_map(|(trial, index)| EventKind::BaselineOffset { trial, index }),
        (t.clone(), 0..trials, option::of(trigger_code()))
            .prop_map(|(trial, index, code)| EventKind::StimulusOnset { trial, index, code }),
        (t.clone(), 0..trials)
            .prop_map(|(trial, index)| EventKind::StimulusOffset { trial, index }),
        (t.clone(), 0usize..3)
            .prop_map(|(trial, question)| EventKind::QuestionShown { trial, question }),
        (t.clone(), 0usize..3, -100i64..100, 0u64..10_000_000).prop_map(
            |(trial, question, value, rt)| EventKind::AnswerCommitted {
                trial,
                question,
                value,
                rt_ms: rt as f64 / 1000.0,
            }
        ),
        (t.clone(), 0.0f64..=1.0)
            .prop_map(|(trial, value)| EventKind::ContinuousSample { trial, value }),
        (trigger_code(), any::<u32>()).prop_map(|(code, onset)| EventKind::TriggerSent {
            code,
            onset_us: u64::from(onset)
        }),
        text().prop_map(|reason| EventKind::Abort { reason }),
    ]
}

/// Arbitrary time-ordered logs over a plan with `trials` trials.
pub fn session_log(trials: usize) -> impl Strategy<Value = SessionLog> {
    (
        0u64..4_000_000_000_000_000,
        vec((0u64..5_000_000, event_kind(trials)), 0..60),
        any::<bool>(),
    )
        .prop_map(|(epoch, steps, ends)| {
            let mut log = SessionLog::new(epoch);
            let mut t = 0;
            for (dt, kind) in steps {
                t += dt;
                log.push(t, kind);
            }
            if ends {
                log.push(t, EventKind::SessionEnd);
            }
            log
        })
}
