use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::{SessionPlan, TrialKind, TrialPlan};
use super::subject::{SubjectError, SubjectPort};
use crate::clock::ClockHandle;
use crate::spec::{response_code, StudyType};
use crate::trigger::{TriggerCode, TriggerError, TriggerLink, TriggerMessage};
use crate::wav::{PlaybackError, PlaybackPort};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    SessionBegin {
        study: String,
        subject_id: String,
    },
    InstructionsShown,
    InstructionsAcknowledged,
    LabelShown {
        trial: usize,
        label: String,
    },
    BaselineOnset {
        trial: usize,
        index: usize,
        code: Option<TriggerCode>,
    },
    BaselineOffset {
        trial: usize,
        index: usize,
    },
    StimulusOnset {
        trial: usize,
        index: usize,
        code: Option<TriggerCode>,
    },
    StimulusOffset {
        trial: usize,
        index: usize,
    },
    QuestionShown {
        trial: usize,
        question: usize,
    },
    AnswerCommitted {
        trial: usize,
        question: usize,
        value: i64,
        rt_ms: f64,
    },
    ContinuousSample {
        trial: usize,
        value: f64,
    },
    TriggerSent {
        code: TriggerCode,
        onset_us: u64,
    },
    SessionEnd,
    Abort {
        reason: String,
    },
}

impl EventKind {
    /// The `event` tag this kind serializes with.
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionBegin { .. } => "session_begin",
            EventKind::InstructionsShown => "instructions_shown",
            EventKind::InstructionsAcknowledged => "instructions_acknowledged",
            EventKind::LabelShown { .. } => "label_shown",
            EventKind::BaselineOnset { .. } => "baseline_onset",
            EventKind::BaselineOffset { .. } => "baseline_offset",
            EventKind::StimulusOnset { .. } => "stimulus_onset",
            EventKind::StimulusOffset { .. } => "stimulus_offset",
            EventKind::QuestionShown { .. } => "question_shown",
            EventKind::AnswerCommitted { .. } => "answer_committed",
            EventKind::ContinuousSample { .. } => "continuous_sample",
            EventKind::TriggerSent { .. } => "trigger_sent",
            EventKind::SessionEnd => "session_end",
            EventKind::Abort { .. } => "abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t_us: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Time-ordered record of everything that happened in a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    /// Wall-clock time of `t_us == 0`, microseconds since 1970.
    pub epoch_unix_us: u64,
    pub events: Vec<LogEvent>,
}

impl SessionLog {
    pub fn new(epoch_unix_us: u64) -> Self {
        Self {
            epoch_unix_us,
            events: Vec::new(),
        }
    }

    pub fn last_t_us(&self) -> u64 {
        self.events.last().map(|e| e.t_us).unwrap_or(0)
    }

    pub fn push(&mut self, t_us: u64, kind: EventKind) {
        debug_assert!(t_us >= self.last_t_us(), "log timestamps must not decrease");
        self.events.push(LogEvent { t_us, kind });
    }

    pub fn is_complete(&self) -> bool {
        matches!(
            self.events.last(),
            Some(LogEvent {
                kind: EventKind::SessionEnd,
                ..
            })
        )
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match &e.kind {
            EventKind::Abort { reason } => Some(reason.as_str()),
            _ => None,
        })
    }

    /// One JSON object per line, each ending in `\n`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn answers(&self) -> impl Iterator<Item = (usize, usize, i64, f64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::AnswerCommitted {
                trial,
                question,
                value,
                rt_ms,
            } => Some((trial, question, value, rt_ms)),
            _ => None,
        })
    }

    pub fn triggers(&self) -> impl Iterator<Item = (TriggerCode, u64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::TriggerSent { code, onset_us } => Some((code, onset_us)),
            _ => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("subject side ended the session: {0}")]
    SubjectAbort(#[from] SubjectError),
    #[error("trigger link failed: {0}")]
    TriggerFailure(#[from] TriggerError),
    #[error("playback failed: {0}")]
    PlaybackFailure(#[from] PlaybackError),
    #[error("{study} sessions {}", if *.required { "need a trigger link" } else { "take no trigger link" })]
    TriggerLinkMismatch { study: StudyType, required: bool },
}

/// A failed session together with everything logged up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SessionFailure {
    pub error: SessionError,
    pub log: SessionLog,
}

/// Runs a compiled plan to completion against the given ports.
///
/// Every presentation's trigger carries the onset timestamp returned by the
/// playback port, and the log records the `TriggerSent` at that same instant.
pub fn run_session(
    plan: &SessionPlan,
    subject: &mut dyn SubjectPort,
    playback: &mut dyn PlaybackPort,
    trigger: Option<&mut TriggerLink>,
    clock: &ClockHandle,
) -> Result<SessionLog, SessionFailure> {
    let study = plan.spec.study_type;
    if study.needs_trigger() != trigger.is_some() {
        return Err(SessionFailure {
            error: SessionError::TriggerLinkMismatch {
                study,
                required: study.needs_trigger(),
            },
            log: SessionLog::new(clock.epoch_unix_us()),
        });
    }
    let mut runner = Runner {
        plan,
        subject,
        playback,
        trigger,
        clock,
        log: SessionLog::new(clock.epoch_unix_us()),
    };
    match runner.run() {
        Ok(()) => Ok(runner.log),
        Err(error) => {
            if let Some(link) = runner.trigger.as_deref_mut() {
                let _ = link.end();
                let _ = link.close();
            }
            let t = runner.clock.now_us().max(runner.log.last_t_us());
            runner.log.push(
                t,
                EventKind::Abort {
                    reason: error.to_string(),
                },
            );
            Err(SessionFailure {
                error,
                log: runner.log,
            })
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Baseline,
    Stimulus,
}

struct Runner<'a> {
    plan: &'a SessionPlan,
    subject: &'a mut dyn SubjectPort,
    playback: &'a mut dyn PlaybackPort,
    trigger: Option<&'a mut TriggerLink>,
    clock: &'a ClockHandle,
    log: SessionLog,
}

impl Runner<'_> {
    fn now(&self) -> u64 {
        self.clock.now_us().max(self.log.last_t_us())
    }

    fn isi(&self) {
        let isi_us = u64::from(self.plan.spec.isi_ms) * 1000;
        self.clock.wait_until(self.clock.now_us() + isi_us);
    }

    fn run(&mut self) -> Result<(), SessionError> {
        let spec = &self.plan.spec;
        let t = self.now();
        self.log.push(
            t,
            EventKind::SessionBegin {
                study: spec.study_type.as_str().to_string(),
                subject_id: self.plan.subject_id.clone(),
            },
        );
        self.subject.apply_theme(&spec.display)?;
        if let Some(link) = self.trigger.as_deref_mut() {
            link.begin()?;
        }
        if let Some(task) = spec
            .continuous_task
            .as_ref()
            .filter(|_| spec.study_type == StudyType::ContinuousRating)
        {
            let t = self.now();
            self.log.push(t, EventKind::InstructionsShown);
            let ack = self.subject.show_instructions(&task.instructions)?;
            self.clock.wait_until(ack);
            let t = self.now();
            self.log.push(t, EventKind::InstructionsAcknowledged);
        }

        for (n, trial) in self.plan.trials.iter().enumerate() {
            if n > 0 {
                self.isi();
            }
            self.run_trial(n, trial)?;
        }

        if let Some(link) = self.trigger.as_deref_mut() {
            link.end()?;
        }
        let t = self.now();
        self.log.push(t, EventKind::SessionEnd);
        self.subject.session_done()?;
        if let Some(link) = self.trigger.as_deref_mut() {
            link.close()?;
        }
        Ok(())
    }

    fn run_trial(&mut self, n: usize, trial: &TrialPlan) -> Result<(), SessionError> {
        for (pos, &index) in trial.stimuli.iter().enumerate() {
            if pos > 0 {
                self.isi();
            }
            let role = match trial.kind {
                TrialKind::BaselineThenSingle if pos == 0 => Role::Baseline,
                _ => Role::Stimulus,
            };
            let label = match trial.kind {
                TrialKind::Pair => Some(
                    self.plan.spec.stimuli[index]
                        .label
                        .clone()
                        .unwrap_or_else(|| ["A", "B"][pos.min(1)].to_string()),
                ),
                _ => None,
            };
            let code = trial.onset_codes.get(pos).copied();
            self.present(n, index, role, label, code, trial.continuous)?;
        }

        let spec = &self.plan.spec;
        for &qi in &trial.questions {
            let question = &spec.questions[qi];
            let shown = self.now();
            self.log.push(
                shown,
                EventKind::QuestionShown {
                    trial: n,
                    question: qi,
                },
            );
            let answer = self.subject.show_question(question)?;
            if !question.contains(answer.value) {
                return Err(SubjectError::AnswerOutOfRange {
                    value: answer.value,
                    min: question.scale_min,
                    max: question.scale_max,
                }
                .into());
            }
            self.clock.wait_until(answer.commit_us);
            let commit = answer.commit_us.max(shown);
            self.log.push(
                commit,
                EventKind::AnswerCommitted {
                    trial: n,
                    question: qi,
                    value: answer.value,
                    rt_ms: (commit - shown) as f64 / 1000.0,
                },
            );
            if trial.response_triggers {
                let code = response_code(answer.value)
                    .and_then(|c| TriggerCode::parse(&c).ok())
                    .ok_or_else(|| {
                        TriggerError::CodeInvalid(crate::trigger::CodeInvalid(
                            answer.value.to_string(),
                        ))
                    })?;
                self.send_trigger(code, commit, 0)?;
            }
        }
        Ok(())
    }

    fn present(
        &mut self,
        trial: usize,
        index: usize,
        role: Role,
        label: Option<String>,
        code: Option<TriggerCode>,
        continuous: bool,
    ) -> Result<(), SessionError> {
        let clip = self.plan.clip(index, label.clone());
        if let Some(label) = label {
            let t = self.now();
            self.log.push(t, EventKind::LabelShown { trial, label });
        }
        let requested = self.now();
        let onset = self.playback.start(&clip, requested)?.max(requested);
        self.log.push(
            onset,
            match role {
                Role::Baseline => EventKind::BaselineOnset { trial, index, code },
                Role::Stimulus => EventKind::StimulusOnset { trial, index, code },
            },
        );
        let duration_us = clip.info.duration_us();
        if let Some(code) = code {
            self.send_trigger(code, onset, duration_us)?;
        }

        let task = self.plan.spec.continuous_task.as_ref();
        if let (true, Role::Stimulus, Some(task)) = (continuous, role, task) {
            self.subject.start_continuous(task, onset, duration_us)?;
            let period_us = u64::from(task.sample_period_ms.max(1)) * 1000;
            for k in 1..=sample_count(&clip.info, task.sample_period_ms) {
                let t = onset + k * period_us;
                if t > self.clock.now_us() && self.playback.is_done(&clip)? {
                    break;
                }
                self.clock.wait_until(t);
                let value = self.subject.current_slider()?.clamp(0.0, 1.0);
                self.log.push(
                    t.max(self.log.last_t_us()),
                    EventKind::ContinuousSample { trial, value },
                );
            }
        }

        let offset = self.playback.wait_done(&clip)?.max(self.log.last_t_us());
        self.log.push(
            offset,
            match role {
                Role::Baseline => EventKind::BaselineOffset { trial, index },
                Role::Stimulus => EventKind::StimulusOffset { trial, index },
            },
        );
        if continuous && role == Role::Stimulus {
            self.subject.stop_continuous()?;
        }
        Ok(())
    }

    fn send_trigger(
        &mut self,
        code: TriggerCode,
        onset_us: u64,
        duration_us: u64,
    ) -> Result<(), SessionError> {
        let link = self
            .trigger
            .as_deref_mut()
            .expect("trigger presence checked before the run");
        link.send_event(&TriggerMessage {
            code,
            onset_us,
            duration_us,
        })?;
        self.log.push(
            onset_us.max(self.log.last_t_us()),
            EventKind::TriggerSent { code, onset_us },
        );
        Ok(())
    }
}

/// Number of slider samples in a clip: one every period after onset, up to
/// and including the clip's end.
pub fn sample_count(info: &crate::wav::WavInfo, sample_period_ms: u32) -> u64 {
    // floor(n_frames / rate / period) in exact integer arithmetic.
    let denom = u128::from(sample_period_ms.max(1)) * u128::from(info.sample_rate_hz.max(1));
    (u128::from(info.n_frames) * 1000 / denom) as u64
}
