use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::clock::ClockHandle;
use crate::spec::{ContinuousTaskConfig, DisplayStyle, Question};
use crate::stim_array::SeededRng;

/// Default simulated response latency.
pub const DEFAULT_LATENCY_MS: u64 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Answer {
    pub value: i64,
    /// When the subject committed the answer; the engine waits until then.
    pub commit_us: u64,
}

#[derive(Debug, Error)]
pub enum SubjectError {
    #[error("subject interface disconnected")]
    Disconnected,
    #[error("scripted answers exhausted after {0} question(s)")]
    ScriptExhausted(usize),
    #[error("answer {value} is outside the scale {min}..={max}")]
    AnswerOutOfRange { value: i64, min: i64, max: i64 },
    #[error("subject interface failed: {0}")]
    Interface(String),
}

/// The subject-facing side of a session: a browser UI in live runs, a
/// script in headless ones.
pub trait SubjectPort {
    fn apply_theme(&mut self, _style: &DisplayStyle) -> Result<(), SubjectError> {
        Ok(())
    }

    /// Shows the text and returns the time the subject acknowledged it.
    fn show_instructions(&mut self, text: &str) -> Result<u64, SubjectError>;

    fn show_question(&mut self, question: &Question) -> Result<Answer, SubjectError>;

    fn start_continuous(
        &mut self,
        task: &ContinuousTaskConfig,
        onset_us: u64,
        duration_us: u64,
    ) -> Result<(), SubjectError>;

    /// Latest slider position in `[0, 1]`.
    fn current_slider(&mut self) -> Result<f64, SubjectError>;

    fn stop_continuous(&mut self) -> Result<(), SubjectError>;

    fn session_done(&mut self) -> Result<(), SubjectError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnswerPolicy {
    Fixed(i64),
    Midpoint,
    /// One value per question asked, in order.
    Script(Vec<i64>),
    /// Uniform over each question's scale.
    Uniform {
        seed: u64,
    },
}

/// Slider position as a function of `(seconds since onset, clip seconds)`.
pub type Waveform = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SliderPolicy {
    Constant(f64),
    /// Rises linearly from 0 at onset to 1 at the end of the clip.
    Ramp,
    Sine {
        period_ms: u32,
    },
    Custom(Waveform),
}

impl fmt::Debug for SliderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliderPolicy::Constant(v) => write!(f, "Constant({v})"),
            SliderPolicy::Ramp => f.write_str("Ramp"),
            SliderPolicy::Sine { period_ms } => write!(f, "Sine {{ period_ms: {period_ms} }}"),
            SliderPolicy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SliderPolicy {
    pub fn value_at(&self, elapsed_s: f64, duration_s: f64) -> f64 {
        let v = match self {
            SliderPolicy::Constant(v) => *v,
            SliderPolicy::Ramp if duration_s > 0.0 => elapsed_s / duration_s,
            SliderPolicy::Ramp => 1.0,
            SliderPolicy::Sine { period_ms } => {
                let period = f64::from((*period_ms).max(1)) / 1000.0;
                0.5 + 0.5 * (std::f64::consts::TAU * elapsed_s / period).sin()
            }
            SliderPolicy::Custom(f) => f(elapsed_s, duration_s),
        };
        v.clamp(0.0, 1.0)
    }
}

/// A deterministic simulated subject.
#[derive(Debug)]
pub struct ScriptedSubject {
    answers: AnswerPolicy,
    slider: SliderPolicy,
    latency_us: u64,
    clock: ClockHandle,
    rng: SeededRng,
    asked: usize,
    continuous: Option<(u64, u64)>,
}

pub fn scripted_subject(
    answers: AnswerPolicy,
    slider: SliderPolicy,
    clock: ClockHandle,
) -> ScriptedSubject {
    let seed = match answers {
        AnswerPolicy::Uniform { seed } => seed,
        _ => 0,
    };
    ScriptedSubject {
        answers,
        slider,
        latency_us: DEFAULT_LATENCY_MS * 1000,
        clock,
        rng: SeededRng::new(seed),
        asked: 0,
        continuous: None,
    }
}

impl ScriptedSubject {
    pub fn with_latency_ms(mut self, ms: u64) -> Self {
        self.latency_us = ms * 1000;
        self
    }

    pub fn questions_answered(&self) -> usize {
        self.asked
    }
}

impl SubjectPort for ScriptedSubject {
    fn show_instructions(&mut self, _text: &str) -> Result<u64, SubjectError> {
        Ok(self.clock.now_us() + self.latency_us)
    }

    fn show_question(&mut self, q: &Question) -> Result<Answer, SubjectError> {
        let value = match &self.answers {
            AnswerPolicy::Fixed(v) => *v,
            AnswerPolicy::Midpoint => q.midpoint(),
            AnswerPolicy::Script(values) => *values
                .get(self.asked)
                .ok_or(SubjectError::ScriptExhausted(self.asked))?,
            AnswerPolicy::Uniform { .. } => {
                let span = (q.scale_max - q.scale_min) as u64 + 1;
                q.scale_min + self.rng.below(span) as i64
            }
        };
        self.asked += 1;
        Ok(Answer {
            value,
            commit_us: self.clock.now_us() + self.latency_us,
        })
    }

    fn start_continuous(
        &mut self,
        _task: &ContinuousTaskConfig,
        onset_us: u64,
        duration_us: u64,
    ) -> Result<(), SubjectError> {
        self.continuous = Some((onset_us, duration_us));
        Ok(())
    }

    fn current_slider(&mut self) -> Result<f64, SubjectError> {
        let (onset, duration) = self
            .continuous
            .ok_or_else(|| SubjectError::Interface("no continuous task running".into()))?;
        let elapsed = self.clock.now_us().saturating_sub(onset) as f64 / 1e6;
        Ok(self.slider.value_at(elapsed, duration as f64 / 1e6))
    }

    fn stop_continuous(&mut self) -> Result<(), SubjectError> {
        self.continuous = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;

    fn question(min: i64, max: i64) -> Question {
        Question {
            prompt: "How pleasant?".into(),
            scale_min: min,
            scale_max: max,
            anchor_labels: None,
        }
    }

    #[test]
    fn script_runs_out() {
        let clock = VirtualClock::new();
        let mut s = scripted_subject(
            AnswerPolicy::Script(vec![4]),
            SliderPolicy::Constant(0.5),
            clock.handle(),
        );
        assert_eq!(s.show_question(&question(1, 9)).unwrap().value, 4);
        assert!(matches!(
            s.show_question(&question(1, 9)),
            Err(SubjectError::ScriptExhausted(1))
        ));
    }

    #[test]
    fn uniform_answers_stay_on_scale() {
        let clock = VirtualClock::new();
        let mut s = scripted_subject(
            AnswerPolicy::Uniform { seed: 9 },
            SliderPolicy::Ramp,
            clock.handle(),
        );
        let q = question(-3, 3);
        for _ in 0..200 {
            assert!(q.contains(s.show_question(&q).unwrap().value));
        }
    }

    #[test]
    fn commit_follows_latency() {
        let clock = VirtualClock::new();
        clock.advance(5_000);
        let mut s = scripted_subject(AnswerPolicy::Midpoint, SliderPolicy::Ramp, clock.handle())
            .with_latency_ms(300);
        let a = s.show_question(&question(1, 7)).unwrap();
        assert_eq!(
            a,
            Answer {
                value: 4,
                commit_us: 305_000
            }
        );
    }

    #[test]
    fn slider_policies_clamp() {
        assert_eq!(SliderPolicy::Ramp.value_at(5.0, 10.0), 0.5);
        assert_eq!(SliderPolicy::Ramp.value_at(12.0, 10.0), 1.0);
        assert_eq!(SliderPolicy::Constant(1.7).value_at(0.0, 1.0), 1.0);
        let sine = SliderPolicy::Sine { period_ms: 1000 };
        assert!((sine.value_at(0.25, 10.0) - 1.0).abs() < 1e-12);
    }
}
