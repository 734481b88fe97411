//! Session engine: compiles a spec into a per-subject plan, then drives the
//! plan through playback, the subject interface and the trigger link.

mod plan;
mod run;
mod subject;

pub use plan::{
    build_trials, check_plan, compile_plan, valid_subject_id, CompileError, PlanFileError,
    PlannedStimulus, SessionPlan, TrialKind, TrialPlan, PLAN_FORMAT_VERSION,
};
pub use run::{
    run_session, sample_count, EventKind, LogEvent, SessionError, SessionFailure, SessionLog,
};
pub use subject::{
    scripted_subject, Answer, AnswerPolicy, ScriptedSubject, SliderPolicy, SubjectError,
    SubjectPort, Waveform, DEFAULT_LATENCY_MS,
};
