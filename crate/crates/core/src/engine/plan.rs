use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{
    validate_spec, ErrorCode, ExperimentSpec, Location, StudyType, ValidateError, ValidationReport,
};
use crate::stim_array::{build_array, interleave_baseline, ArrayError, StimulusArray, TrialItem};
use crate::trigger::TriggerCode;
use crate::wav::{probe_wav, Clip, WavInfo};

pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Single,
    Pair,
    BaselineThenSingle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub kind: TrialKind,
    /// Stimulus indices in presentation order; the baseline comes first in
    /// `BaselineThenSingle` trials.
    pub stimuli: Vec<usize>,
    /// Indices into the spec's questions, asked after the last presentation.
    pub questions: Vec<usize>,
    /// Onset code per entry of `stimuli`; empty when the study sends none.
    pub onset_codes: Vec<TriggerCode>,
    pub response_triggers: bool,
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedStimulus {
    pub file: String,
    pub sha256: String,
    pub wav: WavInfo,
}

/// The compiled, seed-resolved session for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub format_version: u32,
    pub spec_digest: String,
    pub subject_id: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub stimuli: Vec<PlannedStimulus>,
    pub trials: Vec<TrialPlan>,
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("spec has {} validation error(s)", .0.errors.len())]
    ValidationFailed(ValidationReport),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    StimulusRoot(#[from] ValidateError),
    #[error("subject id {0:?} must be non-empty ASCII letters, digits, '-' or '_'")]
    InvalidSubjectId(String),
    #[error("reading stimulus {file}: {message}")]
    Stimulus { file: String, message: String },
}

#[derive(Debug, Error)]
pub enum PlanFileError {
    #[error("plan file is not valid: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("plan format version {0} is not supported")]
    UnsupportedVersion(u32),
}

impl SessionPlan {
    /// Canonical serialized form (pretty JSON, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plans always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PlanFileError> {
        let plan: SessionPlan = serde_json::from_str(text)?;
        if plan.format_version != PLAN_FORMAT_VERSION {
            return Err(PlanFileError::UnsupportedVersion(plan.format_version));
        }
        Ok(plan)
    }

    pub fn digest(&self) -> String {
        crate::sha256_hex(self.to_json().as_bytes())
    }

    pub fn clip(&self, index: usize, label: Option<String>) -> Clip {
        Clip {
            index,
            info: self.stimuli[index].wav,
            label,
        }
    }

    pub fn onset_code_count(&self) -> usize {
        self.trials.iter().map(|t| t.onset_codes.len()).sum()
    }
}

pub fn valid_subject_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Validates, orders and hashes: everything a session needs, resolved.
pub fn compile_plan(
    spec: &ExperimentSpec,
    subject_id: &str,
    seed: u64,
    stim_root: &Path,
) -> Result<SessionPlan, CompileError> {
    if !valid_subject_id(subject_id) {
        return Err(CompileError::InvalidSubjectId(subject_id.to_string()));
    }
    let report = validate_spec(spec, stim_root)?;
    if !report.is_runnable() {
        return Err(CompileError::ValidationFailed(report));
    }
    let trials = build_trials(spec, seed)?;

    let mut stimuli = Vec::with_capacity(spec.stimuli.len());
    for entry in &spec.stimuli {
        let path = stim_root.join(&entry.file);
        let stimulus_err = |message: String| CompileError::Stimulus {
            file: entry.file.clone(),
            message,
        };
        let bytes = std::fs::read(&path).map_err(|e| stimulus_err(e.to_string()))?;
        let wav = crate::wav::probe_bytes(&bytes).map_err(|e| stimulus_err(e.to_string()))?;
        stimuli.push(PlannedStimulus {
            file: entry.file.clone(),
            sha256: crate::sha256_hex(&bytes),
            wav,
        });
    }

    Ok(SessionPlan {
        format_version: PLAN_FORMAT_VERSION,
        spec_digest: spec.digest(),
        subject_id: subject_id.to_string(),
        seed,
        spec: spec.clone(),
        stimuli,
        trials,
    })
}

/// The trial sequence for `(spec, seed)`; depends on nothing else.
pub fn build_trials(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TrialPlan>, ArrayError> {
    let array = build_array(&spec.randomization, &spec.stimuli, spec.repetitions, seed)?;
    let sends_triggers = spec.study_type.needs_trigger() && spec.trigger.is_some();
    let codes: Vec<TriggerCode> = if sends_triggers {
        spec.onset_codes()
            .iter()
            .map(|c| TriggerCode::parse(c))
            .collect::<Result<_, _>>()
            .map_err(|e| ArrayError::SchemeIncompatible(e.to_string()))?
    } else {
        Vec::new()
    };
    let response_triggers = sends_triggers
        && spec
            .trigger
            .as_ref()
            .is_some_and(|t| t.send_response_triggers);
    let continuous = spec.study_type == StudyType::ContinuousRating;
    let all_questions: Vec<usize> = (0..spec.questions.len()).collect();

    let groups: Vec<(TrialKind, Vec<usize>)> = if spec.study_type == StudyType::Neurophysiological {
        let baseline = spec.baseline_indices().first().copied();
        let interleaved = interleave_baseline(&array, baseline)?;
        interleaved
            .flat_indices()
            .chunks(2)
            .map(|c| (TrialKind::BaselineThenSingle, c.to_vec()))
            .collect()
    } else {
        array_groups(&array)
    };

    // Set tag of the experimental stimulus of each trial; pairs carry none.
    let set_of = |kind: TrialKind, stimuli: &[usize]| -> Option<&str> {
        match kind {
            TrialKind::Pair => None,
            _ => stimuli.last().and_then(|&i| spec.stimuli[i].set.as_deref()),
        }
    };

    let mut trials = Vec::with_capacity(groups.len());
    for (n, (kind, stimuli)) in groups.iter().enumerate() {
        let this_set = set_of(*kind, stimuli);
        let continues_set = this_set.is_some()
            && groups
                .get(n + 1)
                .is_some_and(|(k, s)| set_of(*k, s) == this_set);
        trials.push(TrialPlan {
            kind: *kind,
            stimuli: stimuli.clone(),
            questions: if continues_set {
                Vec::new()
            } else {
                all_questions.clone()
            },
            onset_codes: if sends_triggers {
                stimuli.iter().map(|&i| codes[i]).collect()
            } else {
                Vec::new()
            },
            response_triggers,
            continuous,
        });
    }
    Ok(trials)
}

fn array_groups(array: &StimulusArray) -> Vec<(TrialKind, Vec<usize>)> {
    array
        .items
        .iter()
        .map(|item| match *item {
            TrialItem::Single(i) => (TrialKind::Single, vec![i]),
            TrialItem::Pair(a, b) => (TrialKind::Pair, vec![a, b]),
        })
        .collect()
}

/// Integrity check of a compiled plan against the stimulus files on disk and,
/// optionally, the spec it claims to come from.
pub fn check_plan(
    plan: &SessionPlan,
    stim_root: &Path,
    spec: Option<&ExperimentSpec>,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    if plan.spec.digest() != plan.spec_digest {
        r.error(
            ErrorCode::SpecDigestMismatch,
            Location::field("plan", "spec"),
            "embedded spec does not match the recorded digest",
        );
    }
    if let Some(spec) = spec {
        if spec.digest() != plan.spec_digest {
            r.error(
                ErrorCode::SpecDigestMismatch,
                Location::section("spec"),
                "spec has changed since the plan was compiled",
            );
        }
    }
    if plan.stimuli.len() != plan.spec.stimuli.len()
        || plan
            .stimuli
            .iter()
            .zip(&plan.spec.stimuli)
            .any(|(p, s)| p.file != s.file)
    {
        r.error(
            ErrorCode::PlanInconsistent,
            Location::field("plan", "stimuli"),
            "stimulus table does not match the embedded spec",
        );
    }
    match build_trials(&plan.spec, plan.seed) {
        Ok(trials) if trials == plan.trials => {}
        _ => r.error(
            ErrorCode::PlanInconsistent,
            Location::field("plan", "trials"),
            "trial sequence does not follow from the spec and seed",
        ),
    }
    for (i, stim) in plan.stimuli.iter().enumerate() {
        let loc = Location::item("stimuli", i, Some("file"));
        let path = stim_root.join(&stim.file);
        match std::fs::read(&path) {
            Err(_) => r.error(
                ErrorCode::StimulusFileMissing,
                loc,
                format!("{} not found", path.display()),
            ),
            Ok(bytes) => {
                if crate::sha256_hex(&bytes) != stim.sha256 {
                    r.error(
                        ErrorCode::HashMismatch,
                        loc,
                        format!("{} changed since the plan was compiled", stim.file),
                    );
                } else if probe_wav(&path).map(|w| w != stim.wav).unwrap_or(true) {
                    r.error(
                        ErrorCode::PlanInconsistent,
                        loc,
                        format!("{} header differs from the plan", stim.file),
                    );
                }
            }
        }
    }
    r.sort();
    r
}
