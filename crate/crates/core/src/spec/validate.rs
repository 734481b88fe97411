//! Feasibility checks. Findings are data: a spec is runnable iff the report
//! has no errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{response_code, ExperimentSpec, StudyType, TriggerMode, BASELINE_CODE, MAX_SCALE_SPAN};
use crate::stim_array::RandomizationScheme;
use crate::trigger::TriggerCode;
use crate::wav::{probe_wav, WavError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    EmptyName,
    NoStimuli,
    ComparisonNeedsTwoStimuli,
    TriggerRequired,
    BaselineMissing,
    BaselineNotUnique,
    ContinuousTaskRequired,
    QuestionsRequired,
    InvalidRepetitions,
    DuplicateStimulusFile,
    InvalidStimulusPath,
    EmptyStimType,
    EmptyCondition,
    InvalidScale,
    ScaleSpanTooLarge,
    SamplePeriodOutOfRange,
    InvalidTriggerCode,
    DuplicateTriggerCode,
    CodeMapUnknownFile,
    MissingTcpEndpoint,
    ResponseCodeRange,
    InvalidColor,
    InvalidFontSize,
    InvalidWeights,
    AllZeroWeights,
    WeightCountMismatch,
    InvalidDraws,
    PairSchemeRequired,
    PairSchemeNotAllowed,
    StimulusFileMissing,
    StimulusInvalidWav,
    // Plan integrity.
    HashMismatch,
    SpecDigestMismatch,
    PlanInconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WarningCode {
    DuplicateTypeCondition,
    TriggerIgnored,
    BaselineIgnored,
    ContinuousTaskIgnored,
}

macro_rules! display_as_debug {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(self, f)
            }
        }
    )*};
}
display_as_debug!(ErrorCode, WarningCode);

/// Where in the spec (or plan) a finding points.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub section: String,
    pub index: Option<usize>,
    pub field: Option<String>,
}

impl Location {
    pub fn section(section: &str) -> Self {
        Self {
            section: section.into(),
            index: None,
            field: None,
        }
    }

    pub fn field(section: &str, field: &str) -> Self {
        Self {
            section: section.into(),
            index: None,
            field: Some(field.into()),
        }
    }

    pub fn item(section: &str, index: usize, field: Option<&str>) -> Self {
        Self {
            section: section.into(),
            index: Some(index),
            field: field.map(Into::into),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.section)?;
        if let Some(i) = self.index {
            write!(f, "[{i}]")?;
        }
        if let Some(field) = &self.field {
            write!(f, ".{field}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding<C> {
    pub code: C,
    pub message: String,
    pub location: Location,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding<ErrorCode>>,
    pub warnings: Vec<Finding<WarningCode>>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, code: ErrorCode, location: Location, message: impl Into<String>) {
        self.errors.push(Finding {
            code,
            message: message.into(),
            location,
        });
    }

    pub fn warn(&mut self, code: WarningCode, location: Location, message: impl Into<String>) {
        self.warnings.push(Finding {
            code,
            message: message.into(),
            location,
        });
    }

    pub fn has_error(&self, code: ErrorCode) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }

    /// Orders findings by location, then code.
    pub fn sort(&mut self) {
        self.errors
            .sort_by(|a, b| (&a.location, a.code).cmp(&(&b.location, b.code)));
        self.warnings
            .sort_by(|a, b| (&a.location, a.code).cmp(&(&b.location, b.code)));
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error {} at {}: {}", e.code, e.location, e.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning {} at {}: {}", w.code, w.location, w.message)?;
        }
        writeln!(
            f,
            "{} error(s), {} warning(s)",
            self.errors.len(),
            self.warnings.len()
        )
    }
}

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("stimulus root {path} is unreadable: {source}")]
    StimulusRootUnreadable {
        path: String,
        source: std::io::Error,
    },
}

/// Checks every spec invariant, then probes each stimulus under `stim_root`.
pub fn validate_spec(
    spec: &ExperimentSpec,
    stim_root: &Path,
) -> Result<ValidationReport, ValidateError> {
    std::fs::read_dir(stim_root).map_err(|source| ValidateError::StimulusRootUnreadable {
        path: stim_root.display().to_string(),
        source,
    })?;
    let mut report = check_structure(spec);
    for (i, stim) in spec.stimuli.iter().enumerate() {
        if !is_relative_clean(&stim.file) {
            continue;
        }
        let path = stim_root.join(&stim.file);
        match probe_wav(&path) {
            Ok(_) => {}
            Err(WavError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => report.error(
                ErrorCode::StimulusFileMissing,
                Location::item("stimuli", i, Some("file")),
                format!("{} not found", path.display()),
            ),
            Err(e) => report.error(
                ErrorCode::StimulusInvalidWav,
                Location::item("stimuli", i, Some("file")),
                format!("{}: {e}", stim.file),
            ),
        }
    }
    report.sort();
    Ok(report)
}

/// The filesystem-independent part of validation.
pub(crate) fn check_structure(spec: &ExperimentSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let study = spec.study_type;

    if spec.name.trim().is_empty() {
        r.error(
            ErrorCode::EmptyName,
            Location::section("name"),
            "study name is empty",
        );
    }
    if spec.repetitions == 0 {
        r.error(
            ErrorCode::InvalidRepetitions,
            Location::section("repetitions"),
            "repetitions must be at least 1",
        );
    }

    let baselines = spec.baseline_indices();
    let pool_len = spec.stimuli.len() - baselines.len();
    if pool_len == 0 {
        r.error(
            ErrorCode::NoStimuli,
            Location::section("stimuli"),
            "no non-baseline stimuli declared",
        );
    }
    if study == StudyType::ComparisonRating && spec.stimuli.len() < 2 {
        r.error(
            ErrorCode::ComparisonNeedsTwoStimuli,
            Location::section("stimuli"),
            "comparison studies need at least two stimuli",
        );
    }
    if study.needs_trigger() && spec.trigger.is_none() {
        r.error(
            ErrorCode::TriggerRequired,
            Location::section("trigger"),
            format!("{} studies need a trigger section", study),
        );
    }
    if !study.needs_trigger() && spec.trigger.is_some() {
        r.warn(
            WarningCode::TriggerIgnored,
            Location::section("trigger"),
            format!("{} studies send no triggers", study),
        );
    }
    if study == StudyType::Neurophysiological {
        match baselines.len() {
            1 => {}
            0 => r.error(
                ErrorCode::BaselineMissing,
                Location::section("stimuli"),
                "exactly one stimulus must be flagged baseline",
            ),
            n => r.error(
                ErrorCode::BaselineNotUnique,
                Location::section("stimuli"),
                format!("{n} stimuli flagged baseline; exactly one allowed"),
            ),
        }
    } else {
        for &i in &baselines {
            r.warn(
                WarningCode::BaselineIgnored,
                Location::item("stimuli", i, Some("baseline")),
                "baseline stimuli are only presented in neurophysiological studies",
            );
        }
    }
    match (&spec.continuous_task, study) {
        (None, StudyType::ContinuousRating) => r.error(
            ErrorCode::ContinuousTaskRequired,
            Location::section("continuous_task"),
            "continuous rating studies need a continuous_task section",
        ),
        (Some(_), s) if s != StudyType::ContinuousRating => r.warn(
            WarningCode::ContinuousTaskIgnored,
            Location::section("continuous_task"),
            "only continuous rating studies sample a slider",
        ),
        (Some(task), _) if !(10..=1000).contains(&task.sample_period_ms) => r.error(
            ErrorCode::SamplePeriodOutOfRange,
            Location::field("continuous_task", "sample_period_ms"),
            format!("{} ms outside 10..=1000", task.sample_period_ms),
        ),
        _ => {}
    }
    if study.needs_questions() && spec.questions.is_empty() {
        r.error(
            ErrorCode::QuestionsRequired,
            Location::section("questions"),
            format!("{} studies need at least one question", study),
        );
    }

    check_stimuli(spec, &mut r);
    check_questions(spec, &mut r);
    check_randomization(spec, pool_len, &mut r);
    check_trigger(spec, &mut r);
    check_display(spec, &mut r);
    r.sort();
    r
}

fn is_relative_clean(file: &str) -> bool {
    let path = Path::new(file);
    !file.is_empty()
        && path
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn check_stimuli(spec: &ExperimentSpec, r: &mut ValidationReport) {
    let mut files = BTreeSet::new();
    let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (i, s) in spec.stimuli.iter().enumerate() {
        if !is_relative_clean(&s.file) {
            r.error(
                ErrorCode::InvalidStimulusPath,
                Location::item("stimuli", i, Some("file")),
                format!(
                    "{:?} must be a relative path inside the stimulus root",
                    s.file
                ),
            );
        }
        if !files.insert(s.file.as_str()) {
            r.error(
                ErrorCode::DuplicateStimulusFile,
                Location::item("stimuli", i, Some("file")),
                format!("{} is listed more than once", s.file),
            );
        }
        if s.stim_type.trim().is_empty() {
            r.error(
                ErrorCode::EmptyStimType,
                Location::item("stimuli", i, Some("stim_type")),
                "stim_type is empty",
            );
        }
        if s.condition.trim().is_empty() {
            r.error(
                ErrorCode::EmptyCondition,
                Location::item("stimuli", i, Some("condition")),
                "condition is empty",
            );
        }
        if !s.baseline {
            if let Some(first) = pairs.insert((&s.stim_type, &s.condition), i) {
                r.warn(
                    WarningCode::DuplicateTypeCondition,
                    Location::item("stimuli", i, None),
                    format!(
                        "({}, {}) already used by stimuli[{first}]",
                        s.stim_type, s.condition
                    ),
                );
            }
        }
    }
}

fn check_questions(spec: &ExperimentSpec, r: &mut ValidationReport) {
    for (i, q) in spec.questions.iter().enumerate() {
        if q.scale_min >= q.scale_max {
            r.error(
                ErrorCode::InvalidScale,
                Location::item("questions", i, None),
                format!("scale {}..{} is empty", q.scale_min, q.scale_max),
            );
        } else if q.scale_max.saturating_sub(q.scale_min) > MAX_SCALE_SPAN {
            r.error(
                ErrorCode::ScaleSpanTooLarge,
                Location::item("questions", i, None),
                format!("scale spans more than {MAX_SCALE_SPAN} steps"),
            );
        }
    }
}

fn check_randomization(spec: &ExperimentSpec, pool_len: usize, r: &mut ValidationReport) {
    let loc = Location::section("randomization");
    let comparison = spec.study_type == StudyType::ComparisonRating;
    match &spec.randomization {
        RandomizationScheme::AllPairs { .. } if !comparison => r.error(
            ErrorCode::PairSchemeNotAllowed,
            loc,
            "all-pairs is only valid for comparison studies",
        ),
        s if comparison && !s.produces_pairs() => r.error(
            ErrorCode::PairSchemeRequired,
            loc,
            "comparison studies need the all-pairs scheme",
        ),
        RandomizationScheme::ProbabilitySelect {
            weights,
            draws,
            replacement,
        } => {
            if weights.len() != pool_len {
                r.error(
                    ErrorCode::WeightCountMismatch,
                    Location::field("randomization", "weights"),
                    format!("{} weights for {pool_len} candidate stimuli", weights.len()),
                );
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                r.error(
                    ErrorCode::InvalidWeights,
                    Location::field("randomization", "weights"),
                    "weights must be finite and non-negative",
                );
            } else if weights.iter().sum::<f64>() <= 0.0 {
                r.error(
                    ErrorCode::AllZeroWeights,
                    Location::field("randomization", "weights"),
                    "weights sum to zero",
                );
            }
            let positive = weights.iter().filter(|w| **w > 0.0).count();
            if *draws == 0 || (!replacement && *draws > positive.min(pool_len)) {
                r.error(
                    ErrorCode::InvalidDraws,
                    Location::field("randomization", "draws"),
                    format!("{draws} draws cannot be made without replacement"),
                );
            }
        }
        _ => {}
    }
}

fn check_trigger(spec: &ExperimentSpec, r: &mut ValidationReport) {
    let Some(trig) = &spec.trigger else { return };
    if trig.mode == TriggerMode::Tcp && (trig.host.trim().is_empty() || trig.port == 0) {
        r.error(
            ErrorCode::MissingTcpEndpoint,
            Location::section("trigger"),
            "tcp mode needs a host and a non-zero port",
        );
    }
    for file in trig.code_map.keys() {
        if !spec.stimuli.iter().any(|s| &s.file == file) {
            r.error(
                ErrorCode::CodeMapUnknownFile,
                Location::field("trigger", "code_map"),
                format!("{file} is not a declared stimulus"),
            );
        }
    }
    if !spec.study_type.needs_trigger() {
        return;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, code) in spec.onset_codes().into_iter().enumerate() {
        let loc = Location::item("stimuli", i, Some("code"));
        if TriggerCode::parse(&code).is_err() {
            r.error(
                ErrorCode::InvalidTriggerCode,
                loc,
                format!("{code:?} is not four printable ASCII characters"),
            );
        } else if code == BASELINE_CODE {
            // Several baselines are already a BaselineNotUnique error.
            if !spec.stimuli[i].baseline {
                r.error(
                    ErrorCode::DuplicateTriggerCode,
                    loc,
                    format!("{BASELINE_CODE} is reserved for the baseline stimulus"),
                );
            }
        } else if let Some(first) = seen.insert(code.clone(), i) {
            r.error(
                ErrorCode::DuplicateTriggerCode,
                loc,
                format!("{code} already assigned to stimuli[{first}]"),
            );
        }
    }
    if trig.send_response_triggers {
        for (i, q) in spec.questions.iter().enumerate() {
            if response_code(q.scale_min).is_none() || response_code(q.scale_max).is_none() {
                r.error(
                    ErrorCode::ResponseCodeRange,
                    Location::item("questions", i, None),
                    "response triggers need scale values between -99 and 999",
                );
            }
        }
    }
}

fn valid_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit())
}

fn check_display(spec: &ExperimentSpec, r: &mut ValidationReport) {
    for (field, value) in [
        ("background_color", &spec.display.background_color),
        ("font_color", &spec.display.font_color),
    ] {
        if !valid_color(value) {
            r.error(
                ErrorCode::InvalidColor,
                Location::field("display", field),
                format!("{value:?} is not a #RRGGBB color"),
            );
        }
    }
    if spec.display.font_size_pt == 0 {
        r.error(
            ErrorCode::InvalidFontSize,
            Location::field("display", "font_size_pt"),
            "font size must be positive",
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{
        ContinuousTaskConfig, Question, StimulusEntry, TriggerConfig, DEFAULT_PULSE_WIDTH_MS,
    };

    fn stim(file: &str, t: &str, c: &str) -> StimulusEntry {
        StimulusEntry {
            file: file.into(),
            stim_type: t.into(),
            condition: c.into(),
            ..StimulusEntry::default()
        }
    }

    fn question() -> Question {
        Question {
            prompt: "q".into(),
            scale_min: 1,
            scale_max: 9,
            anchor_labels: None,
        }
    }

    fn brs() -> ExperimentSpec {
        let mut spec = ExperimentSpec::new("s", StudyType::BehavioralRating);
        spec.stimuli = vec![stim("a.wav", "t", "x"), stim("b.wav", "t", "y")];
        spec.questions = vec![question()];
        spec
    }

    fn codes(report: &ValidationReport) -> Vec<ErrorCode> {
        report.errors.iter().map(|e| e.code).collect()
    }

    #[test]
    fn clean_spec_has_no_structural_errors() {
        assert!(check_structure(&brs()).is_runnable());
    }

    #[test]
    fn each_invariant_has_its_code() {
        let mut s = brs();
        s.questions.clear();
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::QuestionsRequired]
        );

        let mut s = brs();
        s.study_type = StudyType::Eeg;
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::TriggerRequired]
        );

        let mut s = brs();
        s.study_type = StudyType::ContinuousRating;
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::ContinuousTaskRequired]
        );

        let mut s = brs();
        s.study_type = StudyType::ComparisonRating;
        s.stimuli.truncate(1);
        s.randomization = RandomizationScheme::AllPairs { ordered: false };
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::ComparisonNeedsTwoStimuli]
        );

        let mut s = brs();
        s.questions[0].scale_max = 1;
        assert_eq!(codes(&check_structure(&s)), vec![ErrorCode::InvalidScale]);
        s.questions[0].scale_max = 102;
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::ScaleSpanTooLarge]
        );
    }

    #[test]
    fn neurophysiological_baseline_count() {
        let mut s = brs();
        s.study_type = StudyType::Neurophysiological;
        s.trigger = Some(TriggerConfig {
            mode: TriggerMode::SimulatedTtl,
            host: String::new(),
            port: 0,
            code_map: BTreeMap::new(),
            send_response_triggers: false,
            pulse_width_ms: DEFAULT_PULSE_WIDTH_MS,
        });
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::BaselineMissing]
        );
        s.stimuli.push(stim("rest.wav", "rest", "rest"));
        s.stimuli[2].baseline = true;
        assert!(check_structure(&s).is_runnable());
        s.stimuli[0].baseline = true;
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::BaselineNotUnique]
        );
    }

    #[test]
    fn duplicate_type_condition_is_only_a_warning() {
        let mut s = brs();
        s.stimuli[1].condition = "x".into();
        let r = check_structure(&s);
        assert!(r.is_runnable());
        assert_eq!(r.warnings[0].code, WarningCode::DuplicateTypeCondition);
    }

    #[test]
    fn sample_period_bounds() {
        let mut s = brs();
        s.study_type = StudyType::ContinuousRating;
        s.continuous_task = Some(ContinuousTaskConfig {
            instructions: "go".into(),
            sample_period_ms: 9,
            slider_min_label: String::new(),
            slider_max_label: String::new(),
        });
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::SamplePeriodOutOfRange]
        );
        s.continuous_task.as_mut().unwrap().sample_period_ms = 10;
        assert!(check_structure(&s).is_runnable());
    }

    #[test]
    fn colors_must_be_hex() {
        let mut s = brs();
        s.display.font_color = "#12345G".into();
        assert_eq!(codes(&check_structure(&s)), vec![ErrorCode::InvalidColor]);
    }

    #[test]
    fn escaping_paths_are_rejected() {
        let mut s = brs();
        s.stimuli[0].file = "../a.wav".into();
        assert_eq!(
            codes(&check_structure(&s)),
            vec![ErrorCode::InvalidStimulusPath]
        );
    }

    #[test]
    fn findings_are_sorted_by_location() {
        let mut s = brs();
        s.stimuli[1].condition = String::new();
        s.stimuli[0].stim_type = String::new();
        s.display.font_size_pt = 0;
        let r = check_structure(&s);
        let locs: Vec<String> = r.errors.iter().map(|e| e.location.to_string()).collect();
        assert_eq!(
            locs,
            vec![
                "display.font_size_pt",
                "stimuli[0].stim_type",
                "stimuli[1].condition"
            ]
        );
    }

    #[test]
    fn unreadable_root() {
        let err = validate_spec(&brs(), Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, ValidateError::StimulusRootUnreadable { .. }));
    }
}
