//! Experiment specifications: the declarative study definition, its text
//! format, feasibility checks, and the generated run instructions.

mod describe;
mod parse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stim_array::RandomizationScheme;

pub use describe::describe_spec;
pub use parse::{parse_spec, serialize_spec, ParseError};
pub use validate::{
    validate_spec, ErrorCode, Finding, Location, ValidateError, ValidationReport, WarningCode,
};

pub const DEFAULT_REPETITIONS: u32 = 1;
pub const DEFAULT_SAMPLE_PERIOD_MS: u32 = 50;
pub const DEFAULT_ISI_MS: u32 = 1000;
pub const DEFAULT_PULSE_WIDTH_MS: u32 = 10;
pub const MAX_SCALE_SPAN: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyType {
    BehavioralRating,
    ComparisonRating,
    ContinuousRating,
    #[serde(rename = "EEG")]
    Eeg,
    Neurophysiological,
}

impl StudyType {
    pub const ALL: [StudyType; 5] = [
        StudyType::BehavioralRating,
        StudyType::ComparisonRating,
        StudyType::ContinuousRating,
        StudyType::Eeg,
        StudyType::Neurophysiological,
    ];

    /// Canonical name used in spec files.
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyType::BehavioralRating => "BehavioralRating",
            StudyType::ComparisonRating => "ComparisonRating",
            StudyType::ContinuousRating => "ContinuousRating",
            StudyType::Eeg => "EEG",
            StudyType::Neurophysiological => "Neurophysiological",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            StudyType::BehavioralRating => "Behavioral Rating Study",
            StudyType::ComparisonRating => "Comparison Behavioral Rating Study",
            StudyType::ContinuousRating => "Continuous Behavioral Rating Study",
            StudyType::Eeg => "EEG Study",
            StudyType::Neurophysiological => "Neurophysiological Study",
        }
    }

    /// Case, spaces, dashes and underscores are ignored.
    pub fn from_name(name: &str) -> Option<Self> {
        let norm: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().to_ascii_lowercase() == norm)
    }

    pub fn needs_trigger(&self) -> bool {
        matches!(self, StudyType::Eeg | StudyType::Neurophysiological)
    }

    pub fn needs_questions(&self) -> bool {
        matches!(
            self,
            StudyType::BehavioralRating | StudyType::ComparisonRating
        )
    }
}

impl fmt::Display for StudyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stimulus row: file plus the descriptive columns used for grouping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusEntry {
    /// Path relative to the stimulus root.
    pub file: String,
    pub title: String,
    pub artist: String,
    pub stim_type: String,
    pub condition: String,
    pub baseline: bool,
    /// Short label shown while the stimulus plays in comparison trials.
    pub label: Option<String>,
    /// Consecutive trials sharing a set tag are asked questions once, after
    /// the last member.
    pub set: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub prompt: String,
    pub scale_min: i64,
    pub scale_max: i64,
    pub anchor_labels: Option<(String, String)>,
}

impl Question {
    pub fn contains(&self, value: i64) -> bool {
        (self.scale_min..=self.scale_max).contains(&value)
    }

    pub fn midpoint(&self) -> i64 {
        self.scale_min + (self.scale_max - self.scale_min) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuousTaskConfig {
    pub instructions: String,
    pub sample_period_ms: u32,
    pub slider_min_label: String,
    pub slider_max_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerMode {
    Tcp,
    SimulatedTtl,
}

impl TriggerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerMode::Tcp => "tcp",
            TriggerMode::SimulatedTtl => "simulated-ttl",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Some(TriggerMode::Tcp),
            "simulated-ttl" | "simulated_ttl" | "ttl" => Some(TriggerMode::SimulatedTtl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub mode: TriggerMode,
    pub host: String,
    pub port: u16,
    /// Stimulus file → 4-character onset code.
    pub code_map: BTreeMap<String, String>,
    pub send_response_triggers: bool,
    pub pulse_width_ms: u32,
}

impl TriggerConfig {
    pub fn endpoint(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayStyle {
    pub background_color: String,
    pub font_color: String,
    pub font_size_pt: u32,
}

impl Default for DisplayStyle {
    fn default() -> Self {
        Self {
            background_color: "#000000".into(),
            font_color: "#FFFFFF".into(),
            font_size_pt: 24,
        }
    }
}

/// The full declarative study definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub study_type: StudyType,
    pub description: String,
    pub stimuli: Vec<StimulusEntry>,
    pub questions: Vec<Question>,
    pub continuous_task: Option<ContinuousTaskConfig>,
    pub randomization: RandomizationScheme,
    pub trigger: Option<TriggerConfig>,
    pub display: DisplayStyle,
    pub repetitions: u32,
    /// Pause between successive presentations.
    pub isi_ms: u32,
}

impl ExperimentSpec {
    /// A spec with defaults everywhere and no stimuli or questions.
    pub fn new(name: impl Into<String>, study_type: StudyType) -> Self {
        Self {
            name: name.into(),
            study_type,
            description: String::new(),
            stimuli: Vec::new(),
            questions: Vec::new(),
            continuous_task: None,
            randomization: RandomizationScheme::default(),
            trigger: None,
            display: DisplayStyle::default(),
            repetitions: DEFAULT_REPETITIONS,
            isi_ms: DEFAULT_ISI_MS,
        }
    }

    pub fn baseline_indices(&self) -> Vec<usize> {
        self.stimuli
            .iter()
            .enumerate()
            .filter(|(_, s)| s.baseline)
            .map(|(i, _)| i)
            .collect()
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        crate::sha256_hex(serialize_spec(self).as_bytes())
    }
}

pub const BASELINE_CODE: &str = "BASE";

impl ExperimentSpec {
    /// Onset code per stimulus: the `code_map` entry when present, else
    /// `BASE` for the baseline and `S` + the 1-based ordinal among the
    /// non-baseline stimuli, zero-padded to three digits.
    pub fn onset_codes(&self) -> Vec<String> {
        let overrides = self.trigger.as_ref().map(|t| &t.code_map);
        let mut ordinal = 0;
        self.stimuli
            .iter()
            .map(|s| {
                if !s.baseline {
                    ordinal += 1;
                }
                if let Some(code) = overrides.and_then(|m| m.get(&s.file)) {
                    code.clone()
                } else if s.baseline {
                    BASELINE_CODE.to_string()
                } else {
                    format!("S{ordinal:03}")
                }
            })
            .collect()
    }
}

/// Trigger code for a committed rating: the value right-aligned after an
/// `RSP` prefix (`RSP3`, `RS12`, `R100`, `R-50`). `None` when the value
/// needs more than three characters.
pub fn response_code(value: i64) -> Option<String> {
    let digits = value.to_string();
    if digits.len() > 3 {
        return None;
    }
    Some(format!("{}{}", &"RSP"[..4 - digits.len()], digits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_codes_are_four_chars() {
        assert_eq!(response_code(3).as_deref(), Some("RSP3"));
        assert_eq!(response_code(12).as_deref(), Some("RS12"));
        assert_eq!(response_code(100).as_deref(), Some("R100"));
        assert_eq!(response_code(-50).as_deref(), Some("R-50"));
        assert_eq!(response_code(-100), None);
    }

    #[test]
    fn onset_codes_skip_baseline_ordinal() {
        let mut spec = ExperimentSpec::new("n", StudyType::Neurophysiological);
        for (file, baseline) in [("rest.wav", true), ("a.wav", false), ("b.wav", false)] {
            spec.stimuli.push(StimulusEntry {
                file: file.into(),
                stim_type: "t".into(),
                condition: "c".into(),
                baseline,
                ..StimulusEntry::default()
            });
        }
        assert_eq!(spec.onset_codes(), vec!["BASE", "S001", "S002"]);
        spec.trigger = Some(TriggerConfig {
            mode: TriggerMode::SimulatedTtl,
            host: String::new(),
            port: 0,
            code_map: [("b.wav".to_string(), "BBBB".to_string())]
                .into_iter()
                .collect(),
            send_response_triggers: false,
            pulse_width_ms: DEFAULT_PULSE_WIDTH_MS,
        });
        assert_eq!(spec.onset_codes(), vec!["BASE", "S001", "BBBB"]);
    }
}
