//! The TOML spec format. `docs/spec-format.md` describes every key.

use std::collections::BTreeMap;

use thiserror::Error;
use toml::{Table, Value};

use super::{
    ContinuousTaskConfig, DisplayStyle, ExperimentSpec, Question, StimulusEntry, StudyType,
    TriggerConfig, TriggerMode, DEFAULT_ISI_MS, DEFAULT_PULSE_WIDTH_MS, DEFAULT_REPETITIONS,
    DEFAULT_SAMPLE_PERIOD_MS,
};
use crate::stim_array::{RandomizationScheme, StimField};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown study type {0:?}")]
    UnknownStudyType(String),
    #[error("missing required field `{0}`")]
    MissingRequiredField(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{field}`: expected {expected}")]
    InvalidValue { field: String, expected: String },
}

type Result<T> = std::result::Result<T, ParseError>;

const TOP_KEYS: &[&str] = &[
    "name",
    "study_type",
    "description",
    "repetitions",
    "isi_ms",
    "display",
    "randomization",
    "continuous_task",
    "trigger",
    "stimuli",
    "questions",
];

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let root: Table = toml::from_str(text).map_err(|e| ParseError::Syntax {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let mut top = Section::new(String::new(), &root, TOP_KEYS)?;

    let name = top.req_str("name")?;
    let type_name = top.req_str("study_type")?;
    let study_type =
        StudyType::from_name(&type_name).ok_or(ParseError::UnknownStudyType(type_name))?;

    let stimuli = top
        .opt_tables("stimuli")?
        .into_iter()
        .map(parse_stimulus)
        .collect::<Result<Vec<_>>>()?;
    let questions = top
        .opt_tables("questions")?
        .into_iter()
        .map(parse_question)
        .collect::<Result<Vec<_>>>()?;

    let continuous_task = top
        .opt_table("continuous_task")?
        .map(parse_continuous)
        .transpose()?;
    if study_type == StudyType::ContinuousRating && continuous_task.is_none() {
        return Err(ParseError::MissingRequiredField("continuous_task".into()));
    }
    let trigger = top.opt_table("trigger")?.map(parse_trigger).transpose()?;
    if study_type.needs_trigger() && trigger.is_none() {
        return Err(ParseError::MissingRequiredField("trigger".into()));
    }
    let randomization = top
        .opt_table("randomization")?
        .map(parse_randomization)
        .transpose()?
        .unwrap_or_default();
    let display = top
        .opt_table("display")?
        .map(parse_display)
        .transpose()?
        .unwrap_or_default();

    Ok(ExperimentSpec {
        name,
        study_type,
        description: top.opt_str("description")?.unwrap_or_default(),
        stimuli,
        questions,
        continuous_task,
        randomization,
        trigger,
        display,
        repetitions: top.opt_u32("repetitions")?.unwrap_or(DEFAULT_REPETITIONS),
        isi_ms: top.opt_u32("isi_ms")?.unwrap_or(DEFAULT_ISI_MS),
    })
}

fn parse_stimulus(mut s: Section<'_>) -> Result<StimulusEntry> {
    Ok(StimulusEntry {
        file: s.req_str("file")?,
        title: s.opt_str("title")?.unwrap_or_default(),
        artist: s.opt_str("artist")?.unwrap_or_default(),
        stim_type: s.req_str("stim_type")?,
        condition: s.req_str("condition")?,
        baseline: s.opt_bool("baseline")?.unwrap_or(false),
        label: s.opt_str("label")?,
        set: s.opt_str("set")?,
    })
}

fn parse_question(mut s: Section<'_>) -> Result<Question> {
    let anchor_labels = match s.take("anchor_labels") {
        None => None,
        Some(Value::Array(items)) if items.len() == 2 => {
            match (items[0].as_str(), items[1].as_str()) {
                (Some(lo), Some(hi)) => Some((lo.to_string(), hi.to_string())),
                _ => return Err(s.invalid("anchor_labels", "two strings")),
            }
        }
        Some(_) => return Err(s.invalid("anchor_labels", "two strings")),
    };
    Ok(Question {
        prompt: s.req_str("prompt")?,
        scale_min: s.req_i64("scale_min")?,
        scale_max: s.req_i64("scale_max")?,
        anchor_labels,
    })
}

fn parse_continuous(mut s: Section<'_>) -> Result<ContinuousTaskConfig> {
    Ok(ContinuousTaskConfig {
        instructions: s.req_str("instructions")?,
        sample_period_ms: s
            .opt_u32("sample_period_ms")?
            .unwrap_or(DEFAULT_SAMPLE_PERIOD_MS),
        slider_min_label: s.opt_str("slider_min_label")?.unwrap_or_default(),
        slider_max_label: s.opt_str("slider_max_label")?.unwrap_or_default(),
    })
}

fn parse_trigger(mut s: Section<'_>) -> Result<TriggerConfig> {
    let mode_name = s.req_str("mode")?;
    let mode = TriggerMode::from_name(&mode_name)
        .ok_or_else(|| s.invalid("mode", "\"tcp\" or \"simulated-ttl\""))?;
    let port = match s.opt_i64("port")? {
        Some(p) => u16::try_from(p).map_err(|_| s.invalid("port", "a TCP port number"))?,
        None if mode == TriggerMode::Tcp => return Err(s.missing("port")),
        None => 0,
    };
    let mut code_map = BTreeMap::new();
    if let Some(map) = s.opt_raw_table("code_map")? {
        for (file, code) in map {
            let code = code
                .as_str()
                .ok_or_else(|| s.invalid(&format!("code_map.{file}"), "a string"))?;
            code_map.insert(file.clone(), code.to_string());
        }
    }
    Ok(TriggerConfig {
        mode,
        host: s.opt_str("host")?.unwrap_or_else(|| "127.0.0.1".into()),
        port,
        code_map,
        send_response_triggers: s.opt_bool("send_response_triggers")?.unwrap_or(false),
        pulse_width_ms: s
            .opt_u32("pulse_width_ms")?
            .unwrap_or(DEFAULT_PULSE_WIDTH_MS),
    })
}

fn parse_display(mut s: Section<'_>) -> Result<DisplayStyle> {
    let d = DisplayStyle::default();
    Ok(DisplayStyle {
        background_color: s.opt_str("background_color")?.unwrap_or(d.background_color),
        font_color: s.opt_str("font_color")?.unwrap_or(d.font_color),
        font_size_pt: s.opt_u32("font_size_pt")?.unwrap_or(d.font_size_pt),
    })
}

fn parse_randomization(mut s: Section<'_>) -> Result<RandomizationScheme> {
    let kind = s.req_str("kind")?.replace('_', "-").to_ascii_lowercase();
    let allowed: &[&str] = match kind.as_str() {
        "fixed-order" | "full-shuffle" => &["kind"],
        "blocked-shuffle" => &[
            "kind",
            "block_field",
            "shuffle_within",
            "shuffle_blocks",
            "no_adjacent_repeat_field",
        ],
        "probability-select" => &["kind", "weights", "draws", "replacement"],
        "all-pairs" => &["kind", "ordered"],
        _ => {
            return Err(s.invalid(
                "kind",
                "fixed-order, full-shuffle, blocked-shuffle, probability-select or all-pairs",
            ))
        }
    };
    s.restrict(allowed)?;
    let field = |s: &mut Section<'_>, key: &str| -> Result<Option<StimField>> {
        s.opt_str(key)?
            .map(|v| StimField::parse(&v).ok_or_else(|| s.invalid(key, "stim_type or condition")))
            .transpose()
    };
    Ok(match kind.as_str() {
        "fixed-order" => RandomizationScheme::FixedOrder,
        "full-shuffle" => RandomizationScheme::FullShuffle,
        "blocked-shuffle" => RandomizationScheme::BlockedShuffle {
            block_field: field(&mut s, "block_field")?.ok_or_else(|| s.missing("block_field"))?,
            shuffle_within: s.opt_bool("shuffle_within")?.unwrap_or(true),
            shuffle_blocks: s.opt_bool("shuffle_blocks")?.unwrap_or(true),
            no_adjacent_repeat_field: field(&mut s, "no_adjacent_repeat_field")?,
        },
        "probability-select" => {
            let weights = match s.take("weights") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| s.invalid("weights", "an array of numbers"))?,
                Some(_) => return Err(s.invalid("weights", "an array of numbers")),
                None => return Err(s.missing("weights")),
            };
            let draws = match s.opt_u32("draws")? {
                Some(d) => d as usize,
                None => weights.len(),
            };
            RandomizationScheme::ProbabilitySelect {
                weights,
                draws,
                replacement: s.opt_bool("replacement")?.unwrap_or(false),
            }
        }
        _ => RandomizationScheme::AllPairs {
            ordered: s.opt_bool("ordered")?.unwrap_or(false),
        },
    })
}

/// A table being consumed, with its dotted path for error messages.
struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(path: String, table: &'a Table, allowed: &[&str]) -> Result<Self> {
        let s = Self { path, table };
        s.restrict(allowed)?;
        Ok(s)
    }

    fn restrict(&self, allowed: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ParseError::UnknownKey(self.field(k))),
            None => Ok(()),
        }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn missing(&self, key: &str) -> ParseError {
        ParseError::MissingRequiredField(self.field(key))
    }

    fn invalid(&self, key: &str, expected: &str) -> ParseError {
        ParseError::InvalidValue {
            field: self.field(key),
            expected: expected.to_string(),
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn opt_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.invalid(key, "a string")),
        }
    }

    fn req_str(&mut self, key: &str) -> Result<String> {
        self.opt_str(key)?.ok_or_else(|| self.missing(key))
    }

    fn opt_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.invalid(key, "true or false")),
        }
    }

    fn opt_i64(&mut self, key: &str) -> Result<Option<i64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(self.invalid(key, "an integer")),
        }
    }

    fn req_i64(&mut self, key: &str) -> Result<i64> {
        self.opt_i64(key)?.ok_or_else(|| self.missing(key))
    }

    fn opt_u32(&mut self, key: &str) -> Result<Option<u32>> {
        self.opt_i64(key)?
            .map(|i| u32::try_from(i).map_err(|_| self.invalid(key, "a non-negative integer")))
            .transpose()
    }

    fn opt_raw_table(&mut self, key: &str) -> Result<Option<&'a Table>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(self.invalid(key, "a table")),
        }
    }

    fn opt_table(&mut self, key: &str) -> Result<Option<Section<'a>>> {
        let allowed: &[&str] = match key {
            "display" => &["background_color", "font_color", "font_size_pt"],
            "continuous_task" => &[
                "instructions",
                "sample_period_ms",
                "slider_min_label",
                "slider_max_label",
            ],
            "trigger" => &[
                "mode",
                "host",
                "port",
                "code_map",
                "send_response_triggers",
                "pulse_width_ms",
            ],
            // Checked per kind once the kind is known.
            _ => &[],
        };
        let path = self.field(key);
        match self.opt_raw_table(key)? {
            None => Ok(None),
            Some(t) if allowed.is_empty() => Ok(Some(Section { path, table: t })),
            Some(t) => Section::new(path, t, allowed).map(Some),
        }
    }

    fn opt_tables(&mut self, key: &str) -> Result<Vec<Section<'a>>> {
        let allowed: &[&str] = match key {
            "stimuli" => &[
                "file",
                "title",
                "artist",
                "stim_type",
                "condition",
                "baseline",
                "label",
                "set",
            ],
            _ => &["prompt", "scale_min", "scale_max", "anchor_labels"],
        };
        match self.take(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, item)| match item {
                    Value::Table(t) => {
                        Section::new(format!("{}[{}]", self.field(key), i), t, allowed)
                    }
                    _ => Err(self.invalid(key, "an array of tables")),
                })
                .collect(),
            Some(_) => Err(self.invalid(key, "an array of tables")),
        }
    }
}

/// Canonical text form: every defaulted field written out, so that
/// `parse_spec(&serialize_spec(s)) == s`.
pub fn serialize_spec(spec: &ExperimentSpec) -> String {
    let mut root = Table::new();
    root.insert("name".into(), spec.name.clone().into());
    root.insert("study_type".into(), spec.study_type.as_str().into());
    root.insert("description".into(), spec.description.clone().into());
    root.insert("repetitions".into(), i64::from(spec.repetitions).into());
    root.insert("isi_ms".into(), i64::from(spec.isi_ms).into());

    let mut display = Table::new();
    display.insert(
        "background_color".into(),
        spec.display.background_color.clone().into(),
    );
    display.insert("font_color".into(), spec.display.font_color.clone().into());
    display.insert(
        "font_size_pt".into(),
        i64::from(spec.display.font_size_pt).into(),
    );
    root.insert("display".into(), display.into());

    root.insert(
        "randomization".into(),
        randomization_table(&spec.randomization).into(),
    );

    if let Some(c) = &spec.continuous_task {
        let mut t = Table::new();
        t.insert("instructions".into(), c.instructions.clone().into());
        t.insert(
            "sample_period_ms".into(),
            i64::from(c.sample_period_ms).into(),
        );
        t.insert("slider_min_label".into(), c.slider_min_label.clone().into());
        t.insert("slider_max_label".into(), c.slider_max_label.clone().into());
        root.insert("continuous_task".into(), t.into());
    }

    if let Some(trig) = &spec.trigger {
        let mut t = Table::new();
        t.insert("mode".into(), trig.mode.as_str().into());
        t.insert("host".into(), trig.host.clone().into());
        t.insert("port".into(), i64::from(trig.port).into());
        t.insert(
            "send_response_triggers".into(),
            trig.send_response_triggers.into(),
        );
        t.insert(
            "pulse_width_ms".into(),
            i64::from(trig.pulse_width_ms).into(),
        );
        if !trig.code_map.is_empty() {
            let map: Table = trig
                .code_map
                .iter()
                .map(|(k, v)| (k.clone(), Value::from(v.clone())))
                .collect();
            t.insert("code_map".into(), map.into());
        }
        root.insert("trigger".into(), t.into());
    }

    if !spec.stimuli.is_empty() {
        let rows: Vec<Value> = spec
            .stimuli
            .iter()
            .map(|s| {
                let mut t = Table::new();
                t.insert("file".into(), s.file.clone().into());
                t.insert("title".into(), s.title.clone().into());
                t.insert("artist".into(), s.artist.clone().into());
                t.insert("stim_type".into(), s.stim_type.clone().into());
                t.insert("condition".into(), s.condition.clone().into());
                if s.baseline {
                    t.insert("baseline".into(), true.into());
                }
                if let Some(label) = &s.label {
                    t.insert("label".into(), label.clone().into());
                }
                if let Some(set) = &s.set {
                    t.insert("set".into(), set.clone().into());
                }
                t.into()
            })
            .collect();
        root.insert("stimuli".into(), rows.into());
    }

    if !spec.questions.is_empty() {
        let rows: Vec<Value> = spec
            .questions
            .iter()
            .map(|q| {
                let mut t = Table::new();
                t.insert("prompt".into(), q.prompt.clone().into());
                t.insert("scale_min".into(), q.scale_min.into());
                t.insert("scale_max".into(), q.scale_max.into());
                if let Some((lo, hi)) = &q.anchor_labels {
                    t.insert(
                        "anchor_labels".into(),
                        vec![Value::from(lo.clone()), Value::from(hi.clone())].into(),
                    );
                }
                t.into()
            })
            .collect();
        root.insert("questions".into(), rows.into());
    }

    toml::to_string(&root).expect("spec tables always serialize")
}

fn randomization_table(scheme: &RandomizationScheme) -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), scheme.name().into());
    match scheme {
        RandomizationScheme::FixedOrder | RandomizationScheme::FullShuffle => {}
        RandomizationScheme::BlockedShuffle {
            block_field,
            shuffle_within,
            shuffle_blocks,
            no_adjacent_repeat_field,
        } => {
            t.insert("block_field".into(), block_field.as_str().into());
            t.insert("shuffle_within".into(), (*shuffle_within).into());
            t.insert("shuffle_blocks".into(), (*shuffle_blocks).into());
            if let Some(f) = no_adjacent_repeat_field {
                t.insert("no_adjacent_repeat_field".into(), f.as_str().into());
            }
        }
        RandomizationScheme::ProbabilitySelect {
            weights,
            draws,
            replacement,
        } => {
            let ws: Vec<Value> = weights.iter().map(|w| Value::Float(*w)).collect();
            t.insert("weights".into(), ws.into());
            t.insert("draws".into(), (*draws as i64).into());
            t.insert("replacement".into(), (*replacement).into());
        }
        RandomizationScheme::AllPairs { ordered } => {
            t.insert("ordered".into(), (*ordered).into());
        }
    }
    t
}
