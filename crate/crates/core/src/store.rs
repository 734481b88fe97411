//! Session results on disk: a summary with the committed responses, the
//! complete event log as JSON lines, and one CSV per continuous trace.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, LogEvent, SessionLog, SessionPlan};
use crate::spec::StudyType;

pub const RESULT_SCHEMA_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "t_us,value";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("output directory {0} already exists")]
    OutDirExists(PathBuf),
    #[error("result schema version {0} is not supported")]
    SchemaVersionUnsupported(u32),
    #[error("{file} line {line}: {message}")]
    CorruptFile {
        file: String,
        line: usize,
        message: String,
    },
    #[error("no {0} file in the result directory")]
    MissingFile(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub schema_version: u32,
    pub study_name: String,
    pub study_type: StudyType,
    pub subject_id: String,
    pub seed: u64,
    pub spec_digest: String,
    pub plan_digest: String,
    pub epoch_unix_us: u64,
    pub started_at: String,
    pub ended_at: String,
    pub completed: bool,
    pub abort_reason: Option<String>,
    pub trials_planned: usize,
    pub trials_presented: usize,
    pub responses: usize,
    pub triggers_sent: usize,
    pub continuous_samples: usize,
    /// Number of logged events of each kind, keyed by the `event` tag.
    pub event_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub trial: usize,
    pub question: usize,
    pub stimuli: Vec<usize>,
    pub files: Vec<String>,
    pub value: i64,
    pub rt_ms: f64,
    pub committed_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInfo {
    pub trial: usize,
    pub stimulus: usize,
    pub file: String,
}

/// One continuous-rating trace: `(t_us, value)` samples of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTrace {
    pub info: TraceInfo,
    pub samples: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub summary: ResultSummary,
    pub responses: Vec<ResponseRecord>,
    pub traces: Vec<ContinuousTrace>,
    pub events: Vec<LogEvent>,
}

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    summary: ResultSummary,
    responses: Vec<ResponseRecord>,
    traces: Vec<TraceInfo>,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    v: u32,
    #[serde(flatten)]
    event: LogEvent,
}

fn iso(unix_us: u64) -> String {
    DateTime::<Utc>::from_timestamp_micros(unix_us as i64)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string())
        .unwrap_or_default()
}

fn stamp(unix_us: u64) -> String {
    DateTime::<Utc>::from_timestamp_micros(unix_us as i64)
        .map(|t| t.format("%Y%m%dT%H%M%SZ").to_string())
        .unwrap_or_else(|| "unknown".into())
}

impl SessionResult {
    /// The in-memory result a log produces; `finalize` writes exactly this.
    pub fn from_log(log: &SessionLog, plan: &SessionPlan) -> Self {
        let trial_stimuli = |trial: usize| -> Vec<usize> {
            plan.trials
                .get(trial)
                .map(|t| t.stimuli.clone())
                .unwrap_or_default()
        };
        let mut responses = Vec::new();
        let mut samples: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
        let mut presented = std::collections::BTreeSet::new();
        let mut triggers = 0;
        for e in &log.events {
            match e.kind {
                EventKind::AnswerCommitted {
                    trial,
                    question,
                    value,
                    rt_ms,
                } => {
                    let stimuli = trial_stimuli(trial);
                    responses.push(ResponseRecord {
                        trial,
                        question,
                        files: stimuli
                            .iter()
                            .map(|&i| plan.stimuli[i].file.clone())
                            .collect(),
                        stimuli,
                        value,
                        rt_ms,
                        committed_us: e.t_us,
                    });
                }
                EventKind::ContinuousSample { trial, value } => {
                    samples.entry(trial).or_default().push((e.t_us, value))
                }
                EventKind::StimulusOnset { trial, .. } | EventKind::BaselineOnset { trial, .. } => {
                    presented.insert(trial);
                }
                EventKind::TriggerSent { .. } => triggers += 1,
                _ => {}
            }
        }
        let traces: Vec<ContinuousTrace> = samples
            .into_iter()
            .map(|(trial, samples)| {
                let stimulus = trial_stimuli(trial).last().copied().unwrap_or(0);
                ContinuousTrace {
                    info: TraceInfo {
                        trial,
                        stimulus,
                        file: plan.stimuli[stimulus].file.clone(),
                    },
                    samples,
                }
            })
            .collect();
        let mut event_counts = BTreeMap::new();
        for e in &log.events {
            *event_counts.entry(e.kind.name().to_string()).or_insert(0) += 1;
        }
        let first = log.events.first().map(|e| e.t_us).unwrap_or(0);
        let summary = ResultSummary {
            schema_version: RESULT_SCHEMA_VERSION,
            study_name: plan.spec.name.clone(),
            study_type: plan.spec.study_type,
            subject_id: plan.subject_id.clone(),
            seed: plan.seed,
            spec_digest: plan.spec_digest.clone(),
            plan_digest: plan.digest(),
            epoch_unix_us: log.epoch_unix_us,
            started_at: iso(log.epoch_unix_us + first),
            ended_at: iso(log.epoch_unix_us + log.last_t_us()),
            completed: log.is_complete(),
            abort_reason: log.abort_reason().map(str::to_string),
            trials_planned: plan.trials.len(),
            trials_presented: presented.len(),
            responses: responses.len(),
            triggers_sent: triggers,
            continuous_samples: traces.iter().map(|t| t.samples.len()).sum(),
            event_counts,
        };
        Self {
            summary,
            responses,
            traces,
            events: log.events.clone(),
        }
    }

    /// File name prefix shared by every file of this result.
    pub fn prefix(&self) -> String {
        format!(
            "{}_{}",
            self.summary.subject_id,
            stamp(self.summary.epoch_unix_us)
        )
    }
}

/// Paths written by [`finalize`].
#[derive(Debug, Clone)]
pub struct ResultFiles {
    pub dir: PathBuf,
    pub summary: PathBuf,
    pub events: PathBuf,
    pub plan: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// Writes a session's results into `out_dir`, which must not exist yet.
pub fn finalize(
    log: &SessionLog,
    plan: &SessionPlan,
    out_dir: &Path,
) -> Result<(SessionResult, ResultFiles), StoreError> {
    if out_dir.exists() {
        return Err(StoreError::OutDirExists(out_dir.to_path_buf()));
    }
    let result = SessionResult::from_log(log, plan);
    fs::create_dir_all(out_dir)?;
    let prefix = result.prefix();

    let summary = out_dir.join(format!("{prefix}_summary.json"));
    let file = SummaryFile {
        summary: result.summary.clone(),
        responses: result.responses.clone(),
        traces: result.traces.iter().map(|t| t.info.clone()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&summary, text)?;

    let events = out_dir.join(format!("{prefix}_events.jsonl"));
    let mut text = String::new();
    for event in &result.events {
        let line = EventLine {
            v: RESULT_SCHEMA_VERSION,
            event: event.clone(),
        };
        text.push_str(&serde_json::to_string(&line).map_err(io::Error::other)?);
        text.push('\n');
    }
    fs::write(&events, text)?;

    let plan_path = out_dir.join(format!("{prefix}_plan.json"));
    fs::write(&plan_path, plan.to_json())?;

    let mut traces = Vec::new();
    for trace in &result.traces {
        let path = out_dir.join(trace_name(&prefix, trace.info.trial));
        let mut text = format!("{TRACE_HEADER}\n");
        for (t, v) in &trace.samples {
            text.push_str(&format!("{t},{v}\n"));
        }
        fs::write(&path, text)?;
        traces.push(path);
    }

    Ok((
        result,
        ResultFiles {
            dir: out_dir.to_path_buf(),
            summary,
            events,
            plan: plan_path,
            traces,
        },
    ))
}

/// Trace files number trials from 1.
fn trace_name(prefix: &str, trial: usize) -> String {
    format!("{prefix}_trial{:03}_trace.csv", trial + 1)
}

fn find_one(dir: &Path, suffix: &str, what: &'static str) -> Result<PathBuf, StoreError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix))
        {
            return Ok(path);
        }
    }
    Err(StoreError::MissingFile(what))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads complete lines; a final line without `\n` means the file was cut off.
fn lines_of<'a>(text: &'a str, file: &str) -> Result<Vec<&'a str>, StoreError> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(StoreError::CorruptFile {
            file: file.to_string(),
            line: text.lines().count(),
            message: "missing final newline".into(),
        });
    }
    Ok(text.lines().collect())
}

/// Loads a result directory written by [`finalize`].
pub fn load_result(dir: &Path) -> Result<SessionResult, StoreError> {
    let summary_path = find_one(dir, "_summary.json", "summary")?;
    let summary_name = file_name(&summary_path);
    let text = fs::read_to_string(&summary_path)?;
    let version = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.pointer("/summary/schema_version")?.as_u64());
    match version {
        Some(v) if v == u64::from(RESULT_SCHEMA_VERSION) => {}
        Some(v) => return Err(StoreError::SchemaVersionUnsupported(v as u32)),
        None => {}
    }
    let file: SummaryFile = serde_json::from_str(&text).map_err(|e| StoreError::CorruptFile {
        file: summary_name.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;

    let events_path = find_one(dir, "_events.jsonl", "events")?;
    let events_name = file_name(&events_path);
    let text = fs::read_to_string(&events_path)?;
    let mut events = Vec::new();
    for (i, line) in lines_of(&text, &events_name)?.into_iter().enumerate() {
        let corrupt = |message: String| StoreError::CorruptFile {
            file: events_name.clone(),
            line: i + 1,
            message,
        };
        let parsed: EventLine = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if parsed.v != RESULT_SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionUnsupported(parsed.v));
        }
        events.push(parsed.event);
    }

    let prefix = summary_name.trim_end_matches("_summary.json").to_string();
    let mut traces = Vec::new();
    for info in file.traces {
        let name = trace_name(&prefix, info.trial);
        let text =
            fs::read_to_string(dir.join(&name)).map_err(|_| StoreError::MissingFile("trace"))?;
        let lines = lines_of(&text, &name)?;
        let corrupt = |line: usize, message: &str| StoreError::CorruptFile {
            file: name.clone(),
            line,
            message: message.to_string(),
        };
        if lines.first() != Some(&TRACE_HEADER) {
            return Err(corrupt(1, "expected header t_us,value"));
        }
        let mut samples = Vec::with_capacity(lines.len() - 1);
        for (i, line) in lines.iter().enumerate().skip(1) {
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| corrupt(i + 1, "expected two columns"))?;
            let t = t.parse().map_err(|_| corrupt(i + 1, "bad t_us"))?;
            let v = v.parse().map_err(|_| corrupt(i + 1, "bad value"))?;
            samples.push((t, v));
        }
        traces.push(ContinuousTrace { info, samples });
    }

    Ok(SessionResult {
        summary: file.summary,
        responses: file.responses,
        traces,
        events,
    })
}
