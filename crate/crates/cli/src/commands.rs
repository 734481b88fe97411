use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use audexp_bridge::{Bridge, BridgeOptions};
use audexp_core::clock::{unix_now_us, ClockHandle, RealClock, VirtualClock};
use audexp_core::engine::{
    check_plan, compile_plan, run_session, scripted_subject, AnswerPolicy, CompileError,
    SessionFailure, SessionLog, SessionPlan, SliderPolicy, SubjectPort,
};
use audexp_core::spec::{describe_spec, parse_spec, validate_spec, ExperimentSpec};
use audexp_core::store::{finalize, SessionResult};
use audexp_core::trigger::{ServerOptions, SimServer, TriggerLink};
use audexp_core::wav::{PlaybackPort, SimulatedPlayback};
use thiserror::Error;

pub const PLAN_FILE: &str = "plan.json";
pub const README_FILE: &str = "README-FIRST.txt";

/// Process exit status. The numeric values are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Runtime = 2,
    Usage = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Usage(_) => ExitStatus::Usage,
            CliError::Invalid(_) => ExitStatus::Validation,
            CliError::Runtime(_) => ExitStatus::Runtime,
        }
    }
}

pub type CmdResult = Result<ExitStatus, CliError>;

fn read_input(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = read_input(path, "spec")?;
    parse_spec(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn load_plan(path: &Path) -> Result<SessionPlan, CliError> {
    let text = read_input(path, "plan")?;
    SessionPlan::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn require_dir(root: &Path) -> Result<(), CliError> {
    if root.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "stimulus root {} is not a directory",
            root.display()
        )))
    }
}

pub fn validate(spec_path: &Path, stim_root: &Path, out: &mut dyn Write) -> CmdResult {
    let spec = load_spec(spec_path)?;
    let report = validate_spec(&spec, stim_root).map_err(|e| CliError::Usage(e.to_string()))?;
    write!(out, "{report}").map_err(io_err)?;
    writeln!(
        out,
        "{}: {} error(s), {} warning(s)",
        spec_path.display(),
        report.errors.len(),
        report.warnings.len()
    )
    .map_err(io_err)?;
    Ok(if report.errors.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::Validation
    })
}

/// Writes `plan.json` and `README-FIRST.txt` into `out_dir`.
pub fn compile(
    spec_path: &Path,
    stim_root: &Path,
    subject_id: &str,
    seed: u64,
    out_dir: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let spec = load_spec(spec_path)?;
    let plan = match compile_plan(&spec, subject_id, seed, stim_root) {
        Ok(plan) => plan,
        Err(CompileError::ValidationFailed(report)) => {
            write!(out, "{report}").map_err(io_err)?;
            return Err(CliError::Invalid(format!(
                "{} has {} error(s); nothing written",
                spec_path.display(),
                report.errors.len()
            )));
        }
        Err(e @ (CompileError::InvalidSubjectId(_) | CompileError::StimulusRoot(_))) => {
            return Err(CliError::Usage(e.to_string()))
        }
        Err(e) => return Err(CliError::Invalid(e.to_string())),
    };
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let plan_path = out_dir.join(PLAN_FILE);
    std::fs::write(&plan_path, plan.to_json()).map_err(io_err)?;
    std::fs::write(out_dir.join(README_FILE), describe_spec(&spec)).map_err(io_err)?;
    writeln!(out, "{}", plan_path.display()).map_err(io_err)?;
    Ok(ExitStatus::Success)
}

pub fn check(
    plan_path: &Path,
    stim_root: &Path,
    spec_path: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let plan = load_plan(plan_path)?;
    let spec = spec_path.map(load_spec).transpose()?;
    require_dir(stim_root)?;
    let report = check_plan(&plan, stim_root, spec.as_ref());
    write!(out, "{report}").map_err(io_err)?;
    if report.errors.is_empty() {
        writeln!(out, "{}: ok", plan_path.display()).map_err(io_err)?;
        Ok(ExitStatus::Success)
    } else {
        writeln!(
            out,
            "{}: {} problem(s)",
            plan_path.display(),
            report.errors.len()
        )
        .map_err(io_err)?;
        Ok(ExitStatus::Validation)
    }
}

/// How `run` drives the session.
#[derive(Debug, Clone)]
pub enum RunMode {
    /// Virtual clock and a scripted subject.
    Simulate {
        answers: AnswerPolicy,
        slider: SliderPolicy,
        latency_ms: u64,
        epoch_unix_us: Option<u64>,
    },
    /// Real clock and a browser subject over the bridge.
    Serve {
        bind: SocketAddr,
        token: Option<String>,
        connect_timeout: Duration,
        options: BridgeOptions,
    },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: RunMode,
    /// Overrides the spec's trigger endpoint with a TCP acquisition server.
    pub acq: Option<String>,
    pub out_root: PathBuf,
}

pub fn run(
    plan_path: &Path,
    stim_root: &Path,
    opts: &RunOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let plan = load_plan(plan_path)?;
    require_dir(stim_root)?;
    let report = check_plan(&plan, stim_root, None);
    if !report.errors.is_empty() {
        write!(err, "{report}").map_err(io_err)?;
        return Err(CliError::Invalid(format!(
            "{} no longer matches its stimuli",
            plan_path.display()
        )));
    }

    let (outcome, _bridge) = match &opts.mode {
        RunMode::Simulate {
            answers,
            slider,
            latency_ms,
            epoch_unix_us,
        } => {
            let clock =
                VirtualClock::with_epoch(epoch_unix_us.unwrap_or_else(unix_now_us)).handle();
            let mut subject = scripted_subject(answers.clone(), slider.clone(), clock.clone())
                .with_latency_ms(*latency_ms);
            let mut playback = SimulatedPlayback::new(clock.clone());
            let outcome = execute(&plan, &mut subject, &mut playback, opts, &clock)?;
            (outcome, None)
        }
        RunMode::Serve {
            bind,
            token,
            connect_timeout,
            options,
        } => {
            let clock = RealClock::new().handle();
            let token = token.clone().unwrap_or_else(|| session_token(&plan));
            let bridge = Bridge::start(
                &plan,
                stim_root,
                clock.clone(),
                *bind,
                &token,
                options.clone(),
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(out, "{}", bridge.subject_url()).map_err(io_err)?;
            out.flush().map_err(io_err)?;
            if !bridge.wait_for_subject(*connect_timeout) {
                return Err(CliError::Runtime(format!(
                    "no subject connected within {} s",
                    connect_timeout.as_secs_f64()
                )));
            }
            writeln!(err, "subject connected; session running").map_err(io_err)?;
            let mut subject = bridge.subject();
            let mut playback = bridge.playback();
            let outcome = execute(&plan, &mut subject, &mut playback, opts, &clock)?;
            (outcome, Some(bridge))
        }
    };

    let (log, failure) = match outcome {
        Ok(log) => (log, None),
        Err(SessionFailure { error, log }) => (log, Some(error)),
    };
    let dir = opts
        .out_root
        .join(SessionResult::from_log(&log, &plan).prefix());
    let (result, _) = finalize(&log, &plan, &dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{}", dir.display()).map_err(io_err)?;
    match failure {
        None => {
            writeln!(
                err,
                "{} trial(s), {} response(s) saved",
                result.summary.trials_presented, result.summary.responses
            )
            .map_err(io_err)?;
            Ok(ExitStatus::Success)
        }
        Some(e) => Err(CliError::Runtime(format!(
            "session aborted: {e}; partial results saved"
        ))),
    }
}

fn execute(
    plan: &SessionPlan,
    subject: &mut dyn SubjectPort,
    playback: &mut dyn PlaybackPort,
    opts: &RunOptions,
    clock: &ClockHandle,
) -> Result<Result<SessionLog, SessionFailure>, CliError> {
    let trigger = plan.spec.trigger.as_ref();
    let mut link = match (&opts.acq, trigger) {
        (Some(endpoint), _) => Some(TriggerLink::connect_tcp(endpoint, clock.clone())),
        (None, Some(cfg)) if plan.spec.study_type.needs_trigger() => {
            Some(TriggerLink::connect(cfg, clock.clone()))
        }
        _ => None,
    }
    .transpose()
    .map_err(|e| CliError::Runtime(format!("trigger link: {e}")))?;
    Ok(run_session(plan, subject, playback, link.as_mut(), clock))
}

fn session_token(plan: &SessionPlan) -> String {
    let salt = format!("{}{}", plan.digest(), unix_now_us());
    audexp_core::sha256_hex(salt.as_bytes())[..16].to_string()
}

pub struct AcqOptions {
    pub bind_host: String,
    pub port: u16,
    pub dump: PathBuf,
    /// Stop after this many client sessions have closed.
    pub sessions: Option<usize>,
    pub ack_latency: Duration,
}

/// Runs the simulated acquisition server until `stop` is raised or the
/// requested number of sessions has closed, then writes the timeline dump.
pub fn serve_acq(
    opts: &AcqOptions,
    stop: Arc<AtomicBool>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let server = SimServer::start(
        opts.port,
        ServerOptions {
            bind_host: opts.bind_host.clone(),
            ack_latency: opts.ack_latency,
            ..Default::default()
        },
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "listening on {}", server.addr()).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    while !stop.load(Ordering::Acquire) {
        if opts.sessions.is_some_and(|n| server.closed_sessions() >= n) {
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let timeline = server.shutdown();
    let mut text =
        serde_json::to_string_pretty(&timeline).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(&opts.dump, text).map_err(io_err)?;
    writeln!(
        err,
        "{} event(s), {} timeline entries written to {}",
        timeline.events().len(),
        timeline.entries.len(),
        opts.dump.display()
    )
    .map_err(io_err)?;
    Ok(ExitStatus::Success)
}

pub fn demo_stimuli(out_dir: &Path, out: &mut dyn Write) -> CmdResult {
    let spec = crate::demo::write_demo(out_dir).map_err(io_err)?;
    writeln!(out, "{}", spec.display()).map_err(io_err)?;
    Ok(ExitStatus::Success)
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
