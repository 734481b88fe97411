use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use audexp_core::engine::{AnswerPolicy, SliderPolicy, DEFAULT_LATENCY_MS};
use clap::{ArgGroup, Parser, Subcommand};

const STIM_ROOT_HELP: &str = "Directory holding the stimulus files [default: current directory]";

#[derive(Debug, Parser)]
#[command(
    name = "audexp",
    version,
    about = "Build, run and check auditory experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a spec and its stimuli; prints every finding.
    Validate {
        spec: PathBuf,
        #[arg(long, env = "AUDEXP_STIM_ROOT", help = STIM_ROOT_HELP)]
        stim_root: Option<PathBuf>,
    },
    /// Compile a spec into a session plan plus README-FIRST.txt.
    Compile {
        spec: PathBuf,
        #[arg(long, env = "AUDEXP_STIM_ROOT", help = STIM_ROOT_HELP)]
        stim_root: Option<PathBuf>,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        seed: u64,
        /// Directory for plan.json and README-FIRST.txt
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a compiled plan and save the results.
    #[command(group(ArgGroup::new("mode").required(true).args(["simulate", "serve"])))]
    Run {
        plan: PathBuf,
        #[arg(long, env = "AUDEXP_STIM_ROOT", help = STIM_ROOT_HELP)]
        stim_root: Option<PathBuf>,
        /// Headless run on a virtual clock with a scripted subject
        #[arg(long)]
        simulate: bool,
        /// Serve the subject interface and run in real time
        #[arg(long)]
        serve: bool,
        /// Results root; each session gets its own directory inside
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Send triggers to this TCP acquisition server (host:port)
        #[arg(long, value_name = "HOST:PORT")]
        acq: Option<String>,

        /// Scripted answers: midpoint, fixed:N, uniform[:SEED] or script:N,N,...
        #[arg(long, default_value = "midpoint", value_parser = parse_answers, help_heading = "Simulation")]
        answers: AnswerPolicy,
        /// Scripted slider: constant:V, ramp or sine:PERIOD_MS
        #[arg(long, default_value = "constant:0.5", value_parser = parse_slider, help_heading = "Simulation")]
        slider: SliderPolicy,
        /// Scripted response latency
        #[arg(long, default_value_t = DEFAULT_LATENCY_MS, help_heading = "Simulation")]
        latency_ms: u64,
        /// Wall-clock anchor for result names [default: now]
        #[arg(long, help_heading = "Simulation")]
        epoch_us: Option<u64>,

        #[arg(long, default_value = "127.0.0.1", help_heading = "Serving")]
        bind: std::net::IpAddr,
        #[arg(long, default_value_t = 8080, help_heading = "Serving")]
        port: u16,
        /// Session token for the subject URL [default: random]
        #[arg(long, help_heading = "Serving")]
        token: Option<String>,
        /// Seconds to wait for the subject's browser
        #[arg(long, default_value_t = 300.0, help_heading = "Serving")]
        connect_timeout: f64,
        /// Seconds a dropped subject may take to reconnect
        #[arg(long, default_value_t = 30.0, help_heading = "Serving")]
        reconnect_grace: f64,
    },
    /// Verify that a plan still matches its stimulus files.
    Check {
        plan: PathBuf,
        #[arg(long, env = "AUDEXP_STIM_ROOT", help = STIM_ROOT_HELP)]
        stim_root: Option<PathBuf>,
        /// Also confirm the plan was compiled from this spec
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run the simulated acquisition server until interrupted.
    ServeAcq {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Where the received timeline is written on shutdown
        #[arg(long, default_value = "acq_dump.json")]
        dump: PathBuf,
        /// Stop after this many client sessions have closed
        #[arg(long)]
        sessions: Option<usize>,
        /// Delay before every acknowledgement
        #[arg(long, default_value_t = 0)]
        ack_latency_ms: u64,
    },
    /// Write the demoBRS stimuli and spec into a directory.
    DemoStimuli {
        #[arg(long, default_value = "demoBRS")]
        out: PathBuf,
    },
}

pub fn parse_answers(s: &str) -> Result<AnswerPolicy, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let int = |a: &str| a.trim().parse::<i64>().map_err(|e| format!("{a:?}: {e}"));
    match (kind, arg) {
        ("midpoint", "") => Ok(AnswerPolicy::Midpoint),
        ("fixed", a) => Ok(AnswerPolicy::Fixed(int(a)?)),
        ("uniform", "") => Ok(AnswerPolicy::Uniform { seed: 0 }),
        ("uniform", a) => Ok(AnswerPolicy::Uniform {
            seed: a.parse().map_err(|e| format!("{a:?}: {e}"))?,
        }),
        ("script", a) => Ok(AnswerPolicy::Script(
            a.split(',').map(int).collect::<Result<_, _>>()?,
        )),
        _ => Err(format!(
            "unknown answer policy {s:?}; expected midpoint, fixed:N, uniform[:SEED] or script:N,N,..."
        )),
    }
}

pub fn parse_slider(s: &str) -> Result<SliderPolicy, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    match (kind, arg) {
        ("ramp", "") => Ok(SliderPolicy::Ramp),
        ("constant", a) => {
            let v: f64 = a.parse().map_err(|e| format!("{a:?}: {e}"))?;
            if (0.0..=1.0).contains(&v) {
                Ok(SliderPolicy::Constant(v))
            } else {
                Err(format!("slider value {v} outside 0..=1"))
            }
        }
        ("sine", a) => Ok(SliderPolicy::Sine {
            period_ms: a.parse().map_err(|e| format!("{a:?}: {e}"))?,
        }),
        _ => Err(format!(
            "unknown slider policy {s:?}; expected constant:V, ramp or sine:PERIOD_MS"
        )),
    }
}

pub fn seconds(s: f64) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s).map_err(|e| format!("{s} s: {e}"))
}

pub fn bind_addr(ip: std::net::IpAddr, port: u16) -> SocketAddr {
    SocketAddr::new(ip, port)
}
