//! The `audexp` command line: validate a spec, compile it into a plan, run
//! the plan headless or with a browser subject, check its integrity, and
//! host a simulated acquisition server.

pub mod args;
pub mod commands;
pub mod demo;

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use audexp_bridge::BridgeOptions;
use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{AcqOptions, CliError, ExitStatus, RunMode, RunOptions};

/// Parses `argv`, runs the command and returns the process exit code.
/// Data goes to `out`, diagnostics to `err`.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            return if informational {
                let _ = write!(out, "{}", e.render());
                ExitStatus::Success.code()
            } else {
                let _ = write!(err, "{}", e.render());
                ExitStatus::Usage.code()
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(status) => status.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status().code()
        }
    }
}

fn root(stim_root: Option<PathBuf>) -> PathBuf {
    stim_root.unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> commands::CmdResult {
    match command {
        Command::Validate { spec, stim_root } => commands::validate(&spec, &root(stim_root), out),
        Command::Compile {
            spec,
            stim_root,
            subject,
            seed,
            out: dir,
        } => commands::compile(&spec, &root(stim_root), &subject, seed, &dir, out),
        Command::Run {
            plan,
            stim_root,
            simulate,
            out: out_root,
            acq,
            answers,
            slider,
            latency_ms,
            epoch_us,
            bind,
            port,
            token,
            connect_timeout,
            reconnect_grace,
            ..
        } => {
            let mode = if simulate {
                RunMode::Simulate {
                    answers,
                    slider,
                    latency_ms,
                    epoch_unix_us: epoch_us,
                }
            } else {
                RunMode::Serve {
                    bind: args::bind_addr(bind, port),
                    token,
                    connect_timeout: args::seconds(connect_timeout).map_err(CliError::Usage)?,
                    options: BridgeOptions {
                        reconnect_grace: args::seconds(reconnect_grace).map_err(CliError::Usage)?,
                        ..Default::default()
                    },
                }
            };
            let opts = RunOptions {
                mode,
                acq,
                out_root,
            };
            commands::run(&plan, &root(stim_root), &opts, out, err)
        }
        Command::Check {
            plan,
            stim_root,
            spec,
        } => commands::check(&plan, &root(stim_root), spec.as_deref(), out),
        Command::ServeAcq {
            port,
            bind,
            dump,
            sessions,
            ack_latency_ms,
        } => {
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            // Only one handler per process; a second install is harmless to skip.
            let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Release));
            let opts = AcqOptions {
                bind_host: bind,
                port,
                dump,
                sessions,
                ack_latency: Duration::from_millis(ack_latency_ms),
            };
            commands::serve_acq(&opts, stop, out, err)
        }
        Command::DemoStimuli { out: dir } => commands::demo_stimuli(&dir, out),
    }
}
