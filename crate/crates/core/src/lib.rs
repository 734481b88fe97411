//! Declarative auditory experiments: parse and validate a study spec,
//! compile it into a seeded session plan, run the plan against a subject
//! interface, and deliver time-stamped triggers to an acquisition system.
//!
//! The pipeline, end to end:
//!
//! 1. [`spec::parse_spec`] reads the TOML study definition and
//!    [`spec::validate_spec`] checks it against the stimulus directory.
//! 2. [`engine::compile_plan`] resolves the stimulus order
//!    ([`stim_array`]), trigger codes and stimulus hashes into a
//!    [`engine::SessionPlan`].
//! 3. [`engine::run_session`] walks the plan on a [`clock::Clock`],
//!    presenting stimuli through a [`wav::PlaybackPort`], asking questions
//!    through an [`engine::SubjectPort`] and sending triggers through a
//!    [`trigger::TriggerLink`].
//! 4. [`store::finalize`] writes the session log to a result directory and
//!    [`store::load_result`] reads it back.

pub mod clock;
pub mod engine;
pub mod spec;
pub mod stim_array;
pub mod store;
#[cfg(feature = "testing")]
pub mod testing;
pub mod trigger;
pub mod wav;

use sha2::{Digest, Sha256};

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
