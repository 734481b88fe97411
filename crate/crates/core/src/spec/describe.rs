use std::fmt::Write;

use super::{ExperimentSpec, StudyType, TriggerMode};
use crate::stim_array::RandomizationScheme;

/// Renders the README-FIRST document for a compiled study. Pure in `spec`.
pub fn describe_spec(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "README-FIRST: {}", spec.name);
    let _ = writeln!(w, "{}", "=".repeat(14 + spec.name.chars().count()));
    let _ = writeln!(w);
    let _ = writeln!(w, "Study type: {}", spec.study_type.title());
    if !spec.description.trim().is_empty() {
        let _ = writeln!(w);
        for line in spec.description.lines() {
            let _ = writeln!(w, "  {}", line.trim_end());
        }
    }
    let _ = writeln!(w);

    let baseline = spec.stimuli.iter().filter(|s| s.baseline).count();
    let experimental = spec.stimuli.len() - baseline;
    let _ = write!(w, "Stimuli: {experimental} stimuli");
    if baseline > 0 {
        let _ = write!(w, " plus {baseline} baseline");
    }
    let _ = writeln!(w, ", presented {} time(s) each pass.", spec.repetitions);
    for (i, s) in spec.stimuli.iter().enumerate() {
        let tag = if s.baseline { " [baseline]" } else { "" };
        let _ = writeln!(
            w,
            "  {:>3}. {} | {} | {} | {} | {}{}",
            i + 1,
            s.file,
            s.title,
            s.artist,
            s.stim_type,
            s.condition,
            tag
        );
    }
    let _ = writeln!(w);

    let _ = writeln!(w, "Ordering: {}", describe_scheme(&spec.randomization));
    let _ = writeln!(w, "Inter-stimulus interval: {} ms", spec.isi_ms);
    let _ = writeln!(w);

    if spec.questions.is_empty() {
        let _ = writeln!(w, "Questions: none");
    } else {
        let _ = writeln!(w, "Questions ({}):", spec.questions.len());
        for (i, q) in spec.questions.iter().enumerate() {
            let _ = write!(
                w,
                "  {}. {} [{}..{}]",
                i + 1,
                q.prompt,
                q.scale_min,
                q.scale_max
            );
            if let Some((lo, hi)) = &q.anchor_labels {
                let _ = write!(w, " ({lo} .. {hi})");
            }
            let _ = writeln!(w);
        }
    }

    if let (StudyType::ContinuousRating, Some(task)) = (spec.study_type, &spec.continuous_task) {
        let _ = writeln!(w);
        let _ = writeln!(
            w,
            "Continuous task: slider sampled every {} ms while each stimulus plays.",
            task.sample_period_ms
        );
        let _ = writeln!(w, "  Instructions: {}", task.instructions);
    }

    let _ = writeln!(w);
    match (&spec.trigger, spec.study_type.needs_trigger()) {
        (Some(t), true) => {
            match t.mode {
                TriggerMode::Tcp => {
                    let _ = writeln!(w, "Trigger link: TCP {}", t.endpoint());
                }
                TriggerMode::SimulatedTtl => {
                    let _ = writeln!(
                        w,
                        "Trigger link: simulated TTL register ({} ms pulses)",
                        t.pulse_width_ms
                    );
                }
            }
            let _ = writeln!(
                w,
                "Response triggers: {}",
                if t.send_response_triggers {
                    "on"
                } else {
                    "off"
                }
            );
            let codes = spec.onset_codes();
            for (s, code) in spec.stimuli.iter().zip(&codes) {
                let _ = writeln!(w, "  {code}  {}", s.file);
            }
        }
        _ => {
            let _ = writeln!(w, "Trigger link: none");
        }
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "Running the study");
    let _ = writeln!(w, "-----------------");
    let _ = writeln!(w, "1. Check that the stimuli still match this plan:");
    let _ = writeln!(w, "     audexp check plan.json --stim-root <stimulus dir>");
    if spec.study_type.needs_trigger() {
        if let Some(t) = spec.trigger.as_ref().filter(|t| t.mode == TriggerMode::Tcp) {
            let _ = writeln!(
                w,
                "2. Start the acquisition system listening on {} before the session.",
                t.endpoint()
            );
        } else {
            let _ = writeln!(
                w,
                "2. No acquisition link to start; pulses are logged in-process."
            );
        }
    } else {
        let _ = writeln!(w, "2. No acquisition system is needed.");
    }
    let _ = writeln!(w, "3. Run the session with the subject's browser:");
    let _ = writeln!(
        w,
        "     audexp run plan.json --stim-root <stimulus dir> --serve --port 8080"
    );
    let _ = writeln!(w, "   or headless, for a dry run:");
    let _ = writeln!(
        w,
        "     audexp run plan.json --stim-root <stimulus dir> --simulate"
    );
    let _ = writeln!(
        w,
        "4. Results land in a new directory named after the subject and start time."
    );
    out
}

fn describe_scheme(scheme: &RandomizationScheme) -> String {
    match scheme {
        RandomizationScheme::FixedOrder => "fixed, in declaration order".into(),
        RandomizationScheme::FullShuffle => "full shuffle".into(),
        RandomizationScheme::BlockedShuffle {
            block_field,
            shuffle_within,
            shuffle_blocks,
            no_adjacent_repeat_field,
        } => {
            let mut s = format!("blocked by {}", block_field.as_str());
            if *shuffle_blocks {
                s.push_str(", blocks shuffled");
            }
            if *shuffle_within {
                s.push_str(", shuffled within blocks");
            }
            if let Some(f) = no_adjacent_repeat_field {
                let _ = write!(s, ", no consecutive repeats of {}", f.as_str());
            }
            s
        }
        RandomizationScheme::ProbabilitySelect {
            draws, replacement, ..
        } => format!(
            "{draws} weighted draws {} replacement",
            if *replacement { "with" } else { "without" }
        ),
        RandomizationScheme::AllPairs { ordered } => format!(
            "all {} pairs, shuffled",
            if *ordered { "ordered" } else { "unordered" }
        ),
    }
}
