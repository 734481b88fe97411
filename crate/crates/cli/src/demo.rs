//! The demoBRS walkthrough study: twelve short chord progressions in three
//! keys, each ending one of four ways, rated after every clip.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use audexp_core::spec::{serialize_spec, ExperimentSpec, Question, StimulusEntry, StudyType};
use audexp_core::stim_array::{RandomizationScheme, StimField};
use audexp_core::wav::write_pcm_wav;

pub const SPEC_FILE: &str = "demoBRS.toml";
pub const SAMPLE_RATE_HZ: u32 = 22_050;
const CHORD_S: f64 = 0.6;

/// File, stimulus type and ending condition, as listed for the demo study.
/// Files 05 to 08 all carry "C-tonic" in their names whatever their ending.
pub const STIMULI: [(&str, &str, &str); 12] = [
    ("SCP 01_B-dominant.wav", "B Key", "dominant"),
    ("SCP 02_B-flatII.wav", "B Key", "flatII"),
    ("SCP 03_B-silence.wav", "B Key", "silence"),
    ("SCP 04_B-tonic.wav", "B Key", "tonic"),
    ("SCP 05_C-tonic.wav", "C Key", "dominant"),
    ("SCP 06_C-tonic.wav", "C Key", "flatII"),
    ("SCP 07_C-tonic.wav", "C Key", "silence"),
    ("SCP 08_C-tonic.wav", "C Key", "tonic"),
    ("SCP 09_F-dominant.wav", "F Key", "dominant"),
    ("SCP 10_F-flatII.wav", "F Key", "flatII"),
    ("SCP 11_F-silence.wav", "F Key", "silence"),
    ("SCP 12_F-tonic.wav", "F Key", "tonic"),
];

pub fn demo_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new("demoBRS", StudyType::BehavioralRating);
    spec.description = "Simple chord progressions in B, C and F, each closing on the \
dominant, the flat supertonic, silence or the tonic. Rate how complete each ending feels."
        .into();
    spec.stimuli = STIMULI
        .iter()
        .enumerate()
        .map(|(i, (file, stim_type, condition))| StimulusEntry {
            file: (*file).into(),
            title: format!("Simple Chord Progression {:02}", i + 1),
            artist: "unknown".into(),
            stim_type: (*stim_type).into(),
            condition: (*condition).into(),
            ..Default::default()
        })
        .collect();
    spec.questions = vec![Question {
        prompt: "How complete did the ending sound?".into(),
        scale_min: 1,
        scale_max: 7,
        anchor_labels: Some(("not at all".into(), "completely".into())),
    }];
    spec.randomization = RandomizationScheme::BlockedShuffle {
        block_field: StimField::StimType,
        shuffle_within: true,
        shuffle_blocks: true,
        no_adjacent_repeat_field: None,
    };
    spec
}

fn key_root(stim_type: &str) -> i32 {
    match stim_type {
        "B Key" => 59,
        "C Key" => 60,
        _ => 53,
    }
}

/// Semitone offsets above the root, or `None` for a silent bar.
fn ending(condition: &str) -> Option<[i32; 3]> {
    match condition {
        "dominant" => Some([7, 11, 14]),
        "flatII" => Some([1, 5, 8]),
        "tonic" => Some([0, 4, 7]),
        _ => None,
    }
}

fn midi_hz(note: i32) -> f64 {
    440.0 * 2f64.powf(f64::from(note - 69) / 12.0)
}

/// I, IV, V, then the ending chord.
fn progression_samples(root: i32, last: Option<[i32; 3]>) -> Vec<i32> {
    let chords = [Some([0, 4, 7]), Some([5, 9, 12]), Some([7, 11, 14]), last];
    let per_chord = (CHORD_S * f64::from(SAMPLE_RATE_HZ)) as usize;
    let fade = per_chord / 20;
    let mut out = Vec::with_capacity(per_chord * chords.len());
    for chord in chords {
        for i in 0..per_chord {
            let Some(notes) = chord else {
                out.push(0);
                continue;
            };
            let t = i as f64 / f64::from(SAMPLE_RATE_HZ);
            let env = (i.min(per_chord - 1 - i) as f64 / fade as f64).min(1.0);
            let v: f64 = notes
                .iter()
                .map(|n| (2.0 * std::f64::consts::PI * midi_hz(root + n) * t).sin())
                .sum();
            out.push((v / 3.0 * env * 9000.0) as i32);
        }
    }
    out
}

/// Writes the twelve clips and the study spec into `dir`; returns the spec path.
pub fn write_demo(dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for (file, stim_type, condition) in STIMULI {
        let samples = progression_samples(key_root(stim_type), ending(condition));
        let w = BufWriter::new(File::create(dir.join(file))?);
        write_pcm_wav(w, 1, SAMPLE_RATE_HZ, 16, &samples)?;
    }
    let spec_path = dir.join(SPEC_FILE);
    std::fs::write(&spec_path, serialize_spec(&demo_spec()))?;
    Ok(spec_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use audexp_core::spec::{parse_spec, validate_spec};
    use audexp_core::wav::probe_wav;

    #[test]
    fn demo_is_valid_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_demo(dir.path()).unwrap();
        let spec = parse_spec(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(spec, demo_spec());
        let report = validate_spec(&spec, dir.path()).unwrap();
        assert!(report.errors.is_empty(), "{report}");
        let info = probe_wav(dir.path().join(STIMULI[0].0)).unwrap();
        assert_eq!(info.sample_rate_hz, SAMPLE_RATE_HZ);
        assert!((info.duration_s() - 4.0 * CHORD_S).abs() < 1e-3);
    }

    #[test]
    fn endings_differ() {
        let a = progression_samples(60, ending("tonic"));
        let b = progression_samples(60, ending("dominant"));
        let n = a.len() * 3 / 4;
        assert_eq!(a[..n], b[..n]);
        assert_ne!(a[n..], b[n..]);
        let silent = progression_samples(60, ending("silence"));
        assert!(silent[n..].iter().all(|&s| s == 0));
    }
}
