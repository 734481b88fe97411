use audexp_core::spec::{parse_spec, serialize_spec, ParseError, StudyType};
use audexp_core::testing::experiment_spec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_then_parse_is_identity(spec in experiment_spec()) {
        let text = serialize_spec(&spec);
        let back = parse_spec(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(serialize_spec(&back), text);
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_spec(&text);
    }
}

const BRS: &str = r##"
name = "demo"
study_type = "behavioral rating"

[[stimuli]]
file = "a.wav"
stim_type = "chord"
condition = "tonic"

[[questions]]
prompt = "How stable?"
scale_min = 1
scale_max = 9
anchor_labels = ["unstable", "stable"]
"##;

#[test]
fn hand_written_spec_gets_defaults() {
    let spec = parse_spec(BRS).unwrap();
    assert_eq!(spec.study_type, StudyType::BehavioralRating);
    assert_eq!(spec.repetitions, 1);
    assert_eq!(spec.isi_ms, 1000);
    assert_eq!(spec.display.background_color, "#000000");
    assert_eq!(
        spec.questions[0].anchor_labels,
        Some(("unstable".into(), "stable".into()))
    );
    assert_eq!(parse_spec(&serialize_spec(&spec)).unwrap(), spec);
}

#[test]
fn errors_name_the_field() {
    let text = BRS.replace("stim_type = \"chord\"\n", "");
    assert!(matches!(
        parse_spec(&text),
        Err(ParseError::MissingRequiredField(f)) if f == "stimuli[0].stim_type"
    ));
    let text = BRS.replace("scale_max = 9", "scale_max = \"nine\"");
    assert!(matches!(
        parse_spec(&text),
        Err(ParseError::InvalidValue { field, .. }) if field == "questions[0].scale_max"
    ));
    let text = format!("{BRS}\n[display]\nbackground = \"#fff\"\n");
    assert!(matches!(
        parse_spec(&text),
        Err(ParseError::UnknownKey(k)) if k == "display.background"
    ));
}
