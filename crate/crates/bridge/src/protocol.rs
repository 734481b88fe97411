//! The JSON messages exchanged with the subject interface over WebSocket.
//!
//! Every frame is one JSON object carrying the schema version `v` and a
//! `type` tag, for example `{"v":1,"type":"Answer","value":5}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Engine to UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EngineMessage {
    /// Sent on every (re)connection before any other screen.
    ApplyTheme {
        background_color: String,
        font_color: String,
        font_size_pt: u32,
    },
    ShowInstructions {
        text: String,
    },
    PresentStimulus {
        url: String,
        label: Option<String>,
    },
    ShowQuestion {
        prompt: String,
        scale_min: i64,
        scale_max: i64,
        anchors: Option<(String, String)>,
    },
    StartContinuous {
        labels: (String, String),
    },
    StopContinuous,
    SessionDone,
    /// A UI message was refused; the UI should keep its current screen.
    Rejected {
        reason: String,
    },
}

/// UI to engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum UiMessage {
    /// First message on a connection; afterwards, acknowledges instructions.
    Ready,
    StimulusEnded,
    Answer {
        value: i64,
    },
    Slider {
        value: f64,
    },
    Heartbeat,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("schema version {0} is not supported")]
    UnsupportedVersion(u32),
}

#[derive(Serialize)]
struct Outgoing<'a, T> {
    v: u32,
    #[serde(flatten)]
    msg: &'a T,
}

#[derive(Deserialize)]
struct Incoming<T> {
    v: u32,
    #[serde(flatten)]
    msg: T,
}

pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(&Outgoing {
        v: SCHEMA_VERSION,
        msg,
    })
    .expect("protocol messages always serialize")
}

pub fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ProtocolError> {
    let incoming: Incoming<T> = serde_json::from_str(text)?;
    if incoming.v != SCHEMA_VERSION {
        return Err(ProtocolError::UnsupportedVersion(incoming.v));
    }
    Ok(incoming.msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        assert_eq!(
            encode(&UiMessage::Answer { value: 5 }),
            r#"{"v":1,"type":"Answer","value":5}"#
        );
        assert_eq!(
            encode(&EngineMessage::SessionDone),
            r#"{"v":1,"type":"SessionDone"}"#
        );
        assert_eq!(
            encode(&EngineMessage::ShowQuestion {
                prompt: "How tense?".into(),
                scale_min: 1,
                scale_max: 9,
                anchors: Some(("calm".into(), "tense".into())),
            }),
            r#"{"v":1,"type":"ShowQuestion","prompt":"How tense?","scale_min":1,"scale_max":9,"anchors":["calm","tense"]}"#
        );
    }

    #[test]
    fn decode_checks_version_and_shape() {
        let msg: UiMessage = decode(r#"{"v":1,"type":"Slider","value":0.25}"#).unwrap();
        assert_eq!(msg, UiMessage::Slider { value: 0.25 });
        assert!(matches!(
            decode::<UiMessage>(r#"{"v":2,"type":"Ready"}"#),
            Err(ProtocolError::UnsupportedVersion(2))
        ));
        assert!(decode::<UiMessage>(r#"{"type":"Ready"}"#).is_err());
        assert!(decode::<UiMessage>(r#"{"v":1,"type":"Answer"}"#).is_err());
        assert!(decode::<UiMessage>(r#"{"v":1,"type":"Dance"}"#).is_err());
    }

    #[test]
    fn engine_messages_round_trip() {
        let all = [
            EngineMessage::ApplyTheme {
                background_color: "#000000".into(),
                font_color: "#FFFFFF".into(),
                font_size_pt: 24,
            },
            EngineMessage::ShowInstructions {
                text: "Listen".into(),
            },
            EngineMessage::PresentStimulus {
                url: "/session/t/stim/0".into(),
                label: Some("A".into()),
            },
            EngineMessage::StartContinuous {
                labels: ("calm".into(), "tense".into()),
            },
            EngineMessage::StopContinuous,
            EngineMessage::Rejected { reason: "x".into() },
        ];
        for m in all {
            assert_eq!(decode::<EngineMessage>(&encode(&m)).unwrap(), m);
        }
    }
}
