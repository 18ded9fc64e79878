//! JSON messages exchanged over the socket. Every message is an object with a
//! `type` tag; client coordinates are normalized to the unit square.

use airpen_core::gestures::GestureClass;
use airpen_core::streaming::{Decision, GestureEvent, SegmentMode};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    // Client to server.
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_hint: Option<String>,
    },
    Point {
        x: f64,
        y: f64,
        t_ms: u64,
    },
    End {},
    /// Sent by the client to change settings; echoed back with the values in force.
    Config {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<SegmentMode>,
    },

    // Server to client.
    Started {
        session_id: String,
        classes: Vec<String>,
    },
    /// Normalized `[x, y, t_ms]` triples received since the previous echo.
    Trail {
        session_id: String,
        points: Vec<[f64; 3]>,
    },
    Prediction {
        session_id: String,
        /// Indexed like the `classes` list of `started`.
        probs: Vec<f64>,
        class: GestureClass,
        decision: Decision,
        confidence: f64,
        latency_ms: f64,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    NoSession,
    BadMessage,
    TooShort,
}

impl WireMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        WireMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn prediction(event: &GestureEvent) -> Self {
        WireMessage::Prediction {
            session_id: event.session_id.clone(),
            probs: event.prediction.probs.to_vec(),
            class: event.prediction.class,
            decision: event.decision,
            confidence: event.prediction.confidence,
            latency_ms: event.latency_ms,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    /// Whether a client may send this variant.
    pub fn is_client_message(&self) -> bool {
        matches!(
            self,
            WireMessage::Start { .. } | WireMessage::Point { .. } | WireMessage::End {} | WireMessage::Config { .. }
        )
    }

    pub fn session_id(&self) -> Option<&str> {
        match self {
            WireMessage::Started { session_id, .. }
            | WireMessage::Trail { session_id, .. }
            | WireMessage::Prediction { session_id, .. } => Some(session_id),
            _ => None,
        }
    }
}
