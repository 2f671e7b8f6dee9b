//! Wire protocol: one JSON object per line, discriminated by `tag`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_hand_frame, HandFrame, JointVector, VertexPose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    /// Control hand, drives retargeting.
    #[default]
    Right,
    /// Gesture hand, drives recording.
    Left,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Start,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum StreamMessage {
    HandFrame {
        t: f64,
        vertices: Vec<VertexPose>,
        #[serde(default)]
        hand: Hand,
    },
    JointState {
        t: f64,
        q: JointVector,
        tau: JointVector,
    },
    JointCommand {
        t: f64,
        dq: JointVector,
    },
    GestureEvent {
        t: f64,
        kind: GestureKind,
    },
    RecordStatus {
        t: f64,
        recording: bool,
        episode_id: Option<String>,
    },
    Prompt {
        t: f64,
        center: [f64; 2],
        rot: f64,
    },
    Error {
        code: String,
        message: String,
    },
}

pub const TAGS: [&str; 7] =
    ["hand_frame", "joint_state", "joint_command", "gesture_event", "record_status", "prompt", "error"];

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    pub code: &'static str,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn to_message(&self) -> StreamMessage {
        StreamMessage::Error { code: self.code.to_string(), message: self.message.clone() }
    }
}

impl StreamMessage {
    pub fn tag(&self) -> &'static str {
        match self {
            StreamMessage::HandFrame { .. } => "hand_frame",
            StreamMessage::JointState { .. } => "joint_state",
            StreamMessage::JointCommand { .. } => "joint_command",
            StreamMessage::GestureEvent { .. } => "gesture_event",
            StreamMessage::RecordStatus { .. } => "record_status",
            StreamMessage::Prompt { .. } => "prompt",
            StreamMessage::Error { .. } => "error",
        }
    }

    pub fn t(&self) -> Option<f64> {
        match self {
            StreamMessage::HandFrame { t, .. }
            | StreamMessage::JointState { t, .. }
            | StreamMessage::JointCommand { t, .. }
            | StreamMessage::GestureEvent { t, .. }
            | StreamMessage::RecordStatus { t, .. }
            | StreamMessage::Prompt { t, .. } => Some(*t),
            StreamMessage::Error { .. } => None,
        }
    }

    pub fn from_frame(frame: &HandFrame, hand: Hand) -> Self {
        StreamMessage::HandFrame { t: frame.t, vertices: frame.vertices.clone(), hand }
    }

    /// One line without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Parses one line. Unknown tags, malformed JSON and invalid hand frames
/// are reported with distinct codes.
pub fn decode_message(line: &str) -> Result<StreamMessage, ProtocolError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ProtocolError::new("malformed", e.to_string()))?;
    let tag = value
        .get("tag")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ProtocolError::new("malformed", "missing string field \"tag\""))?;
    if !TAGS.contains(&tag) {
        return Err(ProtocolError::new("unknown_tag", format!("unknown tag {tag:?}")));
    }
    let message: StreamMessage =
        serde_json::from_value(value).map_err(|e| ProtocolError::new("malformed", e.to_string()))?;
    if let StreamMessage::HandFrame { t, vertices, .. } = &message {
        let frame = HandFrame { t: *t, vertices: vertices.clone() };
        validate_hand_frame(&frame).map_err(|e| ProtocolError::new("invalid_frame", e.to_string()))?;
    }
    Ok(message)
}
