//! Newline-delimited JSON messages exchanged with an external surrogate
//! process over its standard streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Fit,
    Predict,
    Shutdown,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Fit => "fit",
            Op::Predict => "predict",
            Op::Shutdown => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(id: u64) -> Self {
        Self {
            id,
            ok: true,
            mean: None,
            variance: None,
            quantiles: None,
            error: None,
        }
    }

    pub fn failure(id: u64, message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Self::ok(id)
        }
    }
}

const EXCERPT_CHARS: usize = 120;

pub fn excerpt(line: &str) -> String {
    let mut out: String = line.chars().take(EXCERPT_CHARS).collect();
    if line.chars().count() > EXCERPT_CHARS {
        out.push_str("...");
    }
    out
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("failed to start sidecar '{program}': {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },

    #[error("sidecar i/o failed during {op}: {source}")]
    Io {
        op: &'static str,
        #[source]
        source: std::io::Error,
    },

    #[error("sidecar did not answer {op} within {seconds} s")]
    Timeout { op: &'static str, seconds: f64 },

    #[error("malformed sidecar response to {op}: {reason}; line: {line}")]
    Malformed {
        op: &'static str,
        line: String,
        reason: String,
    },

    #[error("sidecar exited during {op} with {status}")]
    Exited { op: &'static str, status: String },

    #[error("sidecar rejected {op}: {message}")]
    Protocol { op: &'static str, message: String },
}

impl WireError {
    pub fn op(&self) -> Option<&'static str> {
        match self {
            WireError::Spawn { .. } => None,
            WireError::Io { op, .. }
            | WireError::Timeout { op, .. }
            | WireError::Malformed { op, .. }
            | WireError::Exited { op, .. }
            | WireError::Protocol { op, .. } => Some(op),
        }
    }
}

/// Encodes one message as a single line without the trailing newline.
pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("wire messages serialise")
}

pub fn decode_response(op: Op, line: &str) -> Result<Response, WireError> {
    serde_json::from_str(line).map_err(|e| WireError::Malformed {
        op: op.name(),
        line: excerpt(line),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_are_compact_single_lines() {
        let req = Request {
            id: 7,
            op: Op::Fit,
            x: Some(vec![vec![0.5, 1.0], vec![2.0, -1.0]]),
            y: Some(vec![1.0, 2.0]),
            quantiles: None,
        };
        let line = encode(&req);
        assert!(!line.contains('\n') && !line.contains(": "));
        assert_eq!(line, r#"{"id":7,"op":"fit","x":[[0.5,1.0],[2.0,-1.0]],"y":[1.0,2.0]}"#);
        assert_eq!(serde_json::from_str::<Request>(&line).unwrap(), req);
    }

    #[test]
    fn responses_round_trip() {
        let line = r#"{"id":3,"ok":true,"mean":[0.0],"variance":[1.0],"quantiles":[[-1.0,0.0,1.0]]}"#;
        let resp = decode_response(Op::Predict, line).unwrap();
        assert_eq!(resp.quantiles.as_ref().unwrap()[0].len(), 3);
        assert_eq!(encode(&resp), line);
        let fail = decode_response(Op::Predict, r#"{"id":4,"ok":false,"error":"predict before fit"}"#).unwrap();
        assert_eq!(fail, Response::failure(4, "predict before fit"));
    }

    #[test]
    fn malformed_lines_keep_an_excerpt() {
        let long = format!("garbage {}", "x".repeat(500));
        match decode_response(Op::Predict, &long) {
            Err(WireError::Malformed { op, line, .. }) => {
                assert_eq!(op, "predict");
                assert!(line.starts_with("garbage") && line.len() < 200);
            }
            other => panic!("{other:?}"),
        }
    }
}
