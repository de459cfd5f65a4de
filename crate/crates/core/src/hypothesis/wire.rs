//! Newline-delimited JSON records exchanged with a prediction server.
//!
//! ```text
//! -> {"id":"7","features":[...]}
//! <- {"id":"7","probs":[...]}     or   {"id":"7","error":"..."}
//! -> {"cmd":"ping"}
//! <- {"ok":true,"classes":5}
//! ```
//!
//! Numbers are written with 17 significant digits, enough to round-trip any
//! `f64` exactly. Error strings start with a category (`invalid-argument:`
//! or `protocol:`) so clients can map them back to error kinds.

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const INVALID_ARGUMENT_PREFIX: &str = "invalid-argument: ";
pub const PROTOCOL_PREFIX: &str = "protocol: ";

/// `v` with 17 significant digits in exponent form, e.g. `7.5000000000000000e-1`.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| format_number(v)).collect();
    format!("[{}]", parts.join(","))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn format_request(id: &str, features: &[f64]) -> String {
    format!("{{\"id\":{},\"features\":{}}}", quote(id), format_array(features))
}

pub fn format_probs_response(id: &str, probs: &[f64]) -> String {
    format!("{{\"id\":{},\"probs\":{}}}", quote(id), format_array(probs))
}

pub fn format_error_response(id: &str, message: &str) -> String {
    format!("{{\"id\":{},\"error\":{}}}", quote(id), quote(message))
}

pub fn format_ping_response(classes: usize) -> String {
    format!("{{\"ok\":true,\"classes\":{classes}}}")
}

pub const PING: &str = "{\"cmd\":\"ping\"}";

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Ping,
    Predict { id: String, features: Vec<f64> },
}

/// A request that could not be understood; `id` is echoed when present.
#[derive(Debug, Clone, PartialEq)]
pub struct BadRequest {
    pub id: String,
    pub message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRecord {
    id: String,
    features: Vec<f64>,
}

pub fn parse_request(line: &str) -> std::result::Result<Request, BadRequest> {
    let value: Value = serde_json::from_str(line).map_err(|e| BadRequest {
        id: String::new(),
        message: format!("{PROTOCOL_PREFIX}malformed JSON: {e}"),
    })?;
    let id = value
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    if let Some(cmd) = value.get("cmd") {
        return if cmd == "ping" && value.as_object().is_some_and(|o| o.len() == 1) {
            Ok(Request::Ping)
        } else {
            Err(BadRequest {
                id,
                message: format!("{PROTOCOL_PREFIX}unknown command {cmd}"),
            })
        };
    }
    let record: PredictRecord = serde_json::from_value(value).map_err(|e| BadRequest {
        id: id.clone(),
        message: format!("{PROTOCOL_PREFIX}bad request: {e}"),
    })?;
    Ok(Request::Predict {
        id: record.id,
        features: record.features,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Pong { classes: usize },
    Probs { id: String, probs: Vec<f64> },
    Error { id: String, message: String },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResponseRecord {
    Pong { ok: bool, classes: usize },
    Probs { id: String, probs: Vec<f64> },
    Error { id: String, error: String },
}

pub fn parse_response(line: &str) -> Result<Response> {
    let record: ResponseRecord = serde_json::from_str(line)
        .map_err(|e| Error::Protocol(format!("unparseable response {line:?}: {e}")))?;
    Ok(match record {
        ResponseRecord::Pong { ok: true, classes } => Response::Pong { classes },
        ResponseRecord::Pong { ok: false, .. } => {
            return Err(Error::Protocol("server answered ping with ok=false".into()))
        }
        ResponseRecord::Probs { id, probs } => Response::Probs { id, probs },
        ResponseRecord::Error { id, error } => Response::Error { id, message: error },
    })
}

/// Maps a server error string back to an error kind.
pub fn error_from_message(message: &str) -> Error {
    if let Some(rest) = message.strip_prefix(INVALID_ARGUMENT_PREFIX) {
        Error::InvalidArgument(format!("remote: {rest}"))
    } else {
        Error::Protocol(format!("remote: {}", message.strip_prefix(PROTOCOL_PREFIX).unwrap_or(message)))
    }
}
