//! JSON Lines event logs. A decision log line is an event plus a `response`
//! field, so decision logs replay like plain event logs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::constraints::Weight;
use crate::controller::LaneEvaluation;
use crate::domain::{BodyType, Timestamp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventRecord {
    EnqueueRequest {
        car_id: String,
        body_type: BodyType,
        timestamp: Timestamp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        available_lanes: Option<Vec<usize>>,
        /// The order the car was built for, when known.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order_id: Option<String>,
    },
    DequeueRequest {
        timestamp: Timestamp,
        /// Heads allowed to leave; all unblocked heads when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eligible_heads: Option<Vec<usize>>,
    },
    SubstitutionRequest {
        car_id: String,
        timestamp: Timestamp,
    },
    EmissionObserved {
        car_id: String,
        order_id: String,
        timestamp: Timestamp,
    },
    LaneLockChanged {
        lane: usize,
        locked: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp: Option<Timestamp>,
    },
}

impl EventRecord {
    pub fn timestamp(&self) -> Option<Timestamp> {
        match self {
            EventRecord::EnqueueRequest { timestamp, .. }
            | EventRecord::DequeueRequest { timestamp, .. }
            | EventRecord::SubstitutionRequest { timestamp, .. }
            | EventRecord::EmissionObserved { timestamp, .. } => Some(*timestamp),
            EventRecord::LaneLockChanged { timestamp, .. } => *timestamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Response {
    Enqueued {
        lane: usize,
        rationale: String,
        evaluations: Vec<LaneEvaluation>,
        version: u64,
    },
    Dequeued {
        lane: usize,
        car_id: String,
        order_id: String,
        violation: Weight,
        rationale: String,
        version: u64,
    },
    Applied {
        version: u64,
    },
    Rejected {
        code: String,
        error: String,
        version: u64,
    },
}

impl Response {
    pub fn is_rejected(&self) -> bool {
        matches!(self, Response::Rejected { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    #[serde(flatten)]
    pub event: EventRecord,
    pub response: Response,
}

/// Parses JSON Lines text. Blank lines are ignored and a `response` field is
/// dropped, so decision logs are accepted. Events are stably ordered by time;
/// untimed events keep the time of the event before them.
pub fn parse_events(text: &str, path: &Path) -> Result<Vec<EventRecord>, HarnessError> {
    let mut events = Vec::new();
    let mut last = Timestamp(i64::MIN);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Parse {
            path: path.into(),
            line: i + 1,
            message,
        };
        let mut value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("response");
        }
        let event: EventRecord = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
        if let Some(t) = event.timestamp() {
            last = t;
        }
        events.push((last, event));
    }
    events.sort_by_key(|(t, _)| *t);
    Ok(events.into_iter().map(|(_, e)| e).collect())
}

pub fn load_events(path: &Path) -> Result<Vec<EventRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_events(&text, path)
}

/// Writes one JSON object per line.
pub fn write_events<T: Serialize>(path: &Path, records: &[T]) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(&out).map_err(|e| HarnessError::io(path, e))
}
