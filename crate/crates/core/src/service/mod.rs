//! Study execution backend: durable per-study state driven by an
//! append-only event log, and the HTTP API observers' browsers talk to.

mod http;
mod store;

pub use http::{router, CreateStudy, Created, Submission};
pub use store::{FailPoint, Study, StudyStore, EVENTS_FILE, SNAPSHOT_FILE};

use crate::lightfield::{BitDepth, View};
use crate::study::{Choice, Phase, Response};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Dwell time of each image in the flicker.
pub const FLICKER_MS: u64 = 500;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown observer {0}")]
    UnknownObserver(String),
    #[error("manifest has no {0}")]
    EmptyManifest(&'static str),
    #[error("asset {0} does not exist")]
    DanglingAsset(String),
    #[error("observer {observer} is in phase {phase}, which does not allow this request")]
    OutOfPhase { observer: String, phase: ObserverPhase },
    #[error("observer {0} has an unanswered presentation")]
    Outstanding(String),
    #[error("triplet {triplet} is not the item currently served to {observer}")]
    Stale { observer: String, triplet: String },
    #[error("invalid choice token {0:?}")]
    InvalidChoice(String),
    #[error("break ends in {0} s")]
    BreakNotOver(u64),
    #[error("observer {0} is already registered")]
    AlreadyRegistered(String),
    #[error("study directory {0} holds a different manifest")]
    Conflict(String),
    #[error("injected crash after durable write")]
    InjectedCrash,
    #[error("corrupt event log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverPhase {
    Screening,
    Training,
    Testing,
    Break,
    Done,
}

impl std::fmt::Display for ObserverPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
}

/// Operator-entered screening results and consent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverRecord {
    pub observer_id: String,
    #[serde(default)]
    pub demographics: Demographics,
    pub acuity_ok: bool,
    pub color_vision_ok: bool,
    pub consent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consent_at: Option<String>,
}

impl ObserverRecord {
    pub fn cleared(&self) -> bool {
        self.consent && self.acuity_ok && self.color_vision_ok
    }
}

/// Per-study presentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub flicker_ms: u64,
    /// Minimum length of the halfway break.
    pub min_break_s: u64,
    /// Integer zoom applied by the client; stimuli are otherwise pixel-exact.
    pub zoom: u32,
    /// Log events between snapshots.
    pub snapshot_every: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            flicker_ms: FLICKER_MS,
            min_break_s: 0,
            zoom: 1,
            snapshot_every: 100,
        }
    }
}

/// The item an observer must answer next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outstanding {
    pub triplet_id: String,
    pub swapped: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub record: ObserverRecord,
    pub phase: ObserverPhase,
    pub training_cursor: usize,
    pub cursor: usize,
    pub break_taken: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub break_started_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outstanding: Option<Outstanding>,
}

/// Everything derived from the event log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyState {
    pub study_id: String,
    pub events: u64,
    pub responses: u64,
    pub observers: BTreeMap<String, ObserverState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Registered { record: ObserverRecord },
    Served { observer_id: String, item: Outstanding },
    Responded { response: Response },
    BreakStarted { observer_id: String },
    BreakEnded { observer_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// What the client shows next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    Present(Presentation),
    Break { min_break_s: u64, remaining_s: u64 },
    Done { completion_code: String },
}

/// One triplet as displayed: `left` and `right` already reflect the swap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub triplet_id: String,
    pub phase: Phase,
    pub index: usize,
    pub total: usize,
    pub reference: String,
    pub left: String,
    pub right: String,
    pub flicker_ms: u64,
    pub swapped: bool,
    pub zoom: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub phase: ObserverPhase,
    pub cursor: usize,
}

pub fn parse_choice(token: &str) -> Result<Choice> {
    serde_json::from_value(serde_json::Value::String(token.to_string())).map_err(|_| ServiceError::InvalidChoice(token.to_string()))
}

/// Display rendering of a stimulus: each sample mapped to the nearest 8-bit
/// code, ties to even. No resampling; the client applies `zoom` by pixel
/// replication.
pub fn render_stimulus(view: &View) -> View {
    let codes: Vec<u32> = view.samples().iter().map(|&v| (v * 255.0).round_ties_even() as u32).collect();
    View::from_codes(view.width(), view.height(), BitDepth::Eight, &codes).expect("codes are within 8 bits")
}
