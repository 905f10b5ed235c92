//! Parsing and serialization of the sensor-trace CSV and the interaction log.
//!
//! Trace files:
//!
//! ```text
//! ts,kind,lat,lon,acc,speed,activity,confidence
//! 1000,loc,37.0,-122.0,5.0,12.0,,
//! 1000,motion,,,,,automotive,0.9
//! ```
//!
//! Interaction logs:
//!
//! ```text
//! ts,event
//! 1000,foreground
//! 5000,tab:cost
//! ```
//!
//! Lines starting with `#` before the header are comments. Malformed data
//! lines are skipped and counted rather than aborting the parse.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::domain::{
    Activity, GeoPoint, LocationSample, MotionSample, Payload, TraceRecord,
};

pub const TRACE_HEADER: &str = "ts,kind,lat,lon,acc,speed,activity,confidence";
pub const LOG_HEADER: &str = "ts,event";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing header line (expected `{expected}`)")]
    MissingHeader { expected: &'static str },
    #[error("no records ({skipped} malformed lines skipped)")]
    NoRecords { skipped: usize },
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
}

/// Tags written to the interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UiEvent {
    Foreground,
    Background,
    TabTrips,
    TabCarbon,
    TabCost,
    TabInfo,
    TabLog,
}

impl UiEvent {
    pub const ALL: [UiEvent; 7] = [
        UiEvent::Foreground,
        UiEvent::Background,
        UiEvent::TabTrips,
        UiEvent::TabCarbon,
        UiEvent::TabCost,
        UiEvent::TabInfo,
        UiEvent::TabLog,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            UiEvent::Foreground => "foreground",
            UiEvent::Background => "background",
            UiEvent::TabTrips => "tab:trips",
            UiEvent::TabCarbon => "tab:carbon",
            UiEvent::TabCost => "tab:cost",
            UiEvent::TabInfo => "tab:info",
            UiEvent::TabLog => "tab:log",
        }
    }

    pub fn from_tag(tag: &str) -> Option<UiEvent> {
        UiEvent::ALL.into_iter().find(|e| e.tag() == tag)
    }
}

impl fmt::Display for UiEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl Serialize for UiEvent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for UiEvent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        UiEvent::from_tag(&tag)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown event tag `{tag}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub ts: i64,
    pub event: UiEvent,
}

impl InteractionEvent {
    pub fn new(ts: i64, event: UiEvent) -> Option<Self> {
        (ts > 0).then_some(Self { ts, event })
    }
}

/// Time-ordered sensor records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceFile {
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    /// Builds a trace, sorting stably by timestamp.
    pub fn from_records(mut records: Vec<TraceRecord>) -> Self {
        records.sort_by_key(|r| r.ts);
        Self { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub trace: TraceFile,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<InteractionEvent>,
    pub skipped: usize,
}

/// Splits off comment lines and checks the header. Returns the data lines.
fn data_lines<'a>(
    text: &'a str,
    header: &'static str,
) -> Result<impl Iterator<Item = &'a str>, ParseError> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    loop {
        match lines.next() {
            Some(l) if l.starts_with('#') || l.trim().is_empty() => continue,
            Some(l) if l.trim() == header => break,
            _ => return Err(ParseError::MissingHeader { expected: header }),
        }
    }
    Ok(lines.filter(|l| !l.trim().is_empty()))
}

fn parse_f64(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_trace_line(line: &str) -> Option<TraceRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 8 {
        return None;
    }
    let ts: i64 = fields[0].trim().parse().ok()?;
    let payload = match fields[1].trim() {
        "loc" => {
            let point = GeoPoint::new(parse_f64(fields[2])?, parse_f64(fields[3])?).ok()?;
            let acc = parse_f64(fields[4])?;
            let speed = match fields[5].trim() {
                "" => None,
                s => Some(parse_f64(s)?),
            };
            Payload::Location(LocationSample::new(point, acc, speed).ok()?)
        }
        "motion" => {
            let activity = Activity::parse(fields[6].trim())?;
            let confidence = parse_f64(fields[7])?;
            Payload::Motion(MotionSample::new(activity, confidence).ok()?)
        }
        _ => return None,
    };
    TraceRecord::new(ts, payload).ok()
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace, ParseError> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in data_lines(text, TRACE_HEADER)? {
        match parse_trace_line(line) {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(ParseError::NoRecords { skipped });
    }
    Ok(ParsedTrace {
        trace: TraceFile::from_records(records),
        skipped,
    })
}

pub fn parse_trace_bytes(bytes: &[u8]) -> Result<ParsedTrace, ParseError> {
    parse_trace(std::str::from_utf8(bytes).map_err(|_| ParseError::InvalidUtf8)?)
}

/// Writes a trace in canonical form, optionally preceded by `#` comment lines.
pub fn serialize_trace(trace: &TraceFile, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        match &r.payload {
            Payload::Location(l) => {
                let speed = l.speed_mps.map(|s| s.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},loc,{},{},{},{},,",
                    r.ts,
                    l.point.lat(),
                    l.point.lon(),
                    l.horizontal_accuracy_m,
                    speed
                );
            }
            Payload::Motion(m) => {
                let _ = writeln!(
                    out,
                    "{},motion,,,,,{},{}",
                    r.ts,
                    m.activity.as_str(),
                    m.confidence
                );
            }
        }
    }
    out
}

fn parse_log_line(line: &str) -> Option<InteractionEvent> {
    let (ts, tag) = line.split_once(',')?;
    let ts: i64 = ts.trim().parse().ok()?;
    InteractionEvent::new(ts, UiEvent::from_tag(tag.trim())?)
}

/// Parses a research log. Events come back sorted by timestamp (stable).
pub fn parse_interaction_log(text: &str) -> Result<ParsedLog, ParseError> {
    let mut events = Vec::new();
    let mut skipped = 0;
    for line in data_lines(text, LOG_HEADER)? {
        match parse_log_line(line) {
            Some(e) => events.push(e),
            None => skipped += 1,
        }
    }
    events.sort_by_key(|e| e.ts);
    Ok(ParsedLog { events, skipped })
}

pub fn parse_interaction_log_bytes(bytes: &[u8]) -> Result<ParsedLog, ParseError> {
    parse_interaction_log(std::str::from_utf8(bytes).map_err(|_| ParseError::InvalidUtf8)?)
}

pub fn serialize_interaction_log(events: &[InteractionEvent]) -> String {
    let mut out = String::with_capacity(16 + events.len() * 24);
    out.push_str(LOG_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{}", e.ts, e.event.tag());
    }
    out
}
