//! Recorded input traces.
//!
//! A trace file is JSONL: a header object on the first line, then one event
//! per line, e.g. `{"t":1000,"kind":"utterance","text":"show chat"}`.
//! Unknown fields are ignored; blank lines are skipped.

use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

use crate::session::{InputEvent, SessionConfig};

fn default_silence_gap() -> u64 {
    SessionConfig::default().silence_gap_ms
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub session_id: String,
    #[serde(default = "default_silence_gap")]
    pub silence_gap_ms: u64,
    #[serde(default)]
    pub seed: u64,
    /// Contacts known before the first event, in display order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contacts: Vec<String>,
    /// Intended texts of the messages the trace sends, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<String>,
}

impl TraceHeader {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            silence_gap_ms: default_silence_gap(),
            seed: 0,
            contacts: Vec::new(),
            reference: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(rename = "t")]
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: InputEvent,
}

impl TraceEvent {
    pub fn new(t_ms: u64, event: InputEvent) -> Self {
        Self { t_ms, event }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputTrace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace has no header line")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("event {index} at {t_ms} ms precedes the previous event at {previous_ms} ms")]
    OutOfOrder {
        index: usize,
        t_ms: u64,
        previous_ms: u64,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl InputTrace {
    pub fn new(header: TraceHeader, events: Vec<TraceEvent>) -> Self {
        Self { header, events }
    }

    /// Checks that timestamps never decrease; equal timestamps keep file
    /// order.
    pub fn check_order(&self) -> Result<(), TraceError> {
        for (index, pair) in self.events.windows(2).enumerate() {
            if pair[1].t_ms < pair[0].t_ms {
                return Err(TraceError::OutOfOrder {
                    index: index + 1,
                    t_ms: pair[1].t_ms,
                    previous_ms: pair[0].t_ms,
                });
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header = None;
        let mut events = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let json = |source| TraceError::Json {
                line: idx + 1,
                source,
            };
            if header.is_none() {
                header = Some(serde_json::from_str(&line).map_err(json)?);
            } else {
                events.push(serde_json::from_str(&line).map_err(json)?);
            }
        }
        let header = header.ok_or(TraceError::MissingHeader)?;
        Ok(Self { header, events })
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        Self::read(text.as_bytes())
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}
