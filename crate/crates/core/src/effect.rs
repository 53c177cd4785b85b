//! Outward-visible actions emitted by the session engine, and the JSONL
//! effect log they are recorded in.
//!
//! Each log line is `{"t": <ms>, "effect": <name>, "data": {...}}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;
use std::io::{self, BufRead, Write};

use crate::session::{Message, Notification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    EmptyDraft,
    NoNotification,
    UnknownContact,
    Hidden,
    NoFocusedContact,
    NotComposing,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::EmptyDraft => "empty_draft",
            ErrorCode::NoNotification => "no_notification",
            ErrorCode::UnknownContact => "unknown_contact",
            ErrorCode::Hidden => "hidden",
            ErrorCode::NoFocusedContact => "no_focused_contact",
            ErrorCode::NotComposing => "not_composing",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "empty_draft" => ErrorCode::EmptyDraft,
            "no_notification" => ErrorCode::NoNotification,
            "unknown_contact" => ErrorCode::UnknownContact,
            "hidden" => ErrorCode::Hidden,
            "no_focused_contact" => ErrorCode::NoFocusedContact,
            "not_composing" => ErrorCode::NotComposing,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    SendMessage(Message),
    Beep,
    ShowNotification(Notification),
    StartDictationFeedback,
    StopDictationFeedback,
    /// Text arrived through the virtual keyboard. Marks the start of a
    /// keyboard composition for entry-speed measurement.
    KeyboardInput { chars: usize },
    OpacityBoost { contact: String, until_ms: u64 },
    Error(ErrorCode),
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::SendMessage(_) => "send_message",
            Effect::Beep => "beep",
            Effect::ShowNotification(_) => "show_notification",
            Effect::StartDictationFeedback => "start_dictation_feedback",
            Effect::StopDictationFeedback => "stop_dictation_feedback",
            Effect::KeyboardInput { .. } => "keyboard_input",
            Effect::OpacityBoost { .. } => "opacity_boost",
            Effect::Error(_) => "error",
        }
    }

    fn data(&self) -> Value {
        match self {
            Effect::SendMessage(m) => json!(m),
            Effect::ShowNotification(n) => json!(n),
            Effect::KeyboardInput { chars } => json!({ "chars": chars }),
            Effect::OpacityBoost { contact, until_ms } => {
                json!({ "contact": contact, "until_ms": until_ms })
            }
            Effect::Error(code) => json!({ "code": code.as_str() }),
            Effect::Beep | Effect::StartDictationFeedback | Effect::StopDictationFeedback => {
                json!({})
            }
        }
    }

    fn from_parts(name: &str, data: Value) -> Result<Self, EffectLogError> {
        let bad = |why: &str| EffectLogError::Malformed(format!("{name}: {why}"));
        let field_u64 = |key: &str| data.get(key).and_then(Value::as_u64).ok_or_else(|| bad(key));
        Ok(match name {
            "send_message" => {
                Effect::SendMessage(serde_json::from_value(data).map_err(|e| bad(&e.to_string()))?)
            }
            "show_notification" => Effect::ShowNotification(
                serde_json::from_value(data).map_err(|e| bad(&e.to_string()))?,
            ),
            "beep" => Effect::Beep,
            "start_dictation_feedback" => Effect::StartDictationFeedback,
            "stop_dictation_feedback" => Effect::StopDictationFeedback,
            "keyboard_input" => Effect::KeyboardInput {
                chars: field_u64("chars")? as usize,
            },
            "opacity_boost" => Effect::OpacityBoost {
                contact: data
                    .get("contact")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("contact"))?
                    .to_string(),
                until_ms: field_u64("until_ms")?,
            },
            "error" => {
                let code = data.get("code").and_then(Value::as_str).ok_or_else(|| bad("code"))?;
                Effect::Error(ErrorCode::parse(code).ok_or_else(|| bad("unknown code"))?)
            }
            other => return Err(EffectLogError::Malformed(format!("unknown effect {other}"))),
        })
    }
}

/// One timestamped effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectRecord {
    pub t: u64,
    pub effect: Effect,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    t: u64,
    effect: String,
    #[serde(default)]
    data: Value,
}

impl Serialize for EffectRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawRecord {
            t: self.t,
            effect: self.effect.name().to_string(),
            data: self.effect.data(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EffectRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawRecord::deserialize(deserializer)?;
        let effect = Effect::from_parts(&raw.effect, raw.data).map_err(serde::de::Error::custom)?;
        Ok(EffectRecord { t: raw.t, effect })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EffectLogError {
    #[error("malformed effect record: {0}")]
    Malformed(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes records as JSONL.
pub fn write_effect_log<W: Write>(mut out: W, records: &[EffectRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn effect_log_to_string(records: &[EffectRecord]) -> String {
    let mut buf = Vec::new();
    write_effect_log(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Reads a JSONL effect log; blank lines are skipped.
pub fn read_effect_log<R: BufRead>(input: R) -> Result<Vec<EffectRecord>, EffectLogError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| EffectLogError::Json {
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_shape() {
        let rec = EffectRecord {
            t: 42,
            effect: Effect::OpacityBoost {
                contact: "Bob".into(),
                until_ms: 5042,
            },
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"t":42,"effect":"opacity_boost","data":{"contact":"Bob","until_ms":5042}}"#
        );
        let beep = serde_json::to_string(&EffectRecord {
            t: 1,
            effect: Effect::Beep,
        })
        .unwrap();
        assert_eq!(beep, r#"{"t":1,"effect":"beep","data":{}}"#);
    }

    #[test]
    fn log_round_trip() {
        let records = vec![
            EffectRecord {
                t: 1,
                effect: Effect::ShowNotification(Notification {
                    id: 1,
                    sender: "Bob".into(),
                    arrived_ms: 1,
                    preview: "hi".into(),
                }),
            },
            EffectRecord {
                t: 2,
                effect: Effect::SendMessage(Message {
                    id: "local-1".into(),
                    sender: "self".into(),
                    recipient: "Bob".into(),
                    body: "yo".into(),
                    ts_ms: 2,
                }),
            },
            EffectRecord {
                t: 3,
                effect: Effect::Error(ErrorCode::EmptyDraft),
            },
            EffectRecord {
                t: 4,
                effect: Effect::KeyboardInput { chars: 3 },
            },
        ];
        let text = effect_log_to_string(&records);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_effect_log(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn rejects_unknown_effect() {
        let err = read_effect_log(r#"{"t":1,"effect":"explode","data":{}}"#.as_bytes());
        assert!(err.is_err());
    }
}
