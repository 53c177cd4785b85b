//! Wire protocol: one UTF-8 JSON object per line.
//!
//! ```text
//! {"v":1,"type":"msg","id":"","from":"self","to":"Peter","body":"ok see you","ts":0,"seq":0}
//! ```
//!
//! `v` and `type` are mandatory; every other field defaults when absent and
//! unknown fields are ignored.

use bytes::BytesMut;
use serde::{Deserialize, Serialize};
use std::fmt;
use tokio_util::codec::{Decoder, LinesCodec, LinesCodecError};

pub const PROTOCOL_VERSION: u32 = 1;

/// Longest line a server accepts, excluding the terminator.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Hello,
    HelloAck,
    Msg,
    Ack,
    Notify,
    HistoryReq,
    History,
    Err,
    /// UI only: a raw input event for the server-side session.
    Event,
    /// UI only: render model and effects after an event.
    Render,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WireFrame {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: FrameType,
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub from: String,
    #[serde(default)]
    pub to: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub ts: u64,
    #[serde(default)]
    pub seq: u64,
}

impl WireFrame {
    pub fn new(kind: FrameType) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind,
            id: String::new(),
            from: String::new(),
            to: String::new(),
            body: String::new(),
            ts: 0,
            seq: 0,
        }
    }

    pub fn hello(name: impl Into<String>) -> Self {
        Self {
            from: name.into(),
            ..Self::new(FrameType::Hello)
        }
    }

    pub fn msg(from: impl Into<String>, to: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            body: body.into(),
            ..Self::new(FrameType::Msg)
        }
    }

    pub fn history_req(from: impl Into<String>, peer: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: peer.into(),
            ..Self::new(FrameType::HistoryReq)
        }
    }

    pub fn error(code: ErrCode, to: impl Into<String>, id: impl Into<String>) -> Self {
        Self {
            to: to.into(),
            id: id.into(),
            body: code.as_str().to_string(),
            ..Self::new(FrameType::Err)
        }
    }

    /// Serializes to a single line including the trailing `\n`.
    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frame fields always serialize");
        line.push('\n');
        line
    }
}

/// Error codes carried in the body of `err` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrCode {
    BadFrame,
    BadVersion,
    FrameTooLarge,
    UnknownRecipient,
    NameTaken,
    NotRegistered,
    BadEvent,
    Internal,
}

impl ErrCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrCode::BadFrame => "bad_frame",
            ErrCode::BadVersion => "bad_version",
            ErrCode::FrameTooLarge => "frame_too_large",
            ErrCode::UnknownRecipient => "unknown_recipient",
            ErrCode::NameTaken => "name_taken",
            ErrCode::NotRegistered => "not_registered",
            ErrCode::BadEvent => "bad_event",
            ErrCode::Internal => "internal",
        }
    }
}

impl fmt::Display for ErrCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decodes one line (with or without its terminator).
pub fn decode(line: &str) -> Result<WireFrame, ErrCode> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.len() > MAX_FRAME_BYTES {
        return Err(ErrCode::FrameTooLarge);
    }
    decode_unbounded(line)
}

/// [`decode`] without the size limit, for clients reading server output.
pub fn decode_unbounded(line: &str) -> Result<WireFrame, ErrCode> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let value: serde_json::Value = serde_json::from_str(line).map_err(|_| ErrCode::BadFrame)?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(_) => return Err(ErrCode::BadVersion),
        None => return Err(ErrCode::BadFrame),
    }
    serde_json::from_value(value).map_err(|_| ErrCode::BadFrame)
}

/// Splits a byte stream into lines, bounding line length. Errors never end
/// the stream: an oversized line is discarded up to its newline and a line
/// that is not UTF-8 is dropped whole.
#[derive(Debug)]
pub struct LineFramer {
    buf: BytesMut,
    codec: LinesCodec,
}

impl LineFramer {
    pub fn new(max_len: usize) -> Self {
        Self {
            buf: BytesMut::with_capacity(8 * 1024),
            codec: LinesCodec::new_with_max_length(max_len),
        }
    }

    /// The read buffer to fill from the transport.
    pub fn buffer(&mut self) -> &mut BytesMut {
        &mut self.buf
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete line, if any.
    pub fn next_line(&mut self) -> Option<Result<String, ErrCode>> {
        match self.codec.decode(&mut self.buf) {
            Ok(Some(line)) => Some(Ok(line)),
            Ok(None) => None,
            Err(LinesCodecError::MaxLineLengthExceeded) => Some(Err(ErrCode::FrameTooLarge)),
            Err(LinesCodecError::Io(_)) => Some(Err(ErrCode::BadFrame)),
        }
    }

    /// Trailing unterminated data at end of stream, as one last line.
    pub fn finish(&mut self) -> Option<Result<String, ErrCode>> {
        match self.codec.decode_eof(&mut self.buf) {
            Ok(Some(line)) if line.is_empty() => None,
            Ok(Some(line)) => Some(Ok(line)),
            Ok(None) => None,
            Err(LinesCodecError::MaxLineLengthExceeded) => Some(Err(ErrCode::FrameTooLarge)),
            Err(LinesCodecError::Io(_)) => Some(Err(ErrCode::BadFrame)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_one_line() {
        let f = WireFrame::msg("self", "Peter", "line one\nline two");
        let line = f.encode();
        assert_eq!(line.matches('\n').count(), 1);
        assert!(line.ends_with('\n'));
        assert_eq!(decode(&line).unwrap(), f);
    }

    #[test]
    fn defaults_and_unknown_fields() {
        let f = decode(r#"{"v":1,"type":"hello","from":"self","colour":"red"}"#).unwrap();
        assert_eq!(f, WireFrame::hello("self"));
    }

    #[test]
    fn rejects_bad_frames() {
        assert_eq!(decode("not json"), Err(ErrCode::BadFrame));
        assert_eq!(decode(r#"{"type":"hello"}"#), Err(ErrCode::BadFrame));
        assert_eq!(decode(r#"{"v":2,"type":"hello"}"#), Err(ErrCode::BadVersion));
        assert_eq!(decode(r#"{"v":1,"type":"warp"}"#), Err(ErrCode::BadFrame));
        assert_eq!(decode(r#"{"v":1,"type":"msg","seq":-1}"#), Err(ErrCode::BadFrame));
        let big = format!(r#"{{"v":1,"type":"msg","body":"{}"}}"#, "x".repeat(MAX_FRAME_BYTES));
        assert_eq!(decode(&big), Err(ErrCode::FrameTooLarge));
    }

    #[test]
    fn framer_survives_errors() {
        let mut framer = LineFramer::new(16);
        framer.push(b"short\n");
        framer.push(&[b'x'; 40]);
        framer.push(b"\nok\r\n\xff\xfe\nlast");
        assert_eq!(framer.next_line(), Some(Ok("short".into())));
        assert_eq!(framer.next_line(), Some(Err(ErrCode::FrameTooLarge)));
        assert_eq!(framer.next_line(), Some(Ok("ok".into())));
        assert_eq!(framer.next_line(), Some(Err(ErrCode::BadFrame)));
        assert_eq!(framer.next_line(), None);
        assert_eq!(framer.finish(), Some(Ok("last".into())));
        assert_eq!(framer.finish(), None);
    }

    fn frame_type() -> impl Strategy<Value = FrameType> {
        prop::sample::select(vec![
            FrameType::Hello,
            FrameType::HelloAck,
            FrameType::Msg,
            FrameType::Ack,
            FrameType::Notify,
            FrameType::HistoryReq,
            FrameType::History,
            FrameType::Err,
            FrameType::Event,
            FrameType::Render,
        ])
    }

    prop_compose! {
        fn frame()(kind in frame_type(), id in ".{0,8}", from in ".{0,8}", to in ".{0,8}",
                   body in any::<String>(), ts in any::<u64>(), seq in any::<u64>()) -> WireFrame {
            WireFrame { v: PROTOCOL_VERSION, kind, id, from, to, body, ts, seq }
        }
    }

    proptest! {
        #[test]
        fn round_trip(f in frame()) {
            let line = f.encode();
            prop_assert_eq!(line.find('\n'), Some(line.len() - 1));
            prop_assert_eq!(decode(&line).unwrap(), f);
        }
    }
}
