//! Append-only conversation log and startup recovery.
//!
//! Every accepted msg frame is written as one JSON line before it is acked
//! or forwarded. Recovery rebuilds the per-conversation histories and seq
//! counters from that file.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::protocol::{self, FrameType, WireFrame};

/// Unordered pair of participant names, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConvKey(pub String, pub String);

impl ConvKey {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            ConvKey(a.to_string(), b.to_string())
        } else {
            ConvKey(b.to_string(), a.to_string())
        }
    }

    pub fn of(frame: &WireFrame) -> Self {
        Self::new(&frame.from, &frame.to)
    }

    /// Server-assigned message id for `seq` in this conversation.
    pub fn message_id(&self, seq: u64) -> String {
        format!("{}~{}-{}", self.0, self.1, seq)
    }
}

pub type Histories = BTreeMap<ConvKey, Vec<WireFrame>>;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub histories: Histories,
    /// Seq the next message of each conversation will receive.
    pub next_seq: BTreeMap<ConvKey, u64>,
    /// Count of discarded half-written trailing lines.
    pub warnings: usize,
}

impl Recovered {
    pub fn message_count(&self) -> usize {
        self.histories.values().map(Vec::len).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("conversation log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("conversation log {path}, line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl LogError {
    fn io(path: &Path, source: io::Error) -> Self {
        LogError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Offending 1-based line for corruption errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Corrupt { line, .. } => Some(*line),
            LogError::Io { .. } => None,
        }
    }
}

/// Rebuilds histories from `path`. A missing file is an empty log. An
/// unparseable final line without a terminating newline is discarded and the
/// file is cut back to the last complete line; any other bad line fails with
/// its line number.
pub fn recover(path: &Path) -> Result<Recovered, LogError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Recovered::default()),
        Err(e) => return Err(LogError::io(path, e)),
    };
    let mut out = Recovered::default();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut repair: Option<Repair> = None;
    while offset < bytes.len() {
        line_no += 1;
        let (line, terminated, next) = match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(i) => (&bytes[offset..offset + i], true, offset + i + 1),
            None => (&bytes[offset..], false, bytes.len()),
        };
        let corrupt = |reason: String| LogError::Corrupt {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let parsed = std::str::from_utf8(line)
            .map_err(|_| "not UTF-8".to_string())
            .and_then(|s| protocol::decode(s).map_err(|c| c.to_string()));
        let frame = match parsed {
            Ok(f) => f,
            Err(_) if !terminated => {
                out.warnings += 1;
                repair = Some(Repair::Truncate(offset));
                break;
            }
            Err(reason) => return Err(corrupt(reason)),
        };
        if frame.kind != FrameType::Msg {
            return Err(corrupt(format!("unexpected frame type {:?}", frame.kind)));
        }
        let key = ConvKey::of(&frame);
        let expected = out.next_seq.get(&key).copied().unwrap_or(1);
        if frame.seq != expected {
            return Err(corrupt(format!("seq {} where {} was expected", frame.seq, expected)));
        }
        out.next_seq.insert(key.clone(), expected + 1);
        out.histories.entry(key).or_default().push(frame);
        if !terminated {
            repair = Some(Repair::Terminate);
        }
        offset = next;
    }
    match repair {
        Some(Repair::Truncate(len)) => {
            let file = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| LogError::io(path, e))?;
            file.set_len(len as u64).map_err(|e| LogError::io(path, e))?;
        }
        Some(Repair::Terminate) => {
            let mut file = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| LogError::io(path, e))?;
            file.write_all(b"\n").map_err(|e| LogError::io(path, e))?;
        }
        None => {}
    }
    Ok(out)
}

enum Repair {
    Truncate(usize),
    Terminate,
}

/// Open handle for appending.
#[derive(Debug)]
pub struct ConversationLog {
    path: PathBuf,
    file: File,
}

impl ConversationLog {
    /// Recovers `path` and opens it for appending.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Recovered), LogError> {
        let path = path.into();
        let recovered = recover(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| LogError::io(&path, e))?;
        Ok((Self { path, file }, recovered))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, frame: &WireFrame) -> io::Result<()> {
        self.file.write_all(frame.encode().as_bytes())?;
        self.file.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logged(from: &str, to: &str, seq: u64) -> WireFrame {
        let key = ConvKey::new(from, to);
        WireFrame {
            id: key.message_id(seq),
            seq,
            ts: 1_000 + seq,
            ..WireFrame::msg(from, to, format!("m{seq}"))
        }
    }

    fn write_all(path: &Path, frames: &[WireFrame]) {
        let text: String = frames.iter().map(WireFrame::encode).collect();
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn key_is_unordered() {
        assert_eq!(ConvKey::new("self", "Peter"), ConvKey::new("Peter", "self"));
        assert_eq!(ConvKey::new("self", "Peter").message_id(3), "Peter~self-3");
    }

    #[test]
    fn empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let missing = recover(&dir.path().join("none.jsonl")).unwrap();
        assert_eq!(missing, Recovered::default());
        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert_eq!(recover(&empty).unwrap(), Recovered::default());
    }

    #[test]
    fn three_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let frames = vec![logged("self", "Peter", 1), logged("Peter", "self", 2), logged("self", "Peter", 3)];
        write_all(&path, &frames);
        let rec = recover(&path).unwrap();
        let key = ConvKey::new("self", "Peter");
        assert_eq!(rec.histories[&key], frames);
        assert_eq!(rec.next_seq[&key], 4);
        assert_eq!(rec.warnings, 0);
        assert_eq!(recover(&path).unwrap(), rec);
    }

    #[test]
    fn half_written_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let frames = vec![logged("a", "b", 1), logged("a", "b", 2), logged("b", "a", 3)];
        write_all(&path, &frames);
        let full = std::fs::read(&path).unwrap();
        let cut = full.len() - 10;
        std::fs::write(&path, &full[..cut]).unwrap();

        let rec = recover(&path).unwrap();
        assert_eq!(rec.message_count(), 2);
        assert_eq!(rec.warnings, 1);
        // the file was repaired, so a second pass is clean and identical
        let again = recover(&path).unwrap();
        assert_eq!(again.histories, rec.histories);
        assert_eq!(again.warnings, 0);
        assert!(std::fs::read(&path).unwrap().ends_with(b"\n"));
    }

    #[test]
    fn complete_but_unterminated_tail_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut text = logged("a", "b", 1).encode();
        text.push_str(logged("a", "b", 2).encode().trim_end());
        std::fs::write(&path, text).unwrap();
        let rec = recover(&path).unwrap();
        assert_eq!((rec.message_count(), rec.warnings), (2, 0));
        let (mut log, _) = ConversationLog::open(&path).unwrap();
        log.append(&logged("a", "b", 3)).unwrap();
        assert_eq!(recover(&path).unwrap().message_count(), 3);
    }

    #[test]
    fn corruption_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut text = logged("a", "b", 1).encode();
        text.push_str("garbage\n");
        text.push_str(&logged("a", "b", 2).encode());
        std::fs::write(&path, &text).unwrap();
        assert_eq!(recover(&path).unwrap_err().line(), Some(2));

        write_all(&path, &[logged("a", "b", 1), logged("a", "b", 3)]);
        let err = recover(&path).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("seq 3"));
    }
}
