//! Text-entry and responsiveness measures computed from effect logs.
//!
//! - response time: notification shown to first later send to that sender
//! - entry speed: words per minute, one word being five characters
//! - error rate: minimum string distance normalized by the longer string

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::effect::{Effect, EffectRecord};

/// An exact non-negative rational, serialized with its float value for
/// readability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(pub Ratio<u64>);

impl Rational {
    pub fn new(numer: u64, denom: u64) -> Self {
        Self(Ratio::new(numer, denom))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.to_f64())
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: u64,
    den: u64,
    #[serde(default, skip_deserializing)]
    value: f64,
}

impl Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RationalRepr {
            num: self.numer(),
            den: self.denom(),
            value: self.to_f64(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RationalRepr::deserialize(deserializer)?;
        if repr.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Rational::new(repr.num, repr.den))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference text is empty")]
    EmptyReference,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTimes {
    /// In order of the answering sends.
    pub matched_ms: Vec<u64>,
    pub unanswered: usize,
}

/// Pairs each send with the earliest still-pending notification from its
/// recipient. Unmatched notifications count as unanswered.
pub fn response_times(log: &[EffectRecord]) -> ResponseTimes {
    let mut pending: BTreeMap<&str, VecDeque<u64>> = BTreeMap::new();
    let mut out = ResponseTimes::default();
    for rec in log {
        match &rec.effect {
            Effect::ShowNotification(n) => {
                pending.entry(n.sender.as_str()).or_default().push_back(rec.t)
            }
            Effect::SendMessage(m) => {
                if let Some(shown) = pending.get_mut(m.recipient.as_str()).and_then(VecDeque::pop_front)
                {
                    out.matched_ms.push(rec.t - shown);
                }
            }
            _ => {}
        }
    }
    out.unanswered = pending.values().map(VecDeque::len).sum();
    out
}

/// Characters sent and the time spent composing them. A composition starts
/// at the first dictation start or keyboard input after the previous send
/// and ends at the next send; sends without an observed start are skipped.
pub fn composition_totals(log: &[EffectRecord]) -> (u64, u64) {
    let mut start: Option<u64> = None;
    let (mut chars, mut millis) = (0u64, 0u64);
    for rec in log {
        match &rec.effect {
            Effect::StartDictationFeedback | Effect::KeyboardInput { .. } => {
                start.get_or_insert(rec.t);
            }
            Effect::SendMessage(m) => {
                if let Some(begin) = start.take() {
                    chars += m.body.chars().count() as u64;
                    millis += rec.t - begin;
                }
            }
            _ => {}
        }
    }
    (chars, millis)
}

/// Words per minute over all composed messages, or `None` when nothing was
/// composed or composition took zero time.
pub fn entry_speed(log: &[EffectRecord]) -> Option<Rational> {
    let (chars, millis) = composition_totals(log);
    if chars == 0 || millis == 0 {
        return None;
    }
    // (chars / 5) / (millis / 60_000)
    Some(Rational::new(chars * 12_000, millis))
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn error_rate(produced: &str, reference: &str) -> Result<Rational, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let longest = produced.chars().count().max(reference.chars().count());
    Ok(Rational::new(edit_distance(produced, reference) as u64, longest as u64))
}

/// Error rate pooled over message pairs: total distance over total length of
/// the longer string in each pair. Missing produced messages count as empty.
pub fn pooled_error_rate<S: AsRef<str>>(produced: &[S], references: &[S]) -> Option<Rational> {
    let (mut dist, mut len) = (0u64, 0u64);
    for (i, reference) in references.iter().enumerate() {
        let reference = reference.as_ref();
        if reference.is_empty() {
            continue;
        }
        let produced = produced.get(i).map(AsRef::as_ref).unwrap_or("");
        dist += edit_distance(produced, reference) as u64;
        len += produced.chars().count().max(reference.chars().count()) as u64;
    }
    (len > 0).then(|| Rational::new(dist, len))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub response_times_ms: Vec<u64>,
    pub unanswered: usize,
    pub entry_speed_wpm: Option<Rational>,
    pub error_rate: Option<Rational>,
    pub messages_sent: usize,
}

impl MetricsReport {
    /// Builds the report for an effect log, comparing sent bodies in order
    /// against `references` when any are given.
    pub fn from_log(log: &[EffectRecord], references: &[String]) -> Self {
        let sent: Vec<String> = log
            .iter()
            .filter_map(|r| match &r.effect {
                Effect::SendMessage(m) => Some(m.body.clone()),
                _ => None,
            })
            .collect();
        let rt = response_times(log);
        Self {
            response_times_ms: rt.matched_ms,
            unanswered: rt.unanswered,
            entry_speed_wpm: entry_speed(log),
            error_rate: if references.is_empty() {
                None
            } else {
                pooled_error_rate(&sent, references)
            },
            messages_sent: sent.len(),
        }
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let opt = |r: &Option<Rational>| r.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        let times = if self.response_times_ms.is_empty() {
            "-".to_string()
        } else {
            self.response_times_ms
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "{:<22}{}\n{:<22}{}\n{:<22}{}\n{:<22}{}\n{:<22}{}\n",
            "messages sent",
            self.messages_sent,
            "response times (ms)",
            times,
            "unanswered",
            self.unanswered,
            "entry speed (wpm)",
            opt(&self.entry_speed_wpm),
            "error rate",
            opt(&self.error_rate),
        )
    }
}
