//! Scripted bot contacts.
//!
//! A bot answers messages addressed to it using the first rule whose trigger
//! matches. Replies and delays are a pure function of the script, the rng
//! seed and the incoming frame's seq.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::protocol::{FrameType, WireFrame};

/// Trigger value that matches every message.
pub const ANY_TRIGGER: &str = "any";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotRule {
    /// `"any"` or a case-insensitive substring of the incoming body.
    pub trigger: String,
    pub reply_bodies: Vec<String>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
}

impl BotRule {
    pub fn matches(&self, body: &str) -> bool {
        self.trigger.eq_ignore_ascii_case(ANY_TRIGGER)
            || body.to_lowercase().contains(&self.trigger.to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotScript {
    pub name: String,
    pub rules: Vec<BotRule>,
    #[serde(default)]
    pub rng_seed: u64,
}

/// A reply waiting for its due time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledReply {
    pub due_ms: u64,
    pub frame: WireFrame,
}

#[derive(Debug, thiserror::Error)]
pub enum BotScriptError {
    #[error("reading bot scripts: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing bot scripts: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bot {name:?}: rule {index} has no reply bodies")]
    EmptyRule { name: String, index: usize },
    #[error("bot {0:?} is defined twice")]
    Duplicate(String),
    #[error("bot with an empty name")]
    EmptyName,
}

impl BotScript {
    /// Replies to `incoming`, which must be a msg addressed to this bot.
    pub fn step(&self, incoming: &WireFrame, now_ms: u64) -> Vec<ScheduledReply> {
        if incoming.kind != FrameType::Msg || incoming.to != self.name {
            return Vec::new();
        }
        let Some(rule) = self.rules.iter().find(|r| r.matches(&incoming.body)) else {
            return Vec::new();
        };
        if rule.reply_bodies.is_empty() {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(incoming.seq);
        let body = &rule.reply_bodies[rng.gen_range(0..rule.reply_bodies.len())];
        let jitter = if rule.jitter_ms == 0 {
            0
        } else {
            rng.gen_range(0..=rule.jitter_ms)
        };
        vec![ScheduledReply {
            due_ms: now_ms + rule.delay_ms + jitter,
            frame: WireFrame::msg(self.name.clone(), incoming.from.clone(), body.clone()),
        }]
    }
}

/// Parses and validates a JSON array of scripts.
pub fn parse_scripts(json: &str) -> Result<Vec<BotScript>, BotScriptError> {
    let scripts: Vec<BotScript> = serde_json::from_str(json)?;
    validate(&scripts)?;
    Ok(scripts)
}

pub fn load_scripts(path: &Path) -> Result<Vec<BotScript>, BotScriptError> {
    parse_scripts(&std::fs::read_to_string(path)?)
}

pub fn validate(scripts: &[BotScript]) -> Result<(), BotScriptError> {
    let mut seen = std::collections::BTreeSet::new();
    for script in scripts {
        if script.name.trim().is_empty() {
            return Err(BotScriptError::EmptyName);
        }
        if !seen.insert(script.name.as_str()) {
            return Err(BotScriptError::Duplicate(script.name.clone()));
        }
        if let Some(index) = script.rules.iter().position(|r| r.reply_bodies.is_empty()) {
            return Err(BotScriptError::EmptyRule {
                name: script.name.clone(),
                index,
            });
        }
    }
    Ok(())
}
