//! The per-headset session state machine.
//!
//! A [`Session`] consumes commands, incoming messages and clock ticks in a
//! single total order and produces [`Effect`]s. Every transition is a
//! deterministic function of the current state, the event and its
//! timestamp; time never moves backwards.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::effect::{Effect, EffectRecord, ErrorCode};
use crate::grammar::{
    map_gesture_event, parse_utterance, Command, GestureEvent, InterpreterMode, RingButton,
    RingContext, RingEvent, RingMapper, RingPress, Utterance, DEFAULT_HOLD_THRESHOLD_MS,
};
use crate::render::{render, RenderModel};

/// Name used for the headset wearer in message sender/recipient fields.
pub const SELF_NAME: &str = "self";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub silence_gap_ms: u64,
    pub boost_duration_ms: u64,
    pub max_notifications: usize,
    pub hold_threshold_ms: u64,
    pub preview_chars: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            silence_gap_ms: 2000,
            boost_duration_ms: 5000,
            max_notifications: 3,
            hold_threshold_ms: DEFAULT_HOLD_THRESHOLD_MS,
            preview_chars: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub name: String,
    pub last_activity_ms: u64,
    pub unread_count: u32,
}

impl Contact {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            last_activity_ms: 0,
            unread_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub sender: String,
    pub recipient: String,
    pub body: String,
    pub ts_ms: u64,
}

impl Message {
    /// The other party of the conversation, seen from the wearer.
    pub fn peer(&self) -> &str {
        if self.sender == SELF_NAME {
            &self.recipient
        } else {
            &self.sender
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Notification {
    pub id: u64,
    pub sender: String,
    pub arrived_ms: u64,
    pub preview: String,
}

/// The virtual button the ring's right/center buttons operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFocus {
    #[default]
    Voice,
    Keyboard,
    Send,
}

impl InputFocus {
    pub fn next(self) -> Self {
        match self {
            InputFocus::Voice => InputFocus::Keyboard,
            InputFocus::Keyboard => InputFocus::Send,
            InputFocus::Send => InputFocus::Voice,
        }
    }
}

/// Complete UI and interaction state of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionState {
    pub visible: bool,
    pub focused_contact: Option<String>,
    pub scroll_offset: usize,
    pub input_focus: InputFocus,
    pub dictating: bool,
    pub last_speech_ms: Option<u64>,
    pub keyboard_open: bool,
    pub draft: String,
    /// Most recent activity first.
    pub contacts: Vec<Contact>,
    pub history: BTreeMap<String, Vec<Message>>,
    /// Newest first.
    pub notifications: Vec<Notification>,
    pub opacity_boost: BTreeMap<String, u64>,
    pub next_notification_id: u64,
    pub sent_count: u64,
}

impl SessionState {
    pub fn with_contacts<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = Self::default();
        for name in names {
            let name = name.into();
            if state.contact(&name).is_none() {
                state.contacts.push(Contact::new(name));
            }
        }
        state
    }

    pub fn contact(&self, name: &str) -> Option<&Contact> {
        self.contacts.iter().find(|c| c.name == name)
    }

    fn contact_mut(&mut self, name: &str) -> Option<&mut Contact> {
        self.contacts.iter_mut().find(|c| c.name == name)
    }

    pub fn contact_names(&self) -> Vec<&str> {
        self.contacts.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn mode(&self) -> InterpreterMode {
        if self.dictating {
            InterpreterMode::Dictation
        } else {
            InterpreterMode::Command
        }
    }

    /// Moves a contact to the front of the recency ordering, adding it if
    /// unknown.
    fn touch_contact(&mut self, name: &str, now_ms: u64) {
        let idx = match self.contacts.iter().position(|c| c.name == name) {
            Some(idx) => idx,
            None => {
                self.contacts.push(Contact::new(name));
                self.contacts.len() - 1
            }
        };
        let mut contact = self.contacts.remove(idx);
        contact.last_activity_ms = now_ms;
        self.contacts.insert(0, contact);
    }

    fn open_chat(&mut self, name: &str) {
        self.focused_contact = Some(name.to_string());
        if let Some(c) = self.contact_mut(name) {
            c.unread_count = 0;
        }
        self.notifications.retain(|n| n.sender != name);
    }

    fn stop_dictation(&mut self, effects: &mut Vec<Effect>) {
        if self.dictating {
            self.dictating = false;
            effects.push(Effect::StopDictationFeedback);
        }
    }

    fn dictation_deadline(&self, gap_ms: u64) -> Option<u64> {
        if !self.dictating {
            return None;
        }
        self.last_speech_ms.map(|t| t.saturating_add(gap_ms))
    }
}

/// A raw event reaching the session, in the same shape traces store it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputEvent {
    Utterance {
        text: String,
    },
    Ring {
        button: RingButton,
        /// Absent for a click.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hold_ms: Option<u64>,
    },
    Gesture {
        gesture: GestureEvent,
    },
    KeyboardText {
        text: String,
    },
    Incoming {
        from: String,
        body: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
    Tick,
}

impl InputEvent {
    pub fn ring_event(&self) -> Option<RingEvent> {
        match self {
            InputEvent::Ring { button, hold_ms } => Some(RingEvent {
                button: *button,
                press: match hold_ms {
                    Some(duration_ms) => RingPress::Hold {
                        duration_ms: *duration_ms,
                    },
                    None => RingPress::Click,
                },
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("clock moved backwards: event at {now_ms} ms after {last_ms} ms")]
    ClockRegression { last_ms: u64, now_ms: u64 },
}

/// One session: configuration, state, and the last observed time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    config: SessionConfig,
    state: SessionState,
    clock_ms: u64,
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        Self::from_state(config, SessionState::default())
    }

    pub fn with_contacts<I, S>(config: SessionConfig, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_state(config, SessionState::with_contacts(names))
    }

    pub fn from_state(config: SessionConfig, state: SessionState) -> Self {
        Self {
            config,
            state,
            clock_ms: 0,
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn render(&self) -> RenderModel {
        render(&self.state)
    }

    fn observe(&mut self, now_ms: u64) -> Result<(), SessionError> {
        if now_ms < self.clock_ms {
            return Err(SessionError::ClockRegression {
                last_ms: self.clock_ms,
                now_ms,
            });
        }
        self.clock_ms = now_ms;
        Ok(())
    }

    /// Applies one command. Failing commands leave the state untouched and
    /// report a single `Effect::Error`. Shortcuts are applied atomically:
    /// if any step fails, none of them take effect.
    pub fn handle_command(
        &mut self,
        command: &Command,
        now_ms: u64,
    ) -> Result<Vec<Effect>, SessionError> {
        self.observe(now_ms)?;
        let result = if command.is_shortcut() {
            let mut scratch = self.state.clone();
            let mut effects = Vec::new();
            let outcome = command.expand().iter().try_for_each(|step| {
                apply(&mut scratch, step, now_ms).map(|fx| effects.extend(fx))
            });
            outcome.map(|()| {
                self.state = scratch;
                effects
            })
        } else {
            apply(&mut self.state, command, now_ms)
        };
        Ok(result.unwrap_or_else(|code| vec![Effect::Error(code)]))
    }

    pub fn handle_incoming(
        &mut self,
        message: Message,
        now_ms: u64,
    ) -> Result<Vec<Effect>, SessionError> {
        self.observe(now_ms)?;
        Ok(receive(&mut self.state, &self.config, message, now_ms))
    }

    /// Advances time: ends dictation after the silence gap and drops
    /// expired opacity boosts.
    pub fn tick(&mut self, now_ms: u64) -> Result<Vec<Effect>, SessionError> {
        self.observe(now_ms)?;
        let mut effects = Vec::new();
        if let Some(deadline) = self.state.dictation_deadline(self.config.silence_gap_ms) {
            if now_ms >= deadline {
                self.state.stop_dictation(&mut effects);
            }
        }
        self.state.opacity_boost.retain(|_, until| *until > now_ms);
        Ok(effects)
    }

    /// Earliest time at which a tick would change the state.
    pub fn next_deadline(&self) -> Option<u64> {
        let dictation = self.state.dictation_deadline(self.config.silence_gap_ms);
        let boost = self.state.opacity_boost.values().copied().min();
        match (dictation, boost) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Fires every deadline up to and including `now_ms`, each at its exact
    /// time.
    pub fn advance_to(&mut self, now_ms: u64) -> Result<Vec<EffectRecord>, SessionError> {
        let mut records = Vec::new();
        while let Some(deadline) = self.next_deadline() {
            if deadline > now_ms {
                break;
            }
            let at = deadline.max(self.clock_ms);
            for effect in self.tick(at)? {
                records.push(EffectRecord { t: at, effect });
            }
        }
        Ok(records)
    }

    /// Interprets an utterance under the current mode and applies it.
    pub fn handle_utterance(
        &mut self,
        utterance: &Utterance,
    ) -> Result<(Command, Vec<Effect>), SessionError> {
        let command = parse_utterance(
            utterance,
            self.state.mode(),
            &self.state.contact_names(),
        );
        let effects = self.handle_command(&command, utterance.at_ms)?;
        Ok((command, effects))
    }

    /// Interprets any raw input event and applies it.
    pub fn handle_event(
        &mut self,
        event: &InputEvent,
        now_ms: u64,
    ) -> Result<Vec<Effect>, SessionError> {
        let command = match event {
            InputEvent::Utterance { text } => {
                return self
                    .handle_utterance(&Utterance::new(text.clone(), now_ms))
                    .map(|(_, fx)| fx)
            }
            InputEvent::Ring { .. } => {
                let ring = event.ring_event().expect("ring variant");
                RingMapper::new(self.config.hold_threshold_ms).map(
                    ring,
                    RingContext {
                        visible: self.state.visible,
                        keyboard_open: self.state.keyboard_open,
                    },
                )
            }
            InputEvent::Gesture { gesture } => map_gesture_event(gesture, self.state.keyboard_open),
            InputEvent::KeyboardText { text } => Command::AppendTranscript(text.clone()),
            InputEvent::Incoming { from, body, id } => {
                let message = Message {
                    id: id.clone().unwrap_or_else(|| format!("in-{now_ms}")),
                    sender: from.clone(),
                    recipient: SELF_NAME.to_string(),
                    body: body.clone(),
                    ts_ms: now_ms,
                };
                return self.handle_incoming(message, now_ms);
            }
            InputEvent::Tick => return self.tick(now_ms),
        };
        self.handle_command(&command, now_ms)
    }
}

fn apply(
    state: &mut SessionState,
    command: &Command,
    now_ms: u64,
) -> Result<Vec<Effect>, ErrorCode> {
    let mut effects = Vec::new();
    match command {
        Command::NoCommand => return Ok(effects),
        Command::RevealInterface => {
            state.visible = true;
            return Ok(effects);
        }
        _ if !state.visible => return Err(ErrorCode::Hidden),
        _ => {}
    }

    match command {
        Command::HideInterface => {
            state.stop_dictation(&mut effects);
            state.keyboard_open = false;
            state.visible = false;
        }
        Command::OpenNotification(id) => {
            let idx = match id {
                None if !state.notifications.is_empty() => 0,
                None => return Err(ErrorCode::NoNotification),
                Some(id) => state
                    .notifications
                    .iter()
                    .position(|n| n.id == *id)
                    .ok_or(ErrorCode::NoNotification)?,
            };
            let sender = state.notifications.remove(idx).sender;
            state.open_chat(&sender);
        }
        Command::SelectContact(name) => {
            if state.contact(name).is_none() {
                return Err(ErrorCode::UnknownContact);
            }
            state.open_chat(name);
        }
        Command::StartDictation => {
            if state.focused_contact.is_none() {
                return Err(ErrorCode::NoFocusedContact);
            }
            state.keyboard_open = false;
            state.input_focus = InputFocus::Voice;
            state.last_speech_ms = Some(now_ms);
            if !state.dictating {
                state.dictating = true;
                effects.push(Effect::StartDictationFeedback);
            }
        }
        Command::AppendTranscript(text) => {
            if !state.dictating && !state.keyboard_open {
                return Err(ErrorCode::NotComposing);
            }
            let text = text.trim();
            if state.dictating {
                state.last_speech_ms = Some(now_ms);
            }
            if !text.is_empty() {
                if !state.draft.is_empty() {
                    state.draft.push(' ');
                }
                state.draft.push_str(text);
                if !state.dictating {
                    effects.push(Effect::KeyboardInput {
                        chars: text.chars().count(),
                    });
                }
            }
        }
        Command::Send => {
            if state.draft.trim().is_empty() {
                return Err(ErrorCode::EmptyDraft);
            }
            let peer = state
                .focused_contact
                .clone()
                .ok_or(ErrorCode::NoFocusedContact)?;
            state.stop_dictation(&mut effects);
            state.sent_count += 1;
            let message = Message {
                id: format!("local-{}", state.sent_count),
                sender: SELF_NAME.to_string(),
                recipient: peer.clone(),
                body: std::mem::take(&mut state.draft),
                ts_ms: now_ms,
            };
            state.history.entry(peer.clone()).or_default().push(message.clone());
            state.touch_contact(&peer, now_ms);
            effects.push(Effect::SendMessage(message));
        }
        Command::OpenKeyboard => {
            state.stop_dictation(&mut effects);
            state.keyboard_open = true;
            state.input_focus = InputFocus::Keyboard;
        }
        Command::CloseKeyboard => state.keyboard_open = false,
        Command::ScrollToTop => state.scroll_offset = 0,
        Command::ScrollUp => state.scroll_offset = state.scroll_offset.saturating_sub(1),
        Command::ScrollDown => {
            if state.scroll_offset + 1 < state.contacts.len() {
                state.scroll_offset += 1;
            }
        }
        Command::FocusNext => state.input_focus = state.input_focus.next(),
        Command::ActivateFocused => {
            let target = match state.input_focus {
                InputFocus::Voice => Command::StartDictation,
                InputFocus::Keyboard => Command::OpenKeyboard,
                InputFocus::Send => Command::Send,
            };
            return apply(state, &target, now_ms);
        }
        Command::Reply | Command::TextTo(_) => {
            for step in command.expand() {
                effects.extend(apply(state, &step, now_ms)?);
            }
        }
        Command::NoCommand | Command::RevealInterface => unreachable!("handled above"),
    }
    Ok(effects)
}

fn receive(
    state: &mut SessionState,
    config: &SessionConfig,
    message: Message,
    now_ms: u64,
) -> Vec<Effect> {
    let mut effects = Vec::new();
    let peer = message.peer().to_string();
    let from_self = message.sender == SELF_NAME;
    state.touch_contact(&peer, now_ms);
    let preview: String = message.body.chars().take(config.preview_chars).collect();
    state.history.entry(peer.clone()).or_default().push(message);
    if from_self {
        return effects;
    }

    let in_view = state.visible && state.focused_contact.as_deref() == Some(peer.as_str());
    if !in_view {
        let notification = Notification {
            id: state.next_notification_id,
            sender: peer.clone(),
            arrived_ms: now_ms,
            preview,
        };
        state.next_notification_id += 1;
        state.notifications.insert(0, notification.clone());
        state.notifications.truncate(config.max_notifications);
        if let Some(c) = state.contact_mut(&peer) {
            c.unread_count += 1;
        }
        effects.push(Effect::ShowNotification(notification));
    }
    let until_ms = now_ms.saturating_add(config.boost_duration_ms);
    state.opacity_boost.insert(peer.clone(), until_ms);
    effects.push(Effect::Beep);
    effects.push(Effect::OpacityBoost {
        contact: peer,
        until_ms,
    });
    effects
}
