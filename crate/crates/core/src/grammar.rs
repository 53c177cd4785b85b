//! Interpretation of raw input events into [`Command`]s.
//!
//! Three input channels feed the session: recognized speech, ring-mouse
//! buttons and mid-air gestures on the virtual panels. Each channel has its
//! own mapping function; all of them are pure and total.

use serde::{Deserialize, Serialize};

/// Hold duration after which a ring button press counts as a long press.
pub const DEFAULT_HOLD_THRESHOLD_MS: u64 = 1000;

/// A chunk of recognized speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub at_ms: u64,
}

impl Utterance {
    pub fn new(text: impl Into<String>, at_ms: u64) -> Self {
        Self {
            text: text.into(),
            at_ms,
        }
    }
}

/// Whether speech is read as commands or as message text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterpreterMode {
    Command,
    Dictation,
}

/// The normalized result of interpreting any input event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    RevealInterface,
    HideInterface,
    /// Open a pending notification. `None` picks the newest one; a gesture
    /// on a specific notification carries its id.
    OpenNotification(Option<u64>),
    SelectContact(String),
    StartDictation,
    Send,
    OpenKeyboard,
    CloseKeyboard,
    ScrollToTop,
    ScrollUp,
    ScrollDown,
    /// Shortcut for `OpenNotification(None)` followed by `StartDictation`.
    Reply,
    /// Shortcut for `SelectContact(name)` followed by `StartDictation`.
    TextTo(String),
    AppendTranscript(String),
    FocusNext,
    ActivateFocused,
    NoCommand,
}

impl Command {
    /// The fixed command sequence a shortcut stands for. Non-shortcut
    /// commands expand to themselves.
    pub fn expand(&self) -> Vec<Command> {
        match self {
            Command::Reply => vec![Command::OpenNotification(None), Command::StartDictation],
            Command::TextTo(name) => {
                vec![Command::SelectContact(name.clone()), Command::StartDictation]
            }
            other => vec![other.clone()],
        }
    }

    pub fn is_shortcut(&self) -> bool {
        matches!(self, Command::Reply | Command::TextTo(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingButton {
    Up,
    Down,
    Left,
    Right,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingPress {
    Click,
    Hold { duration_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingEvent {
    pub button: RingButton,
    pub press: RingPress,
}

impl RingEvent {
    pub fn click(button: RingButton) -> Self {
        Self {
            button,
            press: RingPress::Click,
        }
    }

    pub fn hold(button: RingButton, duration_ms: u64) -> Self {
        Self {
            button,
            press: RingPress::Hold { duration_ms },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureTarget {
    Notification(u64),
    Contact(String),
    VoiceButton,
    KeyboardButton,
    SendButton,
    Anywhere,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureEvent {
    Press(GestureTarget),
    SwipeUp,
    SwipeDown,
}

/// The slice of session state the ring mapping depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RingContext {
    pub visible: bool,
    pub keyboard_open: bool,
}

/// Fixed voice phrases, already normalized.
const PHRASES: &[(&str, Command)] = &[
    ("show chat", Command::RevealInterface),
    ("hide chat", Command::HideInterface),
    ("open notification", Command::OpenNotification(None)),
    ("voice message", Command::StartDictation),
    ("send", Command::Send),
    ("open keyboard", Command::OpenKeyboard),
    ("close keyboard", Command::CloseKeyboard),
    ("scroll to the top", Command::ScrollToTop),
    ("scroll to top", Command::ScrollToTop),
    ("scroll up", Command::ScrollUp),
    ("scroll down", Command::ScrollDown),
    ("reply", Command::Reply),
];

const TEXT_PREFIX: &str = "text ";

/// Lowercases and collapses whitespace runs to single spaces.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Resolves a spoken name to exactly one contact, or nothing when the name
/// is unknown or shared by several contacts.
fn resolve_contact<S: AsRef<str>>(spoken: &str, contacts: &[S]) -> Option<String> {
    let mut hits = contacts
        .iter()
        .map(AsRef::as_ref)
        .filter(|c| normalize(c) == spoken);
    let first = hits.next()?;
    match hits.next() {
        Some(_) => None,
        None => Some(first.to_string()),
    }
}

/// Interprets one utterance.
///
/// In command mode the text is matched case-insensitively against the fixed
/// phrase set, then against contact names, then against `text <name>`.
/// In dictation mode every non-blank utterance is message text.
pub fn parse_utterance<S: AsRef<str>>(
    utterance: &Utterance,
    mode: InterpreterMode,
    contacts: &[S],
) -> Command {
    match mode {
        InterpreterMode::Dictation => {
            let text = utterance.text.trim();
            if text.is_empty() {
                Command::NoCommand
            } else {
                Command::AppendTranscript(text.to_string())
            }
        }
        InterpreterMode::Command => parse_command_phrase(&utterance.text, contacts),
    }
}

fn parse_command_phrase<S: AsRef<str>>(text: &str, contacts: &[S]) -> Command {
    let spoken = normalize(text);
    if spoken.is_empty() {
        return Command::NoCommand;
    }
    if let Some((_, command)) = PHRASES.iter().find(|(phrase, _)| *phrase == spoken) {
        return command.clone();
    }
    if contacts.iter().any(|c| normalize(c.as_ref()) == spoken) {
        return resolve_contact(&spoken, contacts)
            .map(Command::SelectContact)
            .unwrap_or(Command::NoCommand);
    }
    if let Some(rest) = spoken.strip_prefix(TEXT_PREFIX) {
        return text_target(rest, contacts)
            .map(Command::TextTo)
            .unwrap_or(Command::NoCommand);
    }
    Command::NoCommand
}

/// The contact named by the remainder after `text `. The remainder must be
/// a whole contact name; trailing words do not match.
fn text_target<S: AsRef<str>>(rest: &str, contacts: &[S]) -> Option<String> {
    resolve_contact(rest, contacts)
}

/// Maps ring-mouse button events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingMapper {
    pub hold_threshold_ms: u64,
}

impl Default for RingMapper {
    fn default() -> Self {
        Self {
            hold_threshold_ms: DEFAULT_HOLD_THRESHOLD_MS,
        }
    }
}

impl RingMapper {
    pub fn new(hold_threshold_ms: u64) -> Self {
        Self { hold_threshold_ms }
    }

    fn is_long(&self, press: RingPress) -> bool {
        matches!(press, RingPress::Hold { duration_ms } if duration_ms >= self.hold_threshold_ms)
    }

    pub fn map(&self, event: RingEvent, ctx: RingContext) -> Command {
        let long = self.is_long(event.press);
        if event.button == RingButton::Center && long {
            return if ctx.visible {
                Command::HideInterface
            } else {
                Command::RevealInterface
            };
        }
        if ctx.keyboard_open {
            return Command::CloseKeyboard;
        }
        match (event.button, long) {
            (RingButton::Up, true) => Command::ScrollToTop,
            (RingButton::Up, false) => Command::ScrollUp,
            (RingButton::Down, _) => Command::ScrollDown,
            (RingButton::Right, _) => Command::FocusNext,
            (RingButton::Center, _) => Command::ActivateFocused,
            (RingButton::Left, _) => Command::NoCommand,
        }
    }
}

/// Maps a ring event with the default hold threshold.
pub fn map_ring_event(event: RingEvent, ctx: RingContext) -> Command {
    RingMapper::default().map(event, ctx)
}

/// Maps a mid-air gesture. Any press while the virtual keyboard is up
/// dismisses the keyboard instead of hitting its target.
pub fn map_gesture_event(event: &GestureEvent, keyboard_open: bool) -> Command {
    match event {
        GestureEvent::Press(_) if keyboard_open => Command::CloseKeyboard,
        GestureEvent::Press(target) => match target {
            GestureTarget::Notification(id) => Command::OpenNotification(Some(*id)),
            GestureTarget::Contact(name) => Command::SelectContact(name.clone()),
            GestureTarget::VoiceButton => Command::StartDictation,
            GestureTarget::KeyboardButton => Command::OpenKeyboard,
            GestureTarget::SendButton => Command::Send,
            GestureTarget::Anywhere => Command::NoCommand,
        },
        GestureEvent::SwipeUp => Command::ScrollUp,
        GestureEvent::SwipeDown => Command::ScrollDown,
    }
}
