//! Seeded random input generation for soak testing sessions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grammar::{GestureEvent, GestureTarget, RingButton};
use crate::session::InputEvent;
use crate::trace::TraceEvent;

const PHRASES: &[&str] = &[
    "show chat",
    "hide chat",
    "open notification",
    "voice message",
    "send",
    "open keyboard",
    "close keyboard",
    "scroll to the top",
    "scroll up",
    "scroll down",
    "reply",
    "SHOW CHAT",
    "  Reply ",
];

const WORDS: &[&str] = &[
    "ok", "see", "you", "at", "five", "where", "are", "the", "cafe", "soon", "lunch", "now",
];

/// Produces an endless, reproducible stream of timestamped input events.
#[derive(Debug, Clone)]
pub struct EventGenerator {
    rng: ChaCha8Rng,
    contacts: Vec<String>,
    strangers: Vec<String>,
    now_ms: u64,
    max_step_ms: u64,
}

impl EventGenerator {
    pub fn new(seed: u64, contacts: &[&str]) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            contacts: contacts.iter().map(|c| c.to_string()).collect(),
            strangers: vec!["Zoe".into(), "Yuri".into(), "Xia".into()],
            now_ms: 0,
            max_step_ms: 2500,
        }
    }

    pub fn with_max_step(mut self, max_step_ms: u64) -> Self {
        self.max_step_ms = max_step_ms;
        self
    }

    pub fn contacts(&self) -> &[String] {
        &self.contacts
    }

    fn words(&mut self) -> String {
        let n = self.rng.gen_range(1..5);
        (0..n)
            .map(|_| *WORDS.choose(&mut self.rng).expect("non-empty"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn any_name(&mut self) -> String {
        if self.rng.gen_bool(0.1) {
            self.strangers.choose(&mut self.rng).expect("non-empty").clone()
        } else {
            self.contacts.choose(&mut self.rng).cloned().unwrap_or_else(|| "Peter".into())
        }
    }

    fn noise(&mut self) -> String {
        let len = self.rng.gen_range(0..12);
        (0..len).map(|_| self.rng.gen::<char>()).collect()
    }

    pub fn next_input(&mut self) -> InputEvent {
        match self.rng.gen_range(0..100) {
            0..=29 => {
                let text = match self.rng.gen_range(0..6) {
                    0 | 1 => PHRASES.choose(&mut self.rng).expect("non-empty").to_string(),
                    2 => self.any_name(),
                    3 => format!("text {}", self.any_name()),
                    4 => self.words(),
                    _ => self.noise(),
                };
                InputEvent::Utterance { text }
            }
            30..=44 => {
                let button = *[
                    RingButton::Up,
                    RingButton::Down,
                    RingButton::Left,
                    RingButton::Right,
                    RingButton::Center,
                ]
                .choose(&mut self.rng)
                .expect("non-empty");
                let hold_ms = self.rng.gen_bool(0.25).then(|| self.rng.gen_range(100..2000));
                InputEvent::Ring { button, hold_ms }
            }
            45..=57 => {
                let gesture = match self.rng.gen_range(0..8) {
                    0 => GestureEvent::SwipeUp,
                    1 => GestureEvent::SwipeDown,
                    2 => GestureEvent::Press(GestureTarget::Notification(self.rng.gen_range(0..20))),
                    3 => GestureEvent::Press(GestureTarget::Contact(self.any_name())),
                    4 => GestureEvent::Press(GestureTarget::VoiceButton),
                    5 => GestureEvent::Press(GestureTarget::KeyboardButton),
                    6 => GestureEvent::Press(GestureTarget::SendButton),
                    _ => GestureEvent::Press(GestureTarget::Anywhere),
                };
                InputEvent::Gesture { gesture }
            }
            58..=67 => InputEvent::KeyboardText { text: self.words() },
            68..=89 => InputEvent::Incoming {
                from: self.any_name(),
                body: self.words(),
                id: None,
            },
            _ => InputEvent::Tick,
        }
    }

    pub fn next_event(&mut self) -> TraceEvent {
        self.now_ms += self.rng.gen_range(0..=self.max_step_ms);
        let event = self.next_input();
        TraceEvent::new(self.now_ms, event)
    }

    pub fn take_events(&mut self, n: usize) -> Vec<TraceEvent> {
        (0..n).map(|_| self.next_event()).collect()
    }
}
