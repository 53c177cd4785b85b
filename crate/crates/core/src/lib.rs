//! Client-side core of a heads-up messaging system.
//!
//! Input events (speech, ring-mouse buttons, mid-air gestures) are turned
//! into [`Command`]s by [`grammar`], applied to a [`Session`] which emits
//! [`Effect`]s, and the overlay is derived from the session by
//! [`render`](render::render). [`replay`] drives recorded traces through a
//! session and [`metrics`] scores the resulting effect logs.

pub mod effect;
pub mod grammar;
pub mod metrics;
pub mod render;
pub mod replay;
pub mod session;
pub mod sim;
pub mod trace;

pub use effect::{Effect, EffectRecord, ErrorCode};
pub use grammar::{Command, GestureEvent, GestureTarget, InterpreterMode, RingButton, RingEvent, Utterance};
pub use metrics::{MetricsReport, Rational};
pub use render::RenderModel;
pub use replay::{replay, ReplayOutcome};
pub use session::{InputEvent, Message, Notification, Session, SessionConfig, SessionState, SELF_NAME};
pub use trace::{InputTrace, TraceEvent, TraceHeader};
