//! Virtual chat server.
//!
//! Clients exchange newline-delimited JSON [`WireFrame`]s over TCP, or over
//! a browser socket where the server also runs a session engine per
//! connection. Routing goes through a single [`Dispatcher`]; accepted
//! messages are appended to a [`ConversationLog`] that is replayed on
//! startup. Scripted [`BotScript`] contacts answer on a timer.

pub mod bot;
pub mod client;
pub mod dispatcher;
pub mod log;
pub mod protocol;
pub mod scenario;
pub mod server;
pub mod ui;

pub use bot::{BotRule, BotScript};
pub use client::{Client, ClientError};
pub use dispatcher::{Action, ConnId, Dispatcher};
pub use log::{recover, ConvKey, ConversationLog, Recovered};
pub use protocol::{ErrCode, FrameType, WireFrame};
pub use server::{start, Clock, RunningServer, ServerConfig, ServerError, SystemClock};
