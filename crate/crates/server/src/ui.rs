//! Server-side session engine for UI connections.
//!
//! A UI sends raw input events as `event` frames (body: an `InputEvent`
//! JSON object) and receives a `render` frame after each one, carrying the
//! render model and the effects produced. Incoming messages routed to the
//! connection are fed to the engine too. `SendMessage` effects become msg
//! frames addressed to the dispatcher.

use serde::{Deserialize, Serialize};

use glassmsg_core::effect::{Effect, EffectRecord};
use glassmsg_core::{InputEvent, Message, RenderModel, Session, SessionConfig, SELF_NAME};

use crate::dispatcher::contacts_body;
use crate::protocol::{ErrCode, FrameType, WireFrame};

/// Body of a `render` frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderBody {
    pub render: RenderModel,
    pub effects: Vec<EffectRecord>,
}

impl RenderBody {
    pub fn parse(frame: &WireFrame) -> serde_json::Result<Self> {
        serde_json::from_str(&frame.body)
    }
}

/// What one step produced.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct UiOutput {
    /// Frames for the dispatcher, as if the client had sent them.
    pub upstream: Vec<WireFrame>,
    /// Frames to write back to the client.
    pub downstream: Vec<WireFrame>,
}

#[derive(Debug, Clone)]
pub struct UiSession {
    config: SessionConfig,
    name: Option<String>,
    session: Option<Session>,
    /// Emit render frames for incoming traffic. Set for browser sockets and
    /// after the first event on any transport.
    active: bool,
}

impl UiSession {
    pub fn new(config: SessionConfig, active: bool) -> Self {
        Self {
            config,
            name: None,
            session: None,
            active,
        }
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.session.as_ref().and_then(Session::next_deadline)
    }

    /// Observes a frame the dispatcher is sending to this connection. The
    /// frame itself is always passed through first.
    pub fn on_downstream(&mut self, frame: WireFrame, now_ms: u64) -> UiOutput {
        let mut out = UiOutput::default();
        match frame.kind {
            FrameType::HelloAck => {
                let contacts = contacts_body(&frame).unwrap_or_default();
                self.name = Some(frame.to.clone());
                self.session = Some(Session::with_contacts(self.config, contacts));
                out.downstream.push(frame);
                if self.active {
                    out.downstream.push(self.render_frame(Vec::new(), now_ms));
                }
            }
            FrameType::Msg if self.name.as_deref() == Some(frame.to.as_str()) => {
                let Some(session) = self.session.as_mut() else {
                    out.downstream.push(frame);
                    return out;
                };
                let now = now_ms.max(session.clock_ms());
                let mut records = session.advance_to(now).unwrap_or_default();
                let message = Message {
                    id: frame.id.clone(),
                    sender: frame.from.clone(),
                    recipient: SELF_NAME.to_string(),
                    body: frame.body.clone(),
                    ts_ms: frame.ts,
                };
                let effects = session.handle_incoming(message, now).unwrap_or_default();
                records.extend(effects.into_iter().map(|effect| EffectRecord { t: now, effect }));
                out.downstream.push(frame);
                if self.active {
                    out.downstream.push(self.render_frame(records, now));
                }
            }
            _ => out.downstream.push(frame),
        }
        out
    }

    /// Applies an `event` frame from the client.
    pub fn on_event(&mut self, frame: &WireFrame, now_ms: u64) -> Result<UiOutput, ErrCode> {
        let (Some(name), Some(session)) = (self.name.clone(), self.session.as_mut()) else {
            return Err(ErrCode::NotRegistered);
        };
        let event: InputEvent = serde_json::from_str(&frame.body).map_err(|_| ErrCode::BadEvent)?;
        if matches!(event, InputEvent::Incoming { .. }) {
            return Err(ErrCode::BadEvent);
        }
        self.active = true;
        let now = now_ms.max(session.clock_ms());
        let mut records = session.advance_to(now).map_err(|_| ErrCode::Internal)?;
        let effects = session.handle_event(&event, now).map_err(|_| ErrCode::Internal)?;
        records.extend(effects.into_iter().map(|effect| EffectRecord { t: now, effect }));

        let mut out = UiOutput::default();
        for record in &records {
            if let Effect::SendMessage(m) = &record.effect {
                out.upstream.push(WireFrame {
                    id: m.id.clone(),
                    ..WireFrame::msg(name.clone(), m.recipient.clone(), m.body.clone())
                });
            }
        }
        out.downstream.push(self.render_frame(records, now));
        Ok(out)
    }

    /// Fires due deadlines (silence gap, opacity boost expiry).
    pub fn on_deadline(&mut self, now_ms: u64) -> UiOutput {
        let mut out = UiOutput::default();
        let Some(session) = self.session.as_mut() else {
            return out;
        };
        let now = now_ms.max(session.clock_ms());
        let records = session.advance_to(now).unwrap_or_default();
        if self.active {
            out.downstream.push(self.render_frame(records, now));
        }
        out
    }

    fn render_frame(&self, effects: Vec<EffectRecord>, now_ms: u64) -> WireFrame {
        let render = self
            .session
            .as_ref()
            .map(Session::render)
            .unwrap_or_else(|| Session::new(self.config).render());
        let body = RenderBody { render, effects };
        WireFrame {
            to: self.name.clone().unwrap_or_default(),
            body: serde_json::to_string(&body).expect("render body serializes"),
            ts: now_ms,
            ..WireFrame::new(FrameType::Render)
        }
    }
}

/// Builds an `event` frame carrying `event`.
pub fn event_frame(event: &InputEvent) -> WireFrame {
    WireFrame {
        body: serde_json::to_string(event).expect("events serialize"),
        ..WireFrame::new(FrameType::Event)
    }
}
