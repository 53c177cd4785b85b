//! Headless client that plays a trace against a live server in real time.
//!
//! Trace times are kept as the session clock: an event at `t` fires `t - t0`
//! milliseconds after start, and messages from the server are stamped with
//! the session time at which they arrive. `incoming` events in the trace are
//! skipped since other participants and bots supply the incoming traffic.

use std::net::SocketAddr;
use std::time::Duration;

use tokio::time::Instant;

use glassmsg_core::effect::{Effect, EffectRecord};
use glassmsg_core::replay::{session_config_for, ReplayOptions};
use glassmsg_core::{InputEvent, InputTrace, Message, MetricsReport, Session, SELF_NAME};
use glassmsg_server::dispatcher::contacts_body;
use glassmsg_server::{Client, ClientError, FrameType, WireFrame};

#[derive(Debug, Clone)]
pub struct ClientOptions {
    /// Name to register with the server.
    pub name: String,
    pub silence_gap_ms: Option<u64>,
    /// How long to keep listening after the last trace event.
    pub linger_ms: u64,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            name: SELF_NAME.into(),
            silence_gap_ms: None,
            linger_ms: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedRun {
    pub effects: Vec<EffectRecord>,
    pub report: MetricsReport,
    /// Acks for this client's messages, in arrival order.
    pub acks: Vec<WireFrame>,
    /// Err frames the server sent.
    pub errors: Vec<WireFrame>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("trace: {0}")]
    Trace(#[from] glassmsg_core::trace::TraceError),
    #[error("session: {0}")]
    Session(#[from] glassmsg_core::session::SessionError),
}

pub async fn run_scripted_client(
    addr: SocketAddr,
    trace: &InputTrace,
    options: &ClientOptions,
) -> Result<ScriptedRun, ScriptError> {
    trace.check_order()?;
    let (mut client, ack) = Client::join(addr, &options.name).await?;
    let mut contacts = trace.header.contacts.clone();
    for name in contacts_body(&ack).unwrap_or_default() {
        if !contacts.contains(&name) {
            contacts.push(name);
        }
    }
    let config = session_config_for(
        trace,
        ReplayOptions {
            silence_gap_ms: options.silence_gap_ms,
        },
    );
    let mut session = Session::with_contacts(config, contacts);

    let t0 = trace.events.first().map_or(0, |e| e.t_ms);
    let start = Instant::now();
    let session_now = || t0 + start.elapsed().as_millis() as u64;
    let end_ms = trace.events.last().map_or(t0, |e| e.t_ms) + options.linger_ms;

    let mut run = ScriptedRun {
        effects: Vec::new(),
        report: MetricsReport::default(),
        acks: Vec::new(),
        errors: Vec::new(),
    };
    let mut events = trace
        .events
        .iter()
        .filter(|e| !matches!(e.event, InputEvent::Incoming { .. }))
        .peekable();

    loop {
        let next_event = events.peek().map(|e| e.t_ms);
        let wake = [next_event, session.next_deadline(), Some(end_ms)]
            .into_iter()
            .flatten()
            .min()
            .expect("end time always present");
        let sleep_for = Duration::from_millis(wake.saturating_sub(session_now()));

        tokio::select! {
            frame = client.recv() => {
                let Some(frame) = frame? else { break };
                let now = session_now().max(session.clock_ms());
                run.effects.extend(session.advance_to(now)?);
                match frame.kind {
                    FrameType::Msg if frame.to == options.name => {
                        let message = Message {
                            id: frame.id.clone(),
                            sender: frame.from.clone(),
                            recipient: SELF_NAME.into(),
                            body: frame.body.clone(),
                            ts_ms: now,
                        };
                        let fx = session.handle_incoming(message, now)?;
                        run.effects.extend(fx.into_iter().map(|effect| EffectRecord { t: now, effect }));
                    }
                    FrameType::Ack => run.acks.push(frame),
                    FrameType::Err => run.errors.push(frame),
                    _ => {}
                }
            }
            _ = tokio::time::sleep(sleep_for) => {
                let now = session_now().max(session.clock_ms());
                if next_event.is_some_and(|t| t <= now) {
                    let ev = events.next().expect("peeked");
                    // fire deadlines at their own time, then the event at its trace time
                    let at = ev.t_ms.max(session.clock_ms());
                    run.effects.extend(session.advance_to(at)?);
                    let fx = session.handle_event(&ev.event, at)?;
                    for effect in fx {
                        if let Effect::SendMessage(m) = &effect {
                            client
                                .send(&WireFrame {
                                    id: m.id.clone(),
                                    ..WireFrame::msg(options.name.clone(), m.recipient.clone(), m.body.clone())
                                })
                                .await
                                .map_err(ClientError::from)?;
                        }
                        run.effects.push(EffectRecord { t: at, effect });
                    }
                } else {
                    run.effects.extend(session.advance_to(now)?);
                }
                if events.peek().is_none() && now >= end_ms {
                    break;
                }
            }
        }
    }
    run.report = MetricsReport::from_log(&run.effects, &trace.header.reference);
    let _ = client.close().await;
    Ok(run)
}
