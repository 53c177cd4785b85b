//! Deterministic multi-client run against a [`Dispatcher`] with a manual
//! clock, used to check ordering and delivery across disconnects and a
//! server restart.
//!
//! The driver records every client submission in arrival order together
//! with the disconnects, reconnects and the restart, so a test can rebuild
//! the expected log independently.

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bot::BotScript;
use crate::dispatcher::{Action, ConnId, Dispatcher};
use crate::log::{ConversationLog, LogError};
use crate::protocol::{FrameType, WireFrame};

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub clients: Vec<String>,
    pub bot: BotScript,
    /// Client submissions to make.
    pub messages: usize,
    /// Submission index before which the server crashes and recovers.
    pub restart_at: usize,
    pub log_path: PathBuf,
    /// Largest clock step between driver actions.
    pub max_step_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Submit {
        now_ms: u64,
        from: String,
        to: String,
        body: String,
    },
    Disconnect {
        now_ms: u64,
        name: String,
    },
    Reconnect {
        now_ms: u64,
        name: String,
    },
    /// The server process dies; pending bot replies are lost.
    Restart {
        now_ms: u64,
    },
}

#[derive(Debug, Default, Clone)]
pub struct ScenarioReport {
    pub steps: Vec<Step>,
    /// Msg frames each client actually read, across all its connections.
    pub delivered: BTreeMap<String, Vec<WireFrame>>,
    /// Acks each client read.
    pub acks: BTreeMap<String, Vec<WireFrame>>,
    /// Any err frames seen by clients.
    pub errors: Vec<WireFrame>,
    pub disconnects: usize,
    pub end_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("log append failed: {0}")]
    Io(#[from] io::Error),
    #[error("client {0} was refused")]
    Refused(String),
}

struct ClientConn {
    conn: Option<ConnId>,
    /// Routed to the connection but not yet read by the client.
    buffered: Vec<WireFrame>,
}

struct Driver {
    dispatcher: Dispatcher,
    clients: BTreeMap<String, ClientConn>,
    report: ScenarioReport,
    next_local: u64,
}

impl Driver {
    fn apply(&mut self, actions: Vec<Action>) {
        for action in actions {
            if let Action::Send(conn, frame) = action {
                let target = self
                    .clients
                    .values_mut()
                    .find(|c| c.conn == Some(conn))
                    .expect("frames only go to live connections");
                target.buffered.push(frame);
            }
        }
    }

    /// The client drains its socket buffer.
    fn read(&mut self, name: &str) {
        let client = self.clients.get_mut(name).expect("known client");
        for frame in client.buffered.drain(..) {
            match frame.kind {
                FrameType::Msg => self.report.delivered.entry(name.into()).or_default().push(frame),
                FrameType::Ack => self.report.acks.entry(name.into()).or_default().push(frame),
                FrameType::Err => self.report.errors.push(frame),
                _ => {}
            }
        }
    }

    fn connect(&mut self, name: &str, now: u64) -> Result<(), ScenarioError> {
        let conn = self.dispatcher.connect();
        let actions = self.dispatcher.handle_frame(conn, WireFrame::hello(name), now)?;
        if actions.contains(&Action::Close(conn)) {
            return Err(ScenarioError::Refused(name.into()));
        }
        self.clients.get_mut(name).expect("known client").conn = Some(conn);
        self.apply(actions);
        Ok(())
    }

    /// Drops the connection; unread frames go back to the server.
    fn disconnect(&mut self, name: &str, keep_read: usize) {
        let client = self.clients.get_mut(name).expect("known client");
        let Some(conn) = client.conn.take() else { return };
        let keep = keep_read.min(client.buffered.len());
        let unread = client.buffered.split_off(keep);
        self.read(name);
        let actions = self.dispatcher.disconnect(conn, unread);
        self.apply(actions);
        self.report.disconnects += 1;
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (log, recovered) = ConversationLog::open(&cfg.log_path)?;
    let mut driver = Driver {
        dispatcher: Dispatcher::new(vec![cfg.bot.clone()], 50)
            .with_recovered(recovered)
            .with_log(log),
        clients: cfg
            .clients
            .iter()
            .map(|n| {
                (
                    n.clone(),
                    ClientConn {
                        conn: None,
                        buffered: Vec::new(),
                    },
                )
            })
            .collect(),
        report: ScenarioReport::default(),
        next_local: 0,
    };
    let mut now = 1_000u64;
    for name in &cfg.clients {
        driver.connect(name, now)?;
    }

    let mut sent = 0;
    let mut restarted = false;
    while sent < cfg.messages {
        now += rng.gen_range(0..=cfg.max_step_ms);
        let fired = driver.dispatcher.fire_timers(now)?;
        driver.apply(fired);

        if sent == cfg.restart_at && !restarted {
            restart(&mut driver, cfg, now)?;
            restarted = true;
            continue;
        }

        let name = cfg.clients[rng.gen_range(0..cfg.clients.len())].clone();
        let online = driver.clients[&name].conn.is_some();
        match rng.gen_range(0..100) {
            0..=2 if online => {
                let keep = rng.gen_range(0..4);
                driver.disconnect(&name, keep);
                driver.report.steps.push(Step::Disconnect {
                    now_ms: now,
                    name,
                });
            }
            _ if !online => {
                if rng.gen_bool(0.3) {
                    driver.connect(&name, now)?;
                    driver.report.steps.push(Step::Reconnect { now_ms: now, name });
                }
            }
            3..=30 => driver.read(&name),
            _ => {
                let mut peers: Vec<&String> = cfg.clients.iter().filter(|c| **c != name).collect();
                peers.push(&cfg.bot.name);
                let to = peers[rng.gen_range(0..peers.len())].clone();
                let body = if rng.gen_bool(0.2) {
                    format!("where are you {sent}")
                } else {
                    format!("{name} says {sent}")
                };
                driver.next_local += 1;
                let frame = WireFrame {
                    id: format!("local-{}", driver.next_local),
                    ..WireFrame::msg(name.clone(), to.clone(), body.clone())
                };
                let conn = driver.clients[&name].conn.expect("online");
                let actions = driver.dispatcher.handle_frame(conn, frame, now)?;
                driver.apply(actions);
                driver.report.steps.push(Step::Submit {
                    now_ms: now,
                    from: name,
                    to,
                    body,
                });
                sent += 1;
            }
        }
    }

    // let every bot reply land, then bring everyone online and read
    while let Some(due) = driver.dispatcher.next_timer() {
        now = now.max(due);
        let fired = driver.dispatcher.fire_timers(now)?;
        driver.apply(fired);
    }
    for name in &cfg.clients {
        if driver.clients[name].conn.is_none() {
            driver.connect(name, now)?;
            driver.report.steps.push(Step::Reconnect {
                now_ms: now,
                name: name.clone(),
            });
        }
        driver.read(name);
    }
    driver.report.end_ms = now;
    Ok(driver.report)
}

/// Everyone reconnects and reads, then the server dies without draining its
/// timers and comes back from the log.
fn restart(driver: &mut Driver, cfg: &ScenarioConfig, now: u64) -> Result<(), ScenarioError> {
    for name in &cfg.clients {
        if driver.clients[name].conn.is_none() {
            driver.connect(name, now)?;
            driver.report.steps.push(Step::Reconnect {
                now_ms: now,
                name: name.clone(),
            });
        }
        driver.read(name);
    }
    let (log, recovered) = ConversationLog::open(&cfg.log_path)?;
    driver.dispatcher = Dispatcher::new(vec![cfg.bot.clone()], 50)
        .with_recovered(recovered)
        .with_log(log);
    driver.report.steps.push(Step::Restart { now_ms: now });
    for name in &cfg.clients {
        driver.clients.get_mut(name).expect("known client").conn = None;
        driver.connect(name, now)?;
    }
    Ok(())
}
