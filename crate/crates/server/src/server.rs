//! Tokio runtime around the [`Dispatcher`].
//!
//! One task owns the dispatcher and drains an inbox fed by connection tasks.
//! Each connection task reads lines from its socket, forwards parsed frames
//! to the inbox and writes whatever the dispatcher routes to it. TCP clients
//! speak newline-delimited frames; browser clients connect to
//! `ws://host:ws_port/session` and send one frame per text message.

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures_util::{Sink, SinkExt, Stream, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::{http, Message};
use tokio_util::task::TaskTracker;
use tracing::{debug, info, warn};

use glassmsg_core::SessionConfig;

use crate::bot::BotScript;
use crate::dispatcher::{Action, ConnId, Dispatcher, DEFAULT_HISTORY_DEPTH};
use crate::log::{ConversationLog, Histories, LogError};
use crate::protocol::{self, ErrCode, FrameType, LineFramer, WireFrame, MAX_FRAME_BYTES};
use crate::ui::UiSession;

/// Path browser clients must request.
pub const WS_PATH: &str = "/session";

/// Source of epoch milliseconds.
pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// `None` disables the browser endpoint.
    pub ws_port: Option<u16>,
    pub bots: Vec<BotScript>,
    pub log_path: Option<PathBuf>,
    /// Replaces every bot's own seed when set.
    pub seed: Option<u64>,
    pub history_depth: usize,
    pub session: SessionConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 7870,
            ws_port: Some(7871),
            bots: Vec::new(),
            log_path: None,
            seed: None,
            history_depth: DEFAULT_HISTORY_DEPTH,
            session: SessionConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Log(#[from] LogError),
}

/// A running server. Dropping it does not stop the tasks; call
/// [`RunningServer::shutdown`].
pub struct RunningServer {
    tcp_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    recovered_warnings: usize,
    shutdown: watch::Sender<bool>,
    inbox: mpsc::UnboundedSender<Inbound>,
    tasks: TaskTracker,
}

impl RunningServer {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    /// Half-written lines dropped while recovering the log.
    pub fn recovered_warnings(&self) -> usize {
        self.recovered_warnings
    }

    /// Snapshot of all conversation histories.
    pub async fn histories(&self) -> Histories {
        let (tx, rx) = oneshot::channel();
        if self.inbox.send(Inbound::Snapshot(tx)).is_err() {
            return Histories::new();
        }
        rx.await.unwrap_or_default()
    }

    /// Stops accepting, closes every connection and waits for all tasks.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        self.tasks.close();
        self.tasks.wait().await;
    }

    /// Resolves once shutdown has been requested and all tasks ended.
    pub async fn wait(&self) {
        let mut rx = self.shutdown.subscribe();
        let _ = rx.wait_for(|stop| *stop).await;
        self.tasks.close();
        self.tasks.wait().await;
    }

    /// Handle that can request shutdown from elsewhere.
    pub fn stopper(&self) -> watch::Sender<bool> {
        self.shutdown.clone()
    }
}

enum Inbound {
    Open(ConnId, mpsc::UnboundedSender<Outbound>),
    Frame(ConnId, WireFrame),
    Closed(ConnId, Vec<WireFrame>),
    Snapshot(oneshot::Sender<Histories>),
}

enum Outbound {
    Frame(WireFrame),
    Close,
}

/// Recovers the log, binds both listeners and spawns the server tasks.
pub async fn start(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<RunningServer, ServerError> {
    let mut bots = config.bots.clone();
    if let Some(seed) = config.seed {
        bots.iter_mut().for_each(|b| b.rng_seed = seed);
    }
    let mut dispatcher = Dispatcher::new(bots, config.history_depth);
    let mut warnings = 0;
    if let Some(path) = &config.log_path {
        let (log, recovered) = ConversationLog::open(path)?;
        warnings = recovered.warnings;
        if warnings > 0 {
            warn!(path = %path.display(), warnings, "dropped half-written log tail");
        }
        info!(messages = recovered.message_count(), "recovered conversation log");
        dispatcher = dispatcher.with_recovered(recovered).with_log(log);
    }

    let tcp = bind(&config.host, config.port).await?;
    let tcp_addr = tcp.local_addr().expect("bound socket has an address");
    let ws = match config.ws_port {
        Some(port) => Some(bind(&config.host, port).await?),
        None => None,
    };
    let ws_addr = ws.as_ref().map(|l| l.local_addr().expect("bound socket has an address"));

    let (shutdown, shutdown_rx) = watch::channel(false);
    let (inbox, inbox_rx) = mpsc::unbounded_channel();
    let tasks = TaskTracker::new();
    tasks.spawn(run_dispatcher(dispatcher, inbox_rx, clock.clone(), shutdown_rx.clone()));
    let ctx = ConnCtx {
        inbox: inbox.clone(),
        clock,
        session: config.session,
        shutdown: shutdown_rx,
        tasks: tasks.clone(),
    };
    tasks.spawn(accept_loop(tcp, ctx.clone(), Transport::Tcp));
    if let Some(ws) = ws {
        tasks.spawn(accept_loop(ws, ctx, Transport::Ws));
    }
    info!(%tcp_addr, ?ws_addr, "chat server listening");
    Ok(RunningServer {
        tcp_addr,
        ws_addr,
        recovered_warnings: warnings,
        shutdown,
        inbox,
        tasks,
    })
}

async fn bind(host: &str, port: u16) -> Result<TcpListener, ServerError> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })
}

#[derive(Clone)]
struct ConnCtx {
    inbox: mpsc::UnboundedSender<Inbound>,
    clock: Arc<dyn Clock>,
    session: SessionConfig,
    shutdown: watch::Receiver<bool>,
    tasks: TaskTracker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transport {
    Tcp,
    Ws,
}

async fn run_dispatcher(
    mut dispatcher: Dispatcher,
    mut inbox: mpsc::UnboundedReceiver<Inbound>,
    clock: Arc<dyn Clock>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut conns: std::collections::BTreeMap<ConnId, mpsc::UnboundedSender<Outbound>> =
        Default::default();
    loop {
        let wait = dispatcher
            .next_timer()
            .map(|due| Duration::from_millis(due.saturating_sub(clock.now_ms())));
        let actions = tokio::select! {
            _ = shutdown.wait_for(|s| *s) => break,
            _ = tokio::time::sleep(wait.unwrap_or_default()), if wait.is_some() => {
                dispatcher.fire_timers(clock.now_ms())
            }
            msg = inbox.recv() => match msg {
                None => break,
                Some(Inbound::Open(conn, tx)) => {
                    dispatcher.open(conn);
                    conns.insert(conn, tx);
                    Ok(Vec::new())
                }
                Some(Inbound::Frame(conn, frame)) => dispatcher.handle_frame(conn, frame, clock.now_ms()),
                Some(Inbound::Closed(conn, undelivered)) => {
                    conns.remove(&conn);
                    Ok(dispatcher.disconnect(conn, undelivered))
                }
                Some(Inbound::Snapshot(reply)) => {
                    let _ = reply.send(dispatcher.histories().clone());
                    Ok(Vec::new())
                }
            },
        };
        let actions = match actions {
            Ok(a) => a,
            Err(e) => {
                // the log is the source of truth; stop rather than diverge
                tracing::error!(error = %e, "conversation log write failed, stopping");
                break;
            }
        };
        for action in actions {
            match action {
                Action::Send(conn, frame) => {
                    let delivered = conns
                        .get(&conn)
                        .map(|tx| tx.send(Outbound::Frame(frame.clone())).is_ok())
                        .unwrap_or(false);
                    if !delivered {
                        dispatcher.undeliverable(conn, frame);
                    }
                }
                Action::Close(conn) => {
                    if let Some(tx) = conns.get(&conn) {
                        let _ = tx.send(Outbound::Close);
                    }
                }
            }
        }
    }
    debug!("dispatcher stopped");
}

async fn accept_loop(listener: TcpListener, ctx: ConnCtx, transport: Transport) {
    let mut shutdown = ctx.shutdown.clone();
    let mut next_id: ConnId = match transport {
        Transport::Tcp => 1,
        Transport::Ws => 2,
    };
    loop {
        let (stream, peer) = tokio::select! {
            _ = shutdown.wait_for(|s| *s) => break,
            accepted = listener.accept() => match accepted {
                Ok(pair) => pair,
                Err(e) => {
                    warn!(error = %e, "accept failed");
                    continue;
                }
            },
        };
        let conn = next_id;
        next_id += 2;
        let _ = stream.set_nodelay(true);
        let ctx2 = ctx.clone();
        ctx.tasks.spawn(async move {
            debug!(conn, %peer, ?transport, "connection opened");
            match transport {
                Transport::Tcp => serve_tcp(conn, stream, ctx2).await,
                Transport::Ws => serve_ws(conn, stream, ctx2).await,
            }
        });
    }
}

async fn serve_tcp(conn: ConnId, stream: TcpStream, ctx: ConnCtx) {
    let (read, write) = stream.into_split();
    let lines = futures_util::stream::unfold(
        (read, LineFramer::new(MAX_FRAME_BYTES), false),
        |(mut read, mut framer, mut eof)| async move {
            loop {
                if let Some(line) = framer.next_line() {
                    return Some((line, (read, framer, eof)));
                }
                if eof {
                    return framer.finish().map(|line| (line, (read, framer, eof)));
                }
                match read.read_buf(framer.buffer()).await {
                    Ok(0) | Err(_) => eof = true,
                    Ok(_) => {}
                }
            }
        },
    );
    let sink = futures_util::sink::unfold(write, |mut write, line: String| async move {
        write.write_all(line.as_bytes()).await?;
        Ok::<_, io::Error>(write)
    });
    run_connection(conn, Box::pin(lines), Box::pin(sink), ctx, false).await;
}

async fn serve_ws(conn: ConnId, stream: TcpStream, ctx: ConnCtx) {
    // the handshake callback's signature is fixed by tungstenite
    #[allow(clippy::result_large_err)]
    let check_path = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() == WS_PATH {
            Ok(resp)
        } else {
            let mut err = ErrorResponse::new(Some(format!("use {WS_PATH}")));
            *err.status_mut() = http::StatusCode::NOT_FOUND;
            Err(err)
        }
    };
    let ws = match tokio_tungstenite::accept_hdr_async(stream, check_path).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!(conn, error = %e, "websocket handshake failed");
            return;
        }
    };
    let (sink, stream) = ws.split();
    let lines = stream
        .take_while(|m| futures_util::future::ready(matches!(m, Ok(m) if !m.is_close())))
        .filter_map(|m| {
            futures_util::future::ready(match m {
                Ok(Message::Text(text)) if text.len() > MAX_FRAME_BYTES + 2 => {
                    Some(Err(ErrCode::FrameTooLarge))
                }
                Ok(Message::Text(text)) => Some(Ok(text.as_str().trim_end().to_string())),
                Ok(Message::Binary(_)) => Some(Err(ErrCode::BadFrame)),
                _ => None,
            })
        });
    let sink = sink
        .sink_map_err(io::Error::other)
        .with(|line: String| futures_util::future::ready(Ok::<_, io::Error>(Message::text(line.trim_end()))));
    run_connection(conn, Box::pin(lines), Box::pin(sink), ctx, true).await;
}

type Lines = std::pin::Pin<Box<dyn Stream<Item = Result<String, ErrCode>> + Send>>;
type LineSink = std::pin::Pin<Box<dyn Sink<String, Error = io::Error> + Send>>;

async fn run_connection(conn: ConnId, mut lines: Lines, mut sink: LineSink, ctx: ConnCtx, browser: bool) {
    let (tx, mut rx) = mpsc::unbounded_channel();
    if ctx.inbox.send(Inbound::Open(conn, tx)).is_err() {
        return;
    }
    let mut ui = UiSession::new(ctx.session, browser);
    let mut shutdown = ctx.shutdown.clone();
    let mut unsent: Vec<WireFrame> = Vec::new();

    'conn: loop {
        let deadline = ui
            .next_deadline()
            .map(|d| Duration::from_millis(d.saturating_sub(ctx.clock.now_ms())));
        let downstream: Vec<WireFrame> = tokio::select! {
            _ = shutdown.wait_for(|s| *s) => break,
            _ = tokio::time::sleep(deadline.unwrap_or_default()), if deadline.is_some() => {
                ui.on_deadline(ctx.clock.now_ms()).downstream
            }
            out = rx.recv() => match out {
                Some(Outbound::Frame(frame)) => ui.on_downstream(frame, ctx.clock.now_ms()).downstream,
                Some(Outbound::Close) | None => break,
            },
            line = lines.next() => match line {
                None => break,
                Some(Err(code)) => vec![WireFrame::error(code, "", "")],
                Some(Ok(line)) if line.trim().is_empty() => Vec::new(),
                Some(Ok(line)) => match protocol::decode(&line) {
                    Err(code) => vec![WireFrame::error(code, "", "")],
                    Ok(frame) if frame.kind == FrameType::Event => {
                        match ui.on_event(&frame, ctx.clock.now_ms()) {
                            Ok(out) => {
                                for up in out.upstream {
                                    let _ = ctx.inbox.send(Inbound::Frame(conn, up));
                                }
                                out.downstream
                            }
                            Err(code) => vec![WireFrame::error(code, "", &frame.id)],
                        }
                    }
                    Ok(frame) => {
                        if ctx.inbox.send(Inbound::Frame(conn, frame)).is_err() {
                            break;
                        }
                        Vec::new()
                    }
                },
            },
        };
        let mut pending = downstream.into_iter();
        while let Some(frame) = pending.next() {
            if sink.send(frame.encode()).await.is_err() {
                unsent.push(frame);
                unsent.extend(pending);
                break 'conn;
            }
        }
    }

    // anything routed here but never written goes back to the dispatcher
    rx.close();
    while let Ok(out) = rx.try_recv() {
        if let Outbound::Frame(frame) = out {
            unsent.push(frame);
        }
    }
    let _ = sink.close().await;
    let _ = ctx.inbox.send(Inbound::Closed(conn, unsent));
    debug!(conn, "connection closed");
}
