//! `glassmsg` command line: `serve`, `replay`, `client` and `bots-check`.
//!
//! Exit codes: 0 on success, 2 for bad usage, 3 for runtime failures.

pub mod config;
pub mod scripted;

use std::io::{BufReader, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use glassmsg_core::effect::write_effect_log;
use glassmsg_core::replay::{replay_with, ReplayOptions};
use glassmsg_core::{InputTrace, MetricsReport, SessionConfig};
use glassmsg_server::bot::{load_scripts, BotScript};
use glassmsg_server::{ServerConfig, SystemClock, WireFrame};

use crate::config::{Config, Layer};
use crate::scripted::{run_scripted_client, ClientOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "glassmsg", version, about = "Heads-up messaging: chat server, replay and scripted clients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the chat server until interrupted.
    Serve(ConfigArgs),
    /// Replay a trace through a fresh session and score it.
    Replay(ReplayArgs),
    /// Play a trace against a running server.
    Client(ClientArgs),
    /// Validate a bot script file and optionally probe it with a message.
    BotsCheck(BotsCheckArgs),
}

/// Settings shared by the server and the scripted client.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub ws_port: Option<u16>,
    /// Bot script file (JSON array of scripts).
    #[arg(long = "bots")]
    pub bots_path: Option<PathBuf>,
    /// Conversation log (JSONL); recovered on startup.
    #[arg(long = "log")]
    pub log_path: Option<PathBuf>,
    #[arg(long)]
    pub silence_gap_ms: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub history_depth: Option<usize>,
}

impl ConfigArgs {
    pub fn layer(&self) -> Layer {
        Layer {
            host: self.host.clone(),
            port: self.port,
            ws_port: self.ws_port,
            bots_path: self.bots_path.clone(),
            log_path: self.log_path.clone(),
            silence_gap_ms: self.silence_gap_ms,
            seed: self.seed,
            history_depth: self.history_depth,
        }
    }

    pub fn resolve(&self) -> anyhow::Result<Config> {
        Ok(config::build(self.layer(), self.config.as_deref())?)
    }
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Where to write the effect log (JSONL).
    #[arg(long)]
    pub effects: Option<PathBuf>,
    /// Overrides the trace header's silence gap.
    #[arg(long)]
    pub silence_gap_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClientArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub trace: PathBuf,
    /// Name to register as.
    #[arg(long, default_value = glassmsg_core::SELF_NAME)]
    pub name: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub effects: Option<PathBuf>,
    /// Keep listening this long after the last event.
    #[arg(long, default_value_t = 1000)]
    pub linger_ms: u64,
}

#[derive(Debug, Args)]
pub struct BotsCheckArgs {
    #[arg(long = "bots")]
    pub bots_path: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Message body to send to every bot.
    #[arg(long)]
    pub probe: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(args) => serve(&args.resolve()?),
        Command::Replay(args) => replay_cmd(&args),
        Command::Client(args) => client_cmd(&args),
        Command::BotsCheck(args) => bots_check(&args, &mut std::io::stdout()),
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

pub fn server_config(cfg: &Config) -> anyhow::Result<ServerConfig> {
    let bots = match &cfg.bots_path {
        Some(path) => load_scripts(path).with_context(|| format!("loading bots from {}", path.display()))?,
        None => Vec::new(),
    };
    Ok(ServerConfig {
        host: cfg.host.clone(),
        port: cfg.port,
        ws_port: Some(cfg.ws_port),
        bots,
        log_path: cfg.log_path.clone(),
        seed: cfg.seed,
        history_depth: cfg.history_depth,
        session: SessionConfig {
            silence_gap_ms: cfg.silence_gap_ms,
            ..SessionConfig::default()
        },
    })
}

fn serve(cfg: &Config) -> anyhow::Result<()> {
    let server_cfg = server_config(cfg)?;
    runtime()?.block_on(async {
        let server = glassmsg_server::start(server_cfg, Arc::new(SystemClock)).await?;
        println!(
            "listening on {} (browser: ws://{}{})",
            server.tcp_addr(),
            server.ws_addr().map(|a| a.to_string()).unwrap_or_default(),
            glassmsg_server::server::WS_PATH
        );
        tokio::signal::ctrl_c().await.context("waiting for interrupt")?;
        server.shutdown().await;
        Ok(())
    })
}

fn read_trace(path: &Path) -> anyhow::Result<InputTrace> {
    let file = std::fs::File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    InputTrace::read(BufReader::new(file)).with_context(|| format!("reading trace {}", path.display()))
}

fn write_outputs(
    report: &MetricsReport,
    effects: &[glassmsg_core::EffectRecord],
    report_path: Option<&Path>,
    effects_path: Option<&Path>,
) -> anyhow::Result<()> {
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(report)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = effects_path {
        let file = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_effect_log(std::io::BufWriter::new(file), effects)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn replay_cmd(args: &ReplayArgs) -> anyhow::Result<()> {
    let trace = read_trace(&args.trace)?;
    let outcome = replay_with(
        &trace,
        ReplayOptions {
            silence_gap_ms: args.silence_gap_ms,
        },
    )?;
    write_outputs(&outcome.report, &outcome.effects, args.report.as_deref(), args.effects.as_deref())
}

fn resolve_addr(host: &str, port: u16) -> anyhow::Result<SocketAddr> {
    (host, port)
        .to_socket_addrs()
        .with_context(|| format!("resolving {host}:{port}"))?
        .next()
        .with_context(|| format!("no address for {host}:{port}"))
}

fn client_cmd(args: &ClientArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    let trace = read_trace(&args.trace)?;
    let addr = resolve_addr(&cfg.host, cfg.port)?;
    let options = ClientOptions {
        name: args.name.clone(),
        silence_gap_ms: client_silence_gap(&args.config)?,
        linger_ms: args.linger_ms,
    };
    let run = runtime()?.block_on(run_scripted_client(addr, &trace, &options))?;
    for err in &run.errors {
        eprintln!("server error: {} (id {:?})", err.body, err.id);
    }
    write_outputs(&run.report, &run.effects, args.report.as_deref(), args.effects.as_deref())
}

/// Flag, then config file, then the trace header.
fn client_silence_gap(args: &ConfigArgs) -> anyhow::Result<Option<u64>> {
    if args.silence_gap_ms.is_some() {
        return Ok(args.silence_gap_ms);
    }
    Ok(match &args.config {
        Some(path) => config::load_layer(path)?.silence_gap_ms,
        None => None,
    })
}

/// Prints one line per bot and, with `--probe`, the reply each would send.
pub fn bots_check(args: &BotsCheckArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut scripts: Vec<BotScript> =
        load_scripts(&args.bots_path).with_context(|| format!("checking {}", args.bots_path.display()))?;
    if scripts.is_empty() {
        bail!("{} defines no bots", args.bots_path.display());
    }
    if let Some(seed) = args.seed {
        scripts.iter_mut().for_each(|s| s.rng_seed = seed);
    }
    for script in &scripts {
        writeln!(out, "{}: {} rule(s), seed {}", script.name, script.rules.len(), script.rng_seed)?;
        if let Some(body) = &args.probe {
            let probe = WireFrame {
                seq: 1,
                ..WireFrame::msg(glassmsg_core::SELF_NAME, script.name.clone(), body.clone())
            };
            match script.step(&probe, 0).first() {
                Some(reply) => writeln!(out, "  -> {:?} after {} ms", reply.frame.body, reply.due_ms)?,
                None => writeln!(out, "  -> no reply")?,
            }
        }
    }
    Ok(())
}
