//! Command-level behaviour: exit codes, replay output, bot checks and config
//! precedence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use glassmsg_cli::config::{build, Config, Layer};
use glassmsg_cli::{bots_check, main_with_args, BotsCheckArgs};
use glassmsg_core::effect::read_effect_log;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn code(args: &[&str]) -> ExitCode {
    main_with_args(std::iter::once("glassmsg").chain(args.iter().copied()))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&[]), ExitCode::from(2));
    assert_eq!(code(&["frobnicate"]), ExitCode::from(2));
    assert_eq!(code(&["replay"]), ExitCode::from(2));
    assert_eq!(code(&["serve", "--port", "seventy"]), ExitCode::from(2));
    assert_eq!(code(&["--help"]), ExitCode::from(0));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(code(&["replay", "--trace", missing.to_str().unwrap()]), ExitCode::from(3));
    assert_eq!(code(&["bots-check", "--bots", missing.to_str().unwrap()]), ExitCode::from(3));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"name":"Peter","rules":[{"trigger":"any","reply_bodies":[]}]}]"#).unwrap();
    assert_eq!(code(&["bots-check", "--bots", bad.to_str().unwrap()]), ExitCode::from(3));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"prot": 1}"#).unwrap();
    assert_eq!(code(&["serve", "--config", cfg.to_str().unwrap()]), ExitCode::from(3));
}

#[test]
fn serve_reports_a_busy_port() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(code(&["serve", "--port", &port, "--ws-port", "0"]), ExitCode::from(3));
}

#[test]
fn client_without_server_exits_3() {
    let free = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = free.local_addr().unwrap().port().to_string();
    drop(free);
    let trace = fixture("peter.trace.jsonl");
    assert_eq!(
        code(&["client", "--port", &port, "--trace", trace.to_str().unwrap()]),
        ExitCode::from(3)
    );
}

#[test]
fn replay_writes_report_and_effects() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let effects = dir.path().join("effects.jsonl");
    let trace = core_fixture("reply_flow.trace.jsonl");
    let rc = code(&[
        "replay",
        "--trace",
        trace.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--effects",
        effects.to_str().unwrap(),
    ]);
    assert_eq!(rc, ExitCode::from(0));

    let written = std::fs::read_to_string(&effects).unwrap();
    let golden = std::fs::read_to_string(core_fixture("reply_flow.effects.jsonl")).unwrap();
    assert_eq!(written, golden);
    assert!(read_effect_log(written.as_bytes()).is_ok());

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["messages_sent"], 1);
    assert_eq!(json["response_times_ms"], serde_json::json!([12000]));
}

#[test]
fn replay_gap_flag_changes_the_stop_time() {
    let dir = tempfile::tempdir().unwrap();
    let effects = dir.path().join("effects.jsonl");
    let trace = core_fixture("reply_flow.trace.jsonl");
    let rc = code(&[
        "replay",
        "--trace",
        trace.to_str().unwrap(),
        "--effects",
        effects.to_str().unwrap(),
        "--silence-gap-ms",
        "2500",
    ]);
    assert_eq!(rc, ExitCode::from(0));
    let log = read_effect_log(std::fs::File::open(&effects).map(std::io::BufReader::new).unwrap()).unwrap();
    let stops: Vec<u64> = log
        .iter()
        .filter(|r| r.effect == glassmsg_core::Effect::StopDictationFeedback)
        .map(|r| r.t)
        .collect();
    assert_eq!(stops, vec![13_000]);
}

#[test]
fn bots_check_lists_and_probes() {
    let mut out = Vec::new();
    let args = BotsCheckArgs {
        bots_path: fixture("peter.bots.json"),
        seed: Some(42),
        probe: Some("Where are you?".into()),
    };
    bots_check(&args, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text, "Peter: 2 rule(s), seed 42\n  -> \"At the cafe\" after 500 ms\n");
    assert_eq!(
        code(&["bots-check", "--bots", fixture("peter.bots.json").to_str().unwrap()]),
        ExitCode::from(0)
    );
}

/// Every field is taken from the flag if set, else the file, else the default.
#[test]
fn flags_over_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let file_layer = Layer {
        host: Some("10.0.0.1".into()),
        port: Some(1001),
        ws_port: Some(1002),
        bots_path: Some("file-bots.json".into()),
        log_path: Some("file-log.jsonl".into()),
        silence_gap_ms: Some(1003),
        seed: Some(1004),
        history_depth: Some(1005),
    };
    let flag_layer = Layer {
        host: Some("10.0.0.2".into()),
        port: Some(2001),
        ws_port: Some(2002),
        bots_path: Some("flag-bots.json".into()),
        log_path: Some("flag-log.jsonl".into()),
        silence_gap_ms: Some(2003),
        seed: Some(2004),
        history_depth: Some(2005),
    };
    let d = Config::default();
    const FIELDS: usize = 8;
    // each field independently: 0 = neither, 1 = file only, 2 = flag only, 3 = both
    for combo in 0..4usize.pow(FIELDS as u32) {
        let choice = |i: usize| (combo / 4usize.pow(i as u32)) % 4;
        let pick = |i: usize, src: &Layer, bit: usize| -> Layer {
            if choice(i) & bit == 0 {
                return Layer::default();
            }
            let mut l = Layer::default();
            match i {
                0 => l.host = src.host.clone(),
                1 => l.port = src.port,
                2 => l.ws_port = src.ws_port,
                3 => l.bots_path = src.bots_path.clone(),
                4 => l.log_path = src.log_path.clone(),
                5 => l.silence_gap_ms = src.silence_gap_ms,
                6 => l.seed = src.seed,
                _ => l.history_depth = src.history_depth,
            }
            l
        };
        let mut file = Layer::default();
        let mut flags = Layer::default();
        for i in 0..FIELDS {
            file = file.over(pick(i, &file_layer, 1));
            flags = flags.over(pick(i, &flag_layer, 2));
        }
        let got = if combo % 4099 == 0 {
            let path = dir.path().join("cfg.json");
            std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
            build(flags, Some(&path)).unwrap()
        } else {
            flags.over(file).resolve()
        };

        let sel = |i: usize| choice(i).min(2);
        assert_eq!(got.host, ["127.0.0.1", "10.0.0.1", "10.0.0.2"][sel(0)]);
        assert_eq!(got.port, [d.port, 1001, 2001][sel(1)]);
        assert_eq!(got.ws_port, [d.ws_port, 1002, 2002][sel(2)]);
        assert_eq!(got.bots_path.as_deref().and_then(Path::to_str), [None, Some("file-bots.json"), Some("flag-bots.json")][sel(3)]);
        assert_eq!(got.log_path.as_deref().and_then(Path::to_str), [None, Some("file-log.jsonl"), Some("flag-log.jsonl")][sel(4)]);
        assert_eq!(got.silence_gap_ms, [d.silence_gap_ms, 1003, 2003][sel(5)]);
        assert_eq!(got.seed, [None, Some(1004), Some(2004)][sel(6)]);
        assert_eq!(got.history_depth, [d.history_depth, 1005, 2005][sel(7)]);
    }
}

#[test]
fn no_config_file_means_flags_over_defaults() {
    let got = build(
        Layer {
            port: Some(9),
            ..Layer::default()
        },
        None,
    )
    .unwrap();
    assert_eq!(got, Config { port: 9, ..Config::default() });
}
