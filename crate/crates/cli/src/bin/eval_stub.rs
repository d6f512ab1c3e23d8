//! Minimal evaluator speaking the hotsearch NDJSON protocol, for tests and
//! as a template for real trainers.

use std::io::{self, BufRead, Write};
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Answer every request with `--accuracy`.
    Echo,
    /// Answer with status error.
    Error,
    /// Answer with a line that is not JSON.
    Garbage,
    /// Wait `--sleep-ms` before each answer.
    Sleep,
    /// Send a handshake for another protocol.
    BadHandshake,
}

#[derive(Parser)]
#[command(version, about = "Stub accuracy evaluator")]
struct Args {
    #[arg(long, default_value_t = 0.5)]
    accuracy: f64,
    #[arg(long, value_enum, default_value_t = Mode::Echo)]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    sleep_ms: u64,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let protocol = if args.mode == Mode::BadHandshake {
        "other"
    } else {
        "hotsearch-eval"
    };
    writeln!(out, "{}", json!({ "protocol": protocol, "version": 1 }))?;
    out.flush()?;

    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(&line) {
            Err(e) => json!({ "status": "error", "message": format!("bad request: {e}") }).to_string(),
            Ok(req) => match args.mode {
                Mode::Echo | Mode::BadHandshake => json!({ "status": "ok", "accuracy": args.accuracy }).to_string(),
                Mode::Sleep => {
                    std::thread::sleep(Duration::from_millis(args.sleep_ms));
                    json!({ "status": "ok", "accuracy": args.accuracy }).to_string()
                }
                Mode::Error => json!({
                    "status": "error",
                    "message": format!("refusing {}", req["config_digest"].as_str().unwrap_or("?")),
                })
                .to_string(),
                Mode::Garbage => "this is not json".to_string(),
            },
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
