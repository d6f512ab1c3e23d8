use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::{EvalRequest, EvalResponse, Evaluator};
use crate::error::{Error, Result};

pub const HANDSHAKE_PROTOCOL: &str = "hotsearch-eval";
pub const HANDSHAKE_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Handshake {
    protocol: String,
    version: u32,
}

struct Channel {
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// A subprocess speaking newline-delimited JSON: one handshake line, then
/// one response line per request line. One request is in flight at a time.
pub struct ExternalEvaluator {
    child: Mutex<Child>,
    channel: Mutex<Channel>,
    timeout: Duration,
}

impl ExternalEvaluator {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty evaluator command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let eval = Self {
            child: Mutex::new(child),
            channel: Mutex::new(Channel { stdin, lines: rx }),
            timeout,
        };
        eval.handshake()?;
        Ok(eval)
    }

    fn handshake(&self) -> Result<()> {
        let channel = self.channel.lock().expect("channel lock");
        let raw = recv_line(&channel.lines, self.timeout)?;
        let hs: Handshake = serde_json::from_str(&raw).map_err(|e| protocol(format!("bad handshake: {e}"), &raw))?;
        if hs.protocol != HANDSHAKE_PROTOCOL || hs.version != HANDSHAKE_VERSION {
            return Err(protocol(
                format!(
                    "evaluator speaks {} v{}, expected {HANDSHAKE_PROTOCOL} v{HANDSHAKE_VERSION}",
                    hs.protocol, hs.version
                ),
                &raw,
            ));
        }
        Ok(())
    }
}

fn protocol(message: String, raw: &str) -> Error {
    log::error!("evaluator protocol error: {message}; raw line: {raw}");
    Error::Protocol {
        message,
        raw: raw.to_string(),
    }
}

fn recv_line(lines: &Receiver<std::io::Result<String>>, timeout: Duration) -> Result<String> {
    match lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Ok(line),
        Ok(Err(e)) => Err(Error::Evaluator(format!("reading evaluator output: {e}"))),
        Err(RecvTimeoutError::Timeout) => Err(Error::Evaluator(format!(
            "no evaluator response within {} s",
            timeout.as_secs_f64()
        ))),
        Err(RecvTimeoutError::Disconnected) => Err(Error::Evaluator("evaluator closed its output".into())),
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResponse> {
        let mut channel = self.channel.lock().expect("channel lock");
        let mut line = serde_json::to_string(request).expect("requests serialize");
        line.push('\n');
        channel
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| channel.stdin.flush())
            .map_err(|e| Error::Evaluator(format!("writing to evaluator: {e}")))?;
        let raw = recv_line(&channel.lines, self.timeout)?;
        let response: EvalResponse =
            serde_json::from_str(&raw).map_err(|e| protocol(format!("malformed response: {e}"), &raw))?;
        response.validate().map_err(|m| protocol(m, &raw))?;
        Ok(response)
    }

    fn supports_concurrency(&self) -> bool {
        false
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::evalbridge::EvalStatus;
    use crate::perfmodel::AcceleratorDesign;
    use crate::searchspace::CompressionConfig;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    const HELLO: &str = r#"echo '{"protocol":"hotsearch-eval","version":1}'"#;

    fn request() -> EvalRequest {
        let cfg = CompressionConfig {
            model: "tinynet".into(),
            layers: vec![],
            cuts: vec![],
            design: AcceleratorDesign::with_lanes(1, 1, 1, 1, 0, (1, 1, 1), 16),
        };
        EvalRequest::new(&cfg, 10)
    }

    #[test]
    fn round_trip() {
        let script = format!(r#"{HELLO}; while read l; do echo '{{"accuracy":0.61,"status":"ok"}}'; done"#);
        let e = ExternalEvaluator::spawn(&sh(&script), Duration::from_secs(5)).unwrap();
        assert!(!e.supports_concurrency());
        for _ in 0..3 {
            assert_eq!(e.evaluate(&request()).unwrap(), EvalResponse::ok(0.61));
        }
    }

    #[test]
    fn error_status_passes_through() {
        let script = format!(r#"{HELLO}; while read l; do echo '{{"status":"error","message":"oom"}}'; done"#);
        let e = ExternalEvaluator::spawn(&sh(&script), Duration::from_secs(5)).unwrap();
        let r = e.evaluate(&request()).unwrap();
        assert_eq!(r.status, EvalStatus::Error);
        assert_eq!(r.message.as_deref(), Some("oom"));
    }

    #[test]
    fn garbage_is_protocol_error() {
        let script = format!(r#"{HELLO}; while read l; do echo 'not json'; done"#);
        let e = ExternalEvaluator::spawn(&sh(&script), Duration::from_secs(5)).unwrap();
        match e.evaluate(&request()) {
            Err(Error::Protocol { raw, .. }) => assert_eq!(raw, "not json"),
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn bad_handshake_and_timeout() {
        let wrong = r#"echo '{"protocol":"other","version":1}'; cat"#;
        assert!(matches!(
            ExternalEvaluator::spawn(&sh(wrong), Duration::from_secs(5)),
            Err(Error::Protocol { .. })
        ));
        let slow = format!("{HELLO}; sleep 5");
        let mut e = ExternalEvaluator::spawn(&sh(&slow), Duration::from_secs(5)).unwrap();
        e.timeout = Duration::from_millis(200);
        assert!(matches!(e.evaluate(&request()), Err(Error::Evaluator(_))));
    }
}
