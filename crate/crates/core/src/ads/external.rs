//! Subprocess policies: one request line per control tick on stdin
//! (`<image path> <state line>`), one `throttle steering brake` reply on
//! stdout.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::plant::{ControlCommand, VehicleState};
use crate::sensing::io::write_ppm;
use crate::sensing::RgbImage;

use super::e2e::state_line;

pub const DEFAULT_POLICY_TIMEOUT: Duration = Duration::from_millis(45);

pub struct ExternalPolicy {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<String>,
    dir: tempfile::TempDir,
    timeout: Duration,
    counter: u64,
}

/// Parse a reply line into a range-checked command.
pub fn parse_reply(line: &str, timestamp: f64) -> Result<ControlCommand> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Protocol(format!("bad policy reply {line:?}: {e}")))?;
    let [throttle, steering, brake] = values[..] else {
        return Err(Error::Protocol(format!("policy reply needs 3 fields, got {line:?}")));
    };
    ControlCommand::new(throttle, steering, brake, timestamp)
        .map_err(|e| Error::Protocol(e.to_string()))
}

impl ExternalPolicy {
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("empty external policy command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Startup(format!("cannot start policy {prog:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            replies: rx,
            dir: tempfile::tempdir()?,
            timeout,
            counter: 0,
        })
    }

    /// Ask the policy for a command. A late reply yields a protocol error
    /// and is discarded when it eventually arrives.
    pub fn query(&mut self, image: &RgbImage, state: &VehicleState) -> Result<ControlCommand> {
        while self.replies.try_recv().is_ok() {}
        let path: PathBuf = self.dir.path().join(format!("frame_{:06}.ppm", self.counter));
        self.counter += 1;
        write_ppm(&path, image)?;
        writeln!(self.stdin, "{} {}", path.display(), state_line(state))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("policy pipe closed: {e}")))?;
        let reply = match self.replies.recv_timeout(self.timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => return Err(Error::Protocol("policy timeout".into())),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol("policy exited".into()))
            }
        };
        let _ = std::fs::remove_file(&path);
        parse_reply(&reply, state.pose.timestamp)
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn parses_replies() {
        let c = parse_reply("0.5 -0.25 0", 2.0).unwrap();
        assert_eq!((c.throttle, c.steering, c.brake, c.timestamp), (0.5, -0.25, 0.0, 2.0));
        assert!(parse_reply("0.5 0.1", 0.0).is_err());
        assert!(parse_reply("2 0 0", 0.0).is_err());
        assert!(parse_reply("a b c", 0.0).is_err());
    }

    #[test]
    fn round_trip_through_subprocess() {
        let mut p = ExternalPolicy::spawn(
            &sh("while read path rest; do test -f \"$path\" && echo '0.4 0.1 0'; done"),
            Duration::from_secs(5),
        )
        .unwrap();
        let c = p.query(&RgbImage::filled(4, 3, [0; 3]), &VehicleState::default()).unwrap();
        assert_eq!((c.throttle, c.steering), (0.4, 0.1));
    }

    #[test]
    fn silent_policy_times_out() {
        let mut p = ExternalPolicy::spawn(&sh("while read l; do :; done"), DEFAULT_POLICY_TIMEOUT).unwrap();
        let r = p.query(&RgbImage::filled(4, 3, [0; 3]), &VehicleState::default());
        assert_eq!(r, Err(Error::Protocol("policy timeout".into())));
    }

    #[test]
    fn missing_program_is_startup_error() {
        let r = ExternalPolicy::spawn(&["/nonexistent/policy".into()], DEFAULT_POLICY_TIMEOUT);
        assert!(matches!(r, Err(Error::Startup(_))));
    }
}
