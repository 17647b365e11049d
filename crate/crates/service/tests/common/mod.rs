//! Runs the service binary against a data directory.

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    /// Starts the binary on an ephemeral port and waits until it listens.
    pub fn start(data_dir: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_escalate-service"))
            .env("ESCALATE_ADDR", "127.0.0.1:0")
            .env("ESCALATE_DATA_DIR", data_dir)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("service starts");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).expect("service reports its address");
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line `{line}`"))
            .to_string();
        Server {
            child,
            base: format!("http://{addr}"),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// Sends SIGKILL and reaps the process.
    pub fn kill(mut self) {
        self.child.kill().expect("kill");
        self.child.wait().expect("reap");
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn week(t: u64) -> serde_json::Value {
    let x = t as f64;
    serde_json::json!({
        "t": t,
        "values": {
            "RadWebVisits": 6.0 + 0.4 * x,
            "PhysicalMeetsWithRadicals": 1.0 + 0.1 * x,
            "PublicThreatsMade": if t > 8 { 0.2 + 0.15 * x } else { 0.1 },
            "VisitsToTargetLocations": if t.is_multiple_of(3) { serde_json::Value::Null } else { serde_json::json!(0.05 * x) },
            "StatementOfIntent": 0.02 * x,
        }
    })
}
