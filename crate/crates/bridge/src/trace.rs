//! Newline-delimited JSON log of topic traffic: one
//! `{"t":<sim seconds>,"topic":...,"msg":{...}}` object per line.

use std::io::{self, Write};

use blockbot_core::msg::json_number;
use serde_json::{json, Value};

pub struct TraceSink {
    out: Box<dyn Write + Send>,
    failure: Option<io::Error>,
    lines: u64,
}

impl TraceSink {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        Self { out, failure: None, lines: 0 }
    }

    /// Appends one record. After the first I/O error the sink goes quiet
    /// and keeps the error for [`TraceSink::finish`].
    pub fn record(&mut self, nanos: u64, topic: &str, msg: &Value) {
        if self.failure.is_some() {
            return;
        }
        let line = json!({"t": seconds(nanos), "topic": topic, "msg": msg});
        if let Err(e) = writeln!(self.out, "{line}") {
            self.failure = Some(e);
        } else {
            self.lines += 1;
        }
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> io::Result<u64> {
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.lines)
    }
}

/// Nanoseconds as a JSON number of seconds (exact for whole steps).
pub fn seconds(nanos: u64) -> Value {
    json_number(nanos as f64 / 1e9).unwrap_or(Value::Null)
}
