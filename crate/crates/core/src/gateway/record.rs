//! Captured-request records and the NDJSON log they are appended to.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Write};
use std::net::IpAddr;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use super::policy::PolicyAction;

/// Method name logged for bodies or request objects that could not be interpreted.
pub const PARSE_ERROR_METHOD: &str = "<parse-error>";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(rename = "ts", with = "ts_millis")]
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "ip")]
    pub source_ip: IpAddr,
    #[serde(rename = "port")]
    pub source_port: u16,
    pub method: String,
    /// Params exactly as received, minus insignificant whitespace.
    #[serde(rename = "params")]
    pub params_raw: Box<RawValue>,
    #[serde(rename = "id")]
    pub request_id: Box<RawValue>,
    pub action: PolicyAction,
    #[serde(rename = "response")]
    pub response_summary: String,
}

/// RFC 3339 UTC timestamps with millisecond precision and a `Z` suffix.
pub mod ts_millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

impl PartialEq for LogRecord {
    fn eq(&self, other: &Self) -> bool {
        self.timestamp == other.timestamp
            && self.source_ip == other.source_ip
            && self.source_port == other.source_port
            && self.method == other.method
            && self.params_raw.get() == other.params_raw.get()
            && self.request_id.get() == other.request_id.get()
            && self.action == other.action
            && self.response_summary == other.response_summary
    }
}

impl LogRecord {
    /// Params as a JSON value; `None` when they do not fit `serde_json::Value` (e.g. huge numbers).
    pub fn params(&self) -> Option<Value> {
        serde_json::from_str(self.params_raw.get()).ok()
    }

    pub fn id(&self) -> Value {
        serde_json::from_str(self.request_id.get()).unwrap_or(Value::Null)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

/// Strips whitespace outside string literals from already-valid JSON text.
pub fn minify_json(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for c in text.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
            out.push(c);
        } else if !c.is_whitespace() {
            out.push(c);
        }
    }
    out
}

pub fn raw_from_value(v: &Value) -> Box<RawValue> {
    serde_json::value::to_raw_value(v).expect("Value always serializes")
}

pub fn raw_minified(raw: &RawValue) -> Box<RawValue> {
    RawValue::from_string(minify_json(raw.get())).expect("minifying valid JSON keeps it valid")
}

/// Append-only NDJSON log. One mutex-guarded writer serializes all appends; each record is
/// written as a single `write_all` of one line and flushed before `append` returns.
pub struct NdjsonLog {
    inner: Mutex<LogState>,
}

struct LogState {
    file: File,
    last_ts: Option<DateTime<Utc>>,
    written: u64,
}

impl NdjsonLog {
    /// Opens (creating if needed) for append. Fails if the path is not writable.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(NdjsonLog {
            inner: Mutex::new(LogState {
                file,
                last_ts: None,
                written: 0,
            }),
        })
    }

    /// Appends one record. Timestamps are clamped so the file stays non-decreasing even
    /// when concurrent handlers finish out of order.
    pub fn append(&self, record: &LogRecord) -> io::Result<()> {
        let mut state = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let mut record = record.clone();
        if let Some(last) = state.last_ts {
            if record.timestamp < last {
                record.timestamp = last;
            }
        }
        let mut line = record.to_line();
        line.push('\n');
        state.file.write_all(line.as_bytes())?;
        state.file.flush()?;
        state.last_ts = Some(record.timestamp);
        state.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).written
    }
}

/// Outcome of reading a log: the records plus lines that failed to parse.
#[derive(Debug, Default)]
pub struct ReadLog {
    pub records: Vec<LogRecord>,
    pub malformed: Vec<(usize, String)>,
}

pub fn read_log<R: BufRead>(reader: R) -> io::Result<ReadLog> {
    let mut out = ReadLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(&line) {
            Ok(r) => out.records.push(r),
            Err(e) => out.malformed.push((idx + 1, e.to_string())),
        }
    }
    Ok(out)
}
