//! Raw per-channel sensor logs and their text file format.
//!
//! ```text
//! # dap-session v1
//! # schema=dap-features-v1
//! # session=session_000
//! # duration=600
//! channel,timestamp,value
//! brake_pressure,0,0.0132
//! ...
//! ```
//!
//! Factor channels carry integer codes.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::schema::{ChannelKind, FeatureSchema};
use crate::error::{Error, Result};

const MAGIC: &str = "# dap-session v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLog {
    pub name: String,
    pub samples: Vec<Sample>,
}

/// One recording session at native sensor rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub session_id: String,
    pub schema_id: String,
    pub duration: f64,
    pub channels: Vec<ChannelLog>,
}

impl SensorLog {
    pub fn channel(&self, name: &str) -> Option<&ChannelLog> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Timestamps must be strictly increasing within every channel.
    pub fn validate(&self) -> Result<()> {
        if self.session_id.is_empty() || self.session_id.contains([',', '\n']) {
            return Err(Error::InvalidConfig(format!("bad session id {:?}", self.session_id)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("session duration must be > 0, got {}", self.duration)));
        }
        for ch in &self.channels {
            if let Some(w) = ch.samples.windows(2).find(|w| w[1].t <= w[0].t) {
                return Err(Error::InvalidConfig(format!(
                    "channel `{}`: timestamps not strictly increasing at t={}",
                    ch.name, w[1].t
                )));
            }
            if ch.samples.iter().any(|s| !s.t.is_finite() || !s.value.is_finite()) {
                return Err(Error::InvalidConfig(format!("channel `{}` holds non-finite samples", ch.name)));
            }
        }
        Ok(())
    }
}

pub fn write_session(log: &SensorLog, schema: &FeatureSchema, path: impl AsRef<Path>) -> Result<()> {
    log.validate()?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "# schema={}", log.schema_id)?;
    writeln!(out, "# session={}", log.session_id)?;
    writeln!(out, "# duration={}", log.duration)?;
    writeln!(out, "channel,timestamp,value")?;
    let mut line = String::new();
    for ch in &log.channels {
        let factor = schema
            .index_of(&ch.name)
            .map_or(false, |i| schema.channels[i].kind == ChannelKind::Factor);
        for s in &ch.samples {
            line.clear();
            if factor {
                let _ = writeln!(line, "{},{},{}", ch.name, s.t, s.value.round() as i64);
            } else {
                let _ = writeln!(line, "{},{},{}", ch.name, s.t, s.value);
            }
            out.write_all(line.as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a session file. Channels appear in schema order; channels of the
/// schema absent from the file are kept as empty logs so the resampler can
/// name them.
pub fn read_session(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<SensorLog> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, reason: String| Error::Parse { line: line + 1, reason };

    match lines.next() {
        Some((_, Ok(l))) if l.trim_end() == MAGIC => {}
        Some((i, Ok(l))) => return Err(parse_err(i, format!("expected `{MAGIC}`, found `{l}`"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(parse_err(0, "empty file".into())),
    }

    let mut schema_id = None;
    let mut session_id = None;
    let mut duration = None;
    let mut channels: Vec<ChannelLog> = schema
        .channels
        .iter()
        .map(|c| ChannelLog {
            name: c.name.clone(),
            samples: Vec::new(),
        })
        .collect();

    for (i, line) in lines {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() || line == "channel,timestamp,value" {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let (key, value) = header
                .trim()
                .split_once('=')
                .ok_or_else(|| parse_err(i, format!("malformed header `{line}`")))?;
            match key.trim() {
                "schema" => schema_id = Some(value.trim().to_string()),
                "session" => session_id = Some(value.trim().to_string()),
                "duration" => {
                    duration = Some(
                        value
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| parse_err(i, format!("duration: {e}")))?,
                    )
                }
                _ => {}
            }
            continue;
        }
        let mut fields = line.split(',');
        let (Some(name), Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(i, format!("expected `channel,timestamp,value`, found `{line}`")));
        };
        let idx = schema
            .index_of(name)
            .ok_or_else(|| parse_err(i, format!("unknown channel `{name}`")))?;
        let t: f64 = t.parse().map_err(|e| parse_err(i, format!("timestamp: {e}")))?;
        let value: f64 = match schema.channels[idx].kind {
            ChannelKind::Factor => v
                .parse::<i64>()
                .map_err(|e| parse_err(i, format!("factor value `{v}`: {e}")))? as f64,
            ChannelKind::Float => v.parse().map_err(|e| parse_err(i, format!("value: {e}")))?,
        };
        if !t.is_finite() || !value.is_finite() {
            return Err(parse_err(i, "non-finite sample".into()));
        }
        channels[idx].samples.push(Sample { t, value });
    }

    let schema_id = schema_id.ok_or_else(|| parse_err(0, "missing `# schema=` header".into()))?;
    if schema_id != schema.id {
        return Err(Error::SchemaMismatch(format!(
            "session declares schema `{schema_id}`, expected `{}`",
            schema.id
        )));
    }
    let log = SensorLog {
        session_id: session_id.ok_or_else(|| parse_err(0, "missing `# session=` header".into()))?,
        schema_id,
        duration: duration.ok_or_else(|| parse_err(0, "missing `# duration=` header".into()))?,
        channels,
    };
    log.validate()?;
    Ok(log)
}
