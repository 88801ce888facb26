//! Text format for labeled example sets.
//!
//! ```text
//! # dap-examples v1
//! # task=braking
//! # horizon=5
//! # window=50
//! # stride=5
//! # seed=7
//! # schema=3f0c9a...
//! # features=50
//! # classes=negative;braking
//! session,end_time,label,time_to_event,window
//! session_003,61.4,1,3.5,0.01;0.2;...
//! ```
//!
//! Windows are stored row-major (frame by frame). Negatives leave
//! `time_to_event` empty.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::examples::{Example, TaskKind};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

const MAGIC: &str = "# dap-examples v1";
const COLUMNS: &str = "session,end_time,label,time_to_event,window";

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSetHeader {
    pub task: TaskKind,
    pub horizon_s: f64,
    pub window: usize,
    pub stride: usize,
    pub seed: u64,
    pub schema_hash: String,
    pub features: usize,
    pub class_names: Vec<String>,
}

impl ExampleSetHeader {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub header: ExampleSetHeader,
    pub examples: Vec<Example>,
}

pub fn write_examples(path: impl AsRef<Path>, header: &ExampleSetHeader, examples: &[Example]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "# task={}", header.task)?;
    writeln!(out, "# horizon={}", header.horizon_s)?;
    writeln!(out, "# window={}", header.window)?;
    writeln!(out, "# stride={}", header.stride)?;
    writeln!(out, "# seed={}", header.seed)?;
    writeln!(out, "# schema={}", header.schema_hash)?;
    writeln!(out, "# features={}", header.features)?;
    writeln!(out, "# classes={}", header.class_names.join(";"))?;
    writeln!(out, "{COLUMNS}")?;
    let mut line = String::new();
    for ex in examples {
        if ex.window.shape() != (header.window, header.features) {
            return Err(Error::Shape {
                op: "write_examples",
                expected: format!("{}x{}", header.window, header.features),
                got: format!("{}x{}", ex.window.rows(), ex.window.cols()),
            });
        }
        line.clear();
        let _ = write!(line, "{},{},{},", ex.session_id, ex.end_time, ex.label);
        if let Some(tte) = ex.time_to_event {
            let _ = write!(line, "{tte}");
        }
        line.push(',');
        for (i, v) in ex.window.as_slice().iter().enumerate() {
            if i > 0 {
                line.push(';');
            }
            let _ = write!(line, "{v}");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_examples(path: impl AsRef<Path>) -> Result<ExampleSet> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, reason: String| Error::Parse { line: line + 1, reason };
    match lines.next() {
        Some((_, Ok(l))) if l.trim_end() == MAGIC => {}
        Some((i, Ok(l))) => return Err(parse_err(i, format!("expected `{MAGIC}`, found `{l}`"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(parse_err(0, "empty file".into())),
    }

    let mut fields: std::collections::HashMap<String, String> = Default::default();
    let mut examples = Vec::new();
    let mut header: Option<ExampleSetHeader> = None;

    for (i, line) in lines {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if header.is_none() {
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| parse_err(i, format!("malformed header `{line}`")))?;
                fields.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if line != COLUMNS {
                return Err(parse_err(i, format!("expected column line `{COLUMNS}`")));
            }
            header = Some(parse_header(&fields).map_err(|reason| parse_err(i, reason))?);
            continue;
        }
        let h = header.as_ref().expect("header parsed above");
        examples.push(parse_record(line, h).map_err(|reason| parse_err(i, reason))?);
    }
    let header = header.ok_or_else(|| parse_err(0, "missing column line".into()))?;
    Ok(ExampleSet { header, examples })
}

fn parse_header(fields: &std::collections::HashMap<String, String>) -> std::result::Result<ExampleSetHeader, String> {
    let get = |k: &str| fields.get(k).ok_or_else(|| format!("missing header `{k}`"));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        v.parse().map_err(|e| format!("header `{k}`: {e}"))
    }
    Ok(ExampleSetHeader {
        task: get("task")?.parse().map_err(|e: Error| e.to_string())?,
        horizon_s: num("horizon", get("horizon")?)?,
        window: num("window", get("window")?)?,
        stride: num("stride", get("stride")?)?,
        seed: num("seed", get("seed")?)?,
        schema_hash: get("schema")?.clone(),
        features: num("features", get("features")?)?,
        class_names: get("classes")?.split(';').map(str::to_string).collect(),
    })
}

fn parse_record(line: &str, h: &ExampleSetHeader) -> std::result::Result<Example, String> {
    let mut parts = line.splitn(5, ',');
    let mut next = |what: &str| parts.next().ok_or_else(|| format!("missing field `{what}`"));
    let session_id = next("session")?.to_string();
    let end_time: f64 = next("end_time")?.parse().map_err(|e| format!("end_time: {e}"))?;
    let label: usize = next("label")?.parse().map_err(|e| format!("label: {e}"))?;
    let tte = next("time_to_event")?;
    let time_to_event = if tte.is_empty() {
        None
    } else {
        Some(tte.parse::<f64>().map_err(|e| format!("time_to_event: {e}"))?)
    };
    let values = next("window")?
        .split(';')
        .map(|v| v.parse::<f64>().map_err(|e| format!("window value `{v}`: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if values.len() != h.window * h.features {
        return Err(format!(
            "window holds {} values, expected {}x{}",
            values.len(),
            h.window,
            h.features
        ));
    }
    if label >= h.num_classes() {
        return Err(format!("label {label} outside {} classes", h.num_classes()));
    }
    if (label == 0) != time_to_event.is_none() {
        return Err("time_to_event must be present exactly for positives".into());
    }
    let window = Matrix::new(h.window, h.features, values).map_err(|e| e.to_string())?;
    Ok(Example {
        window,
        label,
        time_to_event,
        session_id,
        end_time,
    })
}
