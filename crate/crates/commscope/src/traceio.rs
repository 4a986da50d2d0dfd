//! The communication trace log format: one pipe-delimited record per line,
//!
//! ```text
//! #commscope-trace v1
//! iter|kind|bytes|group|phase|dur_us
//! ```
//!
//! `#` lines are comments, blank lines are ignored, `phase` and `dur_us`
//! may be empty. Kind names are case-insensitive and accept the aliases
//! training frameworks commonly log.

use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::summary::CommSummary;
use crate::types::{CollectiveEvent, CollectiveKind, Phase};

/// Version header emitted at the top of every serialized trace.
pub const TRACE_HEADER: &str = "#commscope-trace v1";

/// What a trace's `bytes` field means: the logical message payload (most
/// framework loggers) or the already-scaled wire volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolumeConvention {
    #[default]
    Logical,
    Wire,
}

impl std::fmt::Display for VolumeConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VolumeConvention::Logical => f.write_str("logical"),
            VolumeConvention::Wire => f.write_str("wire"),
        }
    }
}

impl FromStr for VolumeConvention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "logical" => Ok(VolumeConvention::Logical),
            "wire" => Ok(VolumeConvention::Wire),
            other => Err(format!("unknown volume convention `{other}`")),
        }
    }
}

/// One parsed trace line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub kind: CollectiveKind,
    pub payload_bytes: u64,
    pub group_size: u64,
    pub phase: Option<Phase>,
    pub duration_us: Option<f64>,
}

fn parse_line(line_no: usize, line: &str) -> Result<Option<TraceRecord>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(Error::MalformedLine {
            line: line_no,
            reason: format!("expected 6 pipe-delimited fields, got {}", fields.len()),
        });
    }

    let parse_u64 = |field: &'static str, token: &str| -> Result<u64> {
        token.parse::<u64>().map_err(|_| Error::NonNumericField {
            line: line_no,
            field,
            token: token.to_string(),
        })
    };

    let iteration = parse_u64("iter", fields[0])?;
    let kind = CollectiveKind::from_token(fields[1]).ok_or_else(|| Error::UnknownKind {
        line: line_no,
        token: fields[1].to_string(),
    })?;
    let payload_bytes = parse_u64("bytes", fields[2])?;
    let group_size = parse_u64("group", fields[3])?;
    if group_size < 1 {
        return Err(Error::MalformedLine {
            line: line_no,
            reason: "group size must be at least 1".to_string(),
        });
    }

    let phase = if fields[4].is_empty() {
        None
    } else {
        Some(Phase::from_token(fields[4]).ok_or_else(|| Error::MalformedLine {
            line: line_no,
            reason: format!("unknown phase `{}`", fields[4]),
        })?)
    };

    let duration_us = if fields[5].is_empty() {
        None
    } else {
        let dur = fields[5].parse::<f64>().ok().filter(|d| d.is_finite()).ok_or(
            Error::NonNumericField {
                line: line_no,
                field: "dur_us",
                token: fields[5].to_string(),
            },
        )?;
        if dur < 0.0 {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: format!("negative duration `{}`", fields[5]),
            });
        }
        Some(dur)
    };

    Ok(Some(TraceRecord {
        iteration,
        kind,
        payload_bytes,
        group_size,
        phase,
        duration_us,
    }))
}

/// Streaming trace parser. Every input line yields exactly one of: a
/// record, nothing (comment/blank), or a positioned error. Errors don't
/// stop the stream, so callers can collect all of them.
pub struct TraceParser<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Iterator for TraceParser<R> {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::Io(e))),
            };
            self.line_no += 1;
            match parse_line(self.line_no, &line) {
                Ok(Some(record)) => return Some(Ok(record)),
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Parses a trace stream line by line.
pub fn parse_trace<R: BufRead>(reader: R) -> TraceParser<R> {
    TraceParser {
        lines: reader.lines(),
        line_no: 0,
    }
}

/// Parses a whole trace, failing on the first malformed line.
pub fn parse_trace_str(input: &str) -> Result<Vec<TraceRecord>> {
    parse_trace(input.as_bytes()).collect()
}

/// Aggregates records into a summary, optionally keeping only one
/// iteration. Totals come from the logged payload bytes directly; the
/// formula-scaled wire view is carried alongside for comparisons under the
/// logical convention.
pub fn aggregate_trace(records: &[TraceRecord], iteration: Option<u64>) -> CommSummary {
    let mut summary = CommSummary::new(None);
    for rec in records {
        if iteration.is_some_and(|it| rec.iteration != it) {
            continue;
        }
        summary.record(rec.kind, rec.payload_bytes, rec.group_size, 1);
    }
    summary
}

/// Serializes events to the trace format, expanding repeats to one line per
/// call. Payloads are converted from elements with `elem_bytes`.
pub fn serialize_events(events: &[CollectiveEvent], iteration: u64, elem_bytes: u32) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for ev in events {
        let bytes = ev.payload_elems * elem_bytes as u64;
        for _ in 0..ev.repeat {
            let _ = writeln!(
                out,
                "{}|{}|{}|{}|{}|",
                iteration, ev.kind, bytes, ev.group_size, ev.phase
            );
        }
    }
    out
}
