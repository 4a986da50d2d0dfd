//! Reporting layer: theory-vs-observed comparisons, parameter sweeps,
//! latency/bandwidth cost estimates, and deterministic table/CSV/JSON
//! rendering of every report object.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::analytic::{predict_volume, Scheme, VolumePrediction};
use crate::error::Error;
use crate::oracle::ValidationReport;
use crate::summary::CommSummary;
use crate::traceio::VolumeConvention;
use crate::types::{CollectiveKind, ModelConfig, ParallelLayout, ZeroStage};
use crate::volume::Volume;

/// JSON schema tag stamped on every exported report.
pub const REPORT_SCHEMA: &str = "commscope.report.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Anything renderable as a table, CSV, or JSON document.
pub trait Report {
    fn to_table(&self) -> String;
    fn to_csv(&self) -> String;
    fn to_json(&self) -> Value;
}

/// Renders a report in the requested format. Output is deterministic:
/// kinds in declaration order, rows in input order.
pub fn render(report: &dyn Report, format: Format) -> String {
    match format {
        Format::Table => report.to_table(),
        Format::Csv => report.to_csv(),
        Format::Json => {
            let mut out = serde_json::to_string_pretty(&report.to_json()).expect("serialize json");
            out.push('\n');
            out
        }
    }
}

fn table_string(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{:<width$}", cell, width = widths[i]));
            } else {
                line.push_str(&format!("{:>width$}", cell, width = widths[i]));
            }
        }
        line.trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&render_row(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}

fn csv_string(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers).expect("csv header");
    for row in rows {
        w.write_record(row).expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// JSON value for an exact volume: an integer when integral and exactly
/// representable, otherwise a rounded float.
fn vol_json(v: &Volume) -> Value {
    match v.as_integer() {
        Some(n) if n <= (1u128 << 53) => json!(n as u64),
        _ => json!(v.to_f64()),
    }
}

/// Label for a power-of-two byte count ("512 B", "4 KiB", "1 MiB", ...).
fn pow2_label(bytes: u64) -> String {
    if bytes == 0 {
        return "0 B".to_string();
    }
    const UNITS: [&str; 7] = ["B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"];
    let k = bytes.ilog2();
    let unit = (k / 10) as usize;
    format!("{} {}", 1u64 << (k % 10), UNITS[unit.min(UNITS.len() - 1)])
}

fn share_pct(part: &Volume, total: &Volume) -> f64 {
    if total.is_zero() {
        0.0
    } else {
        100.0 * part.to_f64() / total.to_f64()
    }
}

// ---------------------------------------------------------------------------
// Volume prediction report
// ---------------------------------------------------------------------------

/// A prediction plus the element width needed to report byte volumes and
/// percentage shares.
#[derive(Debug, Clone)]
pub struct PredictionReport {
    pub prediction: VolumePrediction,
    pub elem_bytes: u32,
}

impl PredictionReport {
    fn active_kinds(&self) -> Vec<(CollectiveKind, Volume)> {
        self.prediction
            .per_kind_elems
            .iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(k, v)| (k, *v))
            .collect()
    }
}

impl Report for PredictionReport {
    fn to_table(&self) -> String {
        let total = self.prediction.total_elems();
        let rows: Vec<Vec<String>> = self
            .active_kinds()
            .into_iter()
            .map(|(k, v)| {
                vec![
                    k.to_string(),
                    v.to_string(),
                    (v * self.elem_bytes as u64).to_string(),
                    format!("{:.2}%", share_pct(&v, &total)),
                ]
            })
            .collect();
        let mut out = format!("scheme: {}\n", self.prediction.scheme);
        out.push_str(&table_string(&["kind", "elems", "bytes", "share"], &rows));
        out.push_str(&format!(
            "total: {} elems, {} bytes\n",
            total,
            total * self.elem_bytes as u64
        ));
        for note in &self.prediction.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }

    fn to_csv(&self) -> String {
        let total = self.prediction.total_elems();
        let mut rows: Vec<Vec<String>> = self
            .prediction
            .per_kind_elems
            .iter()
            .map(|(k, v)| {
                vec![
                    k.to_string(),
                    v.to_string(),
                    (*v * self.elem_bytes as u64).to_string(),
                    format!("{:.6}", share_pct(v, &total)),
                ]
            })
            .collect();
        rows.push(vec![
            "total".to_string(),
            total.to_string(),
            (total * self.elem_bytes as u64).to_string(),
            "100.000000".to_string(),
        ]);
        csv_string(&["kind", "elems", "bytes", "share_pct"], &rows)
    }

    fn to_json(&self) -> Value {
        let total = self.prediction.total_elems();
        let per_kind: Vec<Value> = self
            .prediction
            .per_kind_elems
            .iter()
            .map(|(k, v)| {
                json!({
                    "kind": k.to_string(),
                    "elems": vol_json(v),
                    "bytes": vol_json(&(*v * self.elem_bytes as u64)),
                    "share_pct": share_pct(v, &total),
                })
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "prediction",
            "scheme": self.prediction.scheme.to_string(),
            "elem_bytes": self.elem_bytes,
            "per_kind": per_kind,
            "total_elems": vol_json(&total),
            "total_bytes": vol_json(&(total * self.elem_bytes as u64)),
            "notes": self.prediction.notes,
        })
    }
}

// ---------------------------------------------------------------------------
// Summary report
// ---------------------------------------------------------------------------

impl Report for CommSummary {
    fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .kinds()
            .filter(|(_, agg)| agg.call_count > 0)
            .map(|(k, agg)| {
                vec![
                    k.to_string(),
                    agg.call_count.to_string(),
                    agg.payload_bytes.to_string(),
                    agg.wire_bytes.to_string(),
                    self.wire_elems(k).map_or_else(|| "-".to_string(), |v| v.to_string()),
                ]
            })
            .collect();
        let mut out = table_string(
            &["kind", "calls", "payload_bytes", "wire_bytes", "wire_elems"],
            &rows,
        );
        out.push_str(&format!(
            "total: {} calls, {} payload bytes, {} wire bytes\n",
            self.total_calls(),
            self.total_payload_bytes(),
            self.total_wire_bytes()
        ));
        let mut histogram_lines = String::new();
        for (kind, agg) in self.kinds() {
            for (lo, hi, calls) in agg.histogram.iter() {
                histogram_lines.push_str(&format!(
                    "  {}  [{}, {})  {}\n",
                    kind,
                    pow2_label(lo),
                    pow2_label(hi),
                    calls
                ));
            }
        }
        if !histogram_lines.is_empty() {
            out.push_str("message sizes:\n");
            out.push_str(&histogram_lines);
        }
        out
    }

    fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .kinds()
            .map(|(k, agg)| {
                vec![
                    k.to_string(),
                    agg.call_count.to_string(),
                    agg.payload_bytes.to_string(),
                    agg.wire_bytes.to_string(),
                    self.wire_elems(k).map_or_else(String::new, |v| v.to_string()),
                ]
            })
            .collect();
        csv_string(
            &["kind", "calls", "payload_bytes", "wire_bytes", "wire_elems"],
            &rows,
        )
    }

    fn to_json(&self) -> Value {
        let per_kind: Vec<Value> = self
            .kinds()
            .map(|(k, agg)| {
                let histogram: Vec<Value> = agg
                    .histogram
                    .iter()
                    .map(|(lo, hi, calls)| json!({"lo_bytes": lo, "hi_bytes": hi, "calls": calls}))
                    .collect();
                json!({
                    "kind": k.to_string(),
                    "calls": agg.call_count,
                    "payload_bytes": agg.payload_bytes,
                    "wire_bytes": vol_json(&agg.wire_bytes),
                    "wire_elems": self.wire_elems(k).as_ref().map(vol_json),
                    "histogram": histogram,
                })
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "summary",
            "elem_bytes": self.elem_bytes,
            "per_kind": per_kind,
            "total_calls": self.total_calls(),
            "total_payload_bytes": self.total_payload_bytes(),
            "total_wire_bytes": vol_json(&self.total_wire_bytes()),
        })
    }
}

// ---------------------------------------------------------------------------
// Theory-vs-observed comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CompareOpts {
    /// Relative tolerance: a ratio r passes iff max(r, 1/r) <= 1 + tolerance,
    /// which makes flagging symmetric in r and 1/r.
    pub tolerance: f64,
    pub convention: VolumeConvention,
    pub elem_bytes: u32,
}

impl CompareOpts {
    pub fn new(elem_bytes: u32) -> Self {
        CompareOpts {
            tolerance: 0.05,
            convention: VolumeConvention::default(),
            elem_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowVerdict {
    Pass,
    OutOfTolerance,
    /// Observed traffic on a kind the model predicts nothing for.
    Unmodeled,
    /// Broadcast is outside the per-scheme formulas; reported, not judged.
    Excluded,
}

impl fmt::Display for RowVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowVerdict::Pass => "pass",
            RowVerdict::OutOfTolerance => "FAIL",
            RowVerdict::Unmodeled => "UNMODELED",
            RowVerdict::Excluded => "excluded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub kind: CollectiveKind,
    pub predicted_bytes: Volume,
    pub observed_bytes: Volume,
    /// observed / predicted; `None` when predicted is zero.
    pub ratio: Option<f64>,
    pub residual_bytes: f64,
    pub verdict: RowVerdict,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub scheme: Scheme,
    pub tolerance: f64,
    pub convention: VolumeConvention,
    pub rows: Vec<ComparisonRow>,
    pub passed: bool,
    pub notes: Vec<String>,
}

fn ratio_within(ratio: f64, tolerance: f64) -> bool {
    ratio > 0.0 && ratio.max(1.0 / ratio) <= 1.0 + tolerance
}

/// Compares a prediction against an observed summary. Observed volumes are
/// normalized to wire volume according to the trace convention; broadcast
/// is excluded from the verdict. A kind with observed traffic but zero
/// prediction fails as unmodeled once it exceeds the tolerance's share of
/// the predicted total.
pub fn compare(
    predicted: &VolumePrediction,
    observed: &CommSummary,
    opts: &CompareOpts,
) -> ComparisonReport {
    let eb = opts.elem_bytes as u64;
    let predicted_total_bytes: Volume = predicted
        .per_kind_elems
        .iter()
        .map(|(_, v)| *v * eb)
        .sum();

    let mut rows = Vec::new();
    let mut passed = true;
    let mut notes = predicted.notes.clone();

    for kind in CollectiveKind::ALL {
        let predicted_bytes = predicted.per_kind_elems[kind] * eb;
        let agg = observed.kind(kind);
        let observed_bytes = match opts.convention {
            VolumeConvention::Logical => agg.wire_bytes,
            VolumeConvention::Wire => Volume::from(agg.payload_bytes),
        };
        if predicted_bytes.is_zero() && observed_bytes.is_zero() && agg.call_count == 0 {
            continue;
        }

        let verdict = if kind == CollectiveKind::Broadcast {
            RowVerdict::Excluded
        } else if predicted_bytes.is_zero() {
            // Unmodeled traffic: tolerated only while it stays within the
            // tolerance's share of everything the model does predict.
            let threshold = predicted_total_bytes.to_f64() * opts.tolerance;
            if observed_bytes.to_f64() > threshold {
                RowVerdict::Unmodeled
            } else {
                RowVerdict::Pass
            }
        } else if observed_bytes == predicted_bytes {
            RowVerdict::Pass
        } else {
            let ratio = observed_bytes.to_f64() / predicted_bytes.to_f64();
            if ratio_within(ratio, opts.tolerance) {
                RowVerdict::Pass
            } else {
                RowVerdict::OutOfTolerance
            }
        };

        if matches!(verdict, RowVerdict::OutOfTolerance | RowVerdict::Unmodeled) {
            passed = false;
        }
        if verdict == RowVerdict::Unmodeled {
            notes.push(format!(
                "observed {kind} traffic has no predicted counterpart (unmodeled traffic)"
            ));
        }

        let ratio = if predicted_bytes.is_zero() {
            None
        } else if observed_bytes == predicted_bytes {
            Some(1.0)
        } else {
            Some(observed_bytes.to_f64() / predicted_bytes.to_f64())
        };
        rows.push(ComparisonRow {
            kind,
            predicted_bytes,
            observed_bytes,
            ratio,
            residual_bytes: observed_bytes.to_f64() - predicted_bytes.to_f64(),
            verdict,
        });
    }

    ComparisonReport {
        scheme: predicted.scheme,
        tolerance: opts.tolerance,
        convention: opts.convention,
        rows,
        passed,
        notes,
    }
}

impl Report for ComparisonReport {
    fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.predicted_bytes.to_string(),
                    r.observed_bytes.to_string(),
                    r.ratio.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")),
                    format!("{:+.1}", r.residual_bytes),
                    r.verdict.to_string(),
                ]
            })
            .collect();
        let mut out = format!(
            "scheme: {}  convention: {}  tolerance: {:.1}%\n",
            self.scheme,
            self.convention,
            self.tolerance * 100.0
        );
        out.push_str(&table_string(
            &["kind", "predicted_bytes", "observed_bytes", "ratio", "residual", "verdict"],
            &rows,
        ));
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out.push_str(if self.passed {
            "comparison: PASS\n"
        } else {
            "comparison: FAIL\n"
        });
        out
    }

    fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.predicted_bytes.to_string(),
                    r.observed_bytes.to_string(),
                    r.ratio.map_or_else(String::new, |x| format!("{x:.6}")),
                    format!("{:.6}", r.residual_bytes),
                    r.verdict.to_string(),
                ]
            })
            .collect();
        csv_string(
            &["kind", "predicted_bytes", "observed_bytes", "ratio", "residual_bytes", "verdict"],
            &rows,
        )
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "kind": r.kind.to_string(),
                    "predicted_bytes": vol_json(&r.predicted_bytes),
                    "observed_bytes": vol_json(&r.observed_bytes),
                    "ratio": r.ratio,
                    "residual_bytes": r.residual_bytes,
                    "verdict": r.verdict.to_string(),
                })
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "comparison",
            "scheme": self.scheme.to_string(),
            "convention": self.convention.to_string(),
            "tolerance": self.tolerance,
            "rows": rows,
            "passed": self.passed,
            "notes": self.notes,
        })
    }
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    SeqLen,
    Devices,
    Tensor,
    Pipeline,
    ZeroStage,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::SeqLen => "seq",
            SweepVar::Devices => "devices",
            SweepVar::Tensor => "tp",
            SweepVar::Pipeline => "pp",
            SweepVar::ZeroStage => "zero",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "seq_len" | "s" => Ok(SweepVar::SeqLen),
            "devices" | "d" => Ok(SweepVar::Devices),
            "tp" | "tensor" | "t" => Ok(SweepVar::Tensor),
            "pp" | "pipeline" | "p" => Ok(SweepVar::Pipeline),
            "zero" | "zero_stage" => Ok(SweepVar::ZeroStage),
            other => Err(format!("unknown sweep variable `{other}`")),
        }
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: String,
    pub outcome: Result<VolumePrediction, Error>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub variable: SweepVar,
    pub elem_bytes: u32,
    pub rows: Vec<SweepRow>,
}

fn apply_sweep_value(
    cfg: &ModelConfig,
    layout: &ParallelLayout,
    var: SweepVar,
    raw: &str,
) -> Result<(ModelConfig, ParallelLayout), Error> {
    let mut cfg = cfg.clone();
    let mut layout = layout.clone();
    let bad = |reason: String| Error::BadValue {
        line: 0,
        key: var.name().to_string(),
        reason,
    };
    match var {
        SweepVar::ZeroStage => {
            layout.zero_stage = ZeroStage::from_token(raw)
                .ok_or_else(|| bad(format!("`{raw}` is not a ZeRO stage")))?;
        }
        _ => {
            let value: u64 = raw
                .trim()
                .parse()
                .map_err(|_| bad(format!("`{raw}` is not a count")))?;
            match var {
                SweepVar::SeqLen => cfg.seq_len = value,
                SweepVar::Devices => layout.devices = value,
                SweepVar::Tensor => layout.tensor = value,
                SweepVar::Pipeline => layout.pipeline = value,
                SweepVar::ZeroStage => unreachable!(),
            }
        }
    }
    cfg.validate()?;
    layout.validate()?;
    Ok((cfg, layout))
}

/// Evaluates the prediction across a swept variable. Rows that fail
/// validation become row-level error markers; the sweep continues.
pub fn sweep(
    cfg: &ModelConfig,
    layout: &ParallelLayout,
    var: SweepVar,
    values: &[String],
    recompute: bool,
) -> SweepReport {
    let rows = values
        .iter()
        .map(|raw| SweepRow {
            value: raw.clone(),
            outcome: apply_sweep_value(cfg, layout, var, raw)
                .and_then(|(cfg, layout)| predict_volume(&cfg, &layout, recompute)),
        })
        .collect();
    SweepReport {
        variable: var,
        elem_bytes: cfg.elem_bytes,
        rows,
    }
}

impl SweepReport {
    /// Kinds with a nonzero entry in at least one successful row.
    fn active_kinds(&self) -> Vec<CollectiveKind> {
        CollectiveKind::ALL
            .into_iter()
            .filter(|k| {
                self.rows.iter().any(|r| {
                    r.outcome
                        .as_ref()
                        .is_ok_and(|p| !p.per_kind_elems[*k].is_zero())
                })
            })
            .collect()
    }

    fn prev_ok(&self, idx: usize) -> Option<&VolumePrediction> {
        self.rows[..idx].iter().rev().find_map(|r| r.outcome.as_ref().ok())
    }
}

impl Report for SweepReport {
    fn to_table(&self) -> String {
        let kinds = self.active_kinds();
        let mut headers: Vec<String> = vec![self.variable.to_string()];
        for k in &kinds {
            headers.push(k.to_string());
        }
        headers.push("total".to_string());
        for k in &kinds {
            headers.push(format!("{k} ratio"));
        }
        headers.push("total ratio".to_string());
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();

        let mut rows = Vec::new();
        for (idx, row) in self.rows.iter().enumerate() {
            match &row.outcome {
                Err(e) => {
                    let mut cells = vec![row.value.clone(), format!("error: {e}")];
                    cells.resize(headers.len(), String::new());
                    rows.push(cells);
                }
                Ok(pred) => {
                    let mut cells = vec![row.value.clone()];
                    for k in &kinds {
                        cells.push(pred.per_kind_elems[*k].to_string());
                    }
                    cells.push(pred.total_elems().to_string());
                    let prev = self.prev_ok(idx);
                    let ratio_cell = |cur: Volume, prev: Option<Volume>| -> String {
                        match prev {
                            Some(p) if !p.is_zero() => {
                                format!("{:.4}", cur.to_f64() / p.to_f64())
                            }
                            _ => "-".to_string(),
                        }
                    };
                    for k in &kinds {
                        cells.push(ratio_cell(
                            pred.per_kind_elems[*k],
                            prev.map(|p| p.per_kind_elems[*k]),
                        ));
                    }
                    cells.push(ratio_cell(pred.total_elems(), prev.map(|p| p.total_elems())));
                    rows.push(cells);
                }
            }
        }
        table_string(&header_refs, &rows)
    }

    fn to_csv(&self) -> String {
        let mut headers: Vec<String> = vec![self.variable.to_string()];
        for k in CollectiveKind::ALL {
            headers.push(format!("{k}_elems"));
        }
        headers.push("total_elems".to_string());
        for k in CollectiveKind::ALL {
            headers.push(format!("{k}_delta"));
        }
        for k in CollectiveKind::ALL {
            headers.push(format!("{k}_ratio"));
        }
        headers.push("error".to_string());
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();

        let mut rows = Vec::new();
        for (idx, row) in self.rows.iter().enumerate() {
            match &row.outcome {
                Err(e) => {
                    let mut cells = vec![row.value.clone()];
                    cells.resize(headers.len() - 1, String::new());
                    cells.push(e.to_string());
                    rows.push(cells);
                }
                Ok(pred) => {
                    let mut cells = vec![row.value.clone()];
                    for k in CollectiveKind::ALL {
                        cells.push(pred.per_kind_elems[k].to_string());
                    }
                    cells.push(pred.total_elems().to_string());
                    let prev = self.prev_ok(idx);
                    for k in CollectiveKind::ALL {
                        cells.push(match prev {
                            Some(p) => format!(
                                "{:.1}",
                                pred.per_kind_elems[k].to_f64() - p.per_kind_elems[k].to_f64()
                            ),
                            None => String::new(),
                        });
                    }
                    for k in CollectiveKind::ALL {
                        cells.push(match prev {
                            Some(p) if !p.per_kind_elems[k].is_zero() => format!(
                                "{:.6}",
                                pred.per_kind_elems[k].to_f64() / p.per_kind_elems[k].to_f64()
                            ),
                            _ => String::new(),
                        });
                    }
                    cells.push(String::new());
                    rows.push(cells);
                }
            }
        }
        csv_string(&header_refs, &rows)
    }

    fn to_json(&self) -> Value {
        let mut notes: Vec<String> = Vec::new();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .enumerate()
            .map(|(idx, row)| match &row.outcome {
                Err(e) => json!({"value": row.value, "error": e.to_string()}),
                Ok(pred) => {
                    for n in &pred.notes {
                        if !notes.contains(n) {
                            notes.push(n.clone());
                        }
                    }
                    let prev = self.prev_ok(idx);
                    let per_kind: BTreeMap<String, Value> = pred
                        .per_kind_elems
                        .iter()
                        .map(|(k, v)| (k.to_string(), vol_json(v)))
                        .collect();
                    let ratio: Option<BTreeMap<String, Value>> = prev.map(|p| {
                        pred.per_kind_elems
                            .iter()
                            .map(|(k, v)| {
                                let r = if p.per_kind_elems[k].is_zero() {
                                    Value::Null
                                } else {
                                    json!(v.to_f64() / p.per_kind_elems[k].to_f64())
                                };
                                (k.to_string(), r)
                            })
                            .collect()
                    });
                    json!({
                        "value": row.value,
                        "scheme": pred.scheme.to_string(),
                        "per_kind_elems": per_kind,
                        "total_elems": vol_json(&pred.total_elems()),
                        "ratio_vs_prev": ratio,
                    })
                }
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "sweep",
            "variable": self.variable.to_string(),
            "elem_bytes": self.elem_bytes,
            "rows": rows,
            "notes": notes,
        })
    }
}

// ---------------------------------------------------------------------------
// Alpha-beta time estimates
// ---------------------------------------------------------------------------

/// A latency/bandwidth interconnect description: per-call startup cost
/// alpha and inverse bandwidth beta, with optional per-kind alpha overrides
/// for collectives that are slower at small sizes.
#[derive(Debug, Clone)]
pub struct AlphaBetaFabric {
    pub name: String,
    pub alpha_us: f64,
    pub beta_us_per_mib: f64,
    pub per_kind_alpha_us: BTreeMap<CollectiveKind, f64>,
    /// Free-form annotation rendered with every estimate (e.g. marking a
    /// preset as a placeholder rather than a measured fabric).
    pub note: Option<String>,
}

impl AlphaBetaFabric {
    pub fn new(name: impl Into<String>, alpha_us: f64, beta_us_per_mib: f64) -> Self {
        AlphaBetaFabric {
            name: name.into(),
            alpha_us,
            beta_us_per_mib,
            per_kind_alpha_us: BTreeMap::new(),
            note: None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.alpha_us.is_finite()
            && self.alpha_us >= 0.0
            && self.beta_us_per_mib.is_finite()
            && self.beta_us_per_mib > 0.0
            && self
                .per_kind_alpha_us
                .values()
                .all(|a| a.is_finite() && *a >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::BadValue {
                line: 0,
                key: "fabric".to_string(),
                reason: "alpha_us must be >= 0 and beta_us_per_mib > 0".to_string(),
            })
        }
    }

    pub fn alpha_for(&self, kind: CollectiveKind) -> f64 {
        *self.per_kind_alpha_us.get(&kind).unwrap_or(&self.alpha_us)
    }
}

#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub kind: CollectiveKind,
    pub calls: u64,
    pub payload_bytes: u64,
    pub alpha_us: f64,
    pub time_us: f64,
}

#[derive(Debug, Clone)]
pub struct TimeEstimate {
    pub fabric_name: String,
    pub rows: Vec<EstimateRow>,
    pub total_us: f64,
    pub compute_us: Option<f64>,
    /// communication / (communication + compute), when compute time given.
    pub comm_fraction: Option<f64>,
    pub notes: Vec<String>,
}

const MIB: f64 = 1024.0 * 1024.0;

/// Applies the alpha-beta cost model to a summary: per kind,
/// `calls * alpha + payload_MiB * beta` microseconds.
pub fn estimate_time(
    summary: &CommSummary,
    fabric: &AlphaBetaFabric,
    compute_us: Option<f64>,
) -> TimeEstimate {
    let mut rows = Vec::new();
    let mut total = 0.0;
    for (kind, agg) in summary.kinds() {
        if agg.call_count == 0 {
            continue;
        }
        let alpha = fabric.alpha_for(kind);
        let time = agg.call_count as f64 * alpha
            + agg.payload_bytes as f64 / MIB * fabric.beta_us_per_mib;
        total += time;
        rows.push(EstimateRow {
            kind,
            calls: agg.call_count,
            payload_bytes: agg.payload_bytes,
            alpha_us: alpha,
            time_us: time,
        });
    }
    let comm_fraction = compute_us.map(|c| {
        if total + c > 0.0 {
            total / (total + c)
        } else {
            0.0
        }
    });
    let mut notes = Vec::new();
    if let Some(note) = &fabric.note {
        notes.push(note.clone());
    }
    TimeEstimate {
        fabric_name: fabric.name.clone(),
        rows,
        total_us: total,
        compute_us,
        comm_fraction,
        notes,
    }
}

impl Report for TimeEstimate {
    fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.calls.to_string(),
                    format!("{:.3}", r.payload_bytes as f64 / MIB),
                    format!("{:.2}", r.alpha_us),
                    format!("{:.2}", r.time_us),
                ]
            })
            .collect();
        let mut out = format!("fabric: {}\n", self.fabric_name);
        out.push_str(&table_string(
            &["kind", "calls", "payload_mib", "alpha_us", "time_us"],
            &rows,
        ));
        out.push_str(&format!("total communication time: {:.2} us\n", self.total_us));
        if let (Some(compute), Some(fraction)) = (self.compute_us, self.comm_fraction) {
            out.push_str(&format!(
                "compute time: {:.2} us, communication fraction: {:.1}%\n",
                compute,
                fraction * 100.0
            ));
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }

    fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.calls.to_string(),
                    r.payload_bytes.to_string(),
                    format!("{:.6}", r.alpha_us),
                    format!("{:.6}", r.time_us),
                ]
            })
            .collect();
        csv_string(&["kind", "calls", "payload_bytes", "alpha_us", "time_us"], &rows)
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "kind": r.kind.to_string(),
                    "calls": r.calls,
                    "payload_bytes": r.payload_bytes,
                    "alpha_us": r.alpha_us,
                    "time_us": r.time_us,
                })
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "estimate",
            "fabric": self.fabric_name,
            "rows": rows,
            "total_us": self.total_us,
            "compute_us": self.compute_us,
            "comm_fraction": self.comm_fraction,
            "notes": self.notes,
        })
    }
}

// ---------------------------------------------------------------------------
// Oracle validation report
// ---------------------------------------------------------------------------

impl Report for ValidationReport {
    fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.payload_elems.to_string(),
                    r.group_size.to_string(),
                    r.calls.to_string(),
                    r.formula.to_string(),
                    r.simulated
                        .as_ref()
                        .map_or_else(|| "-".to_string(), |v| v.to_string()),
                    match r.exact {
                        Some(true) => "exact".to_string(),
                        Some(false) => "MISMATCH".to_string(),
                        None => "n/a".to_string(),
                    },
                ]
            })
            .collect();
        let mut out = table_string(
            &["kind", "payload_elems", "group", "calls", "formula", "simulated", "match"],
            &rows,
        );
        for row in &self.rows {
            if let Some(note) = &row.note {
                out.push_str(&format!("note ({}): {}\n", row.kind, note));
            }
        }
        out.push_str(&format!(
            "max discrepancy: abs {} rel {}\n",
            self.max_abs_discrepancy, self.max_rel_discrepancy
        ));
        out.push_str(if self.all_exact() {
            "oracle match: exact\n"
        } else {
            "oracle match: MISMATCH\n"
        });
        out
    }

    fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.payload_elems.to_string(),
                    r.group_size.to_string(),
                    r.calls.to_string(),
                    r.formula.to_string(),
                    r.simulated.as_ref().map_or_else(String::new, |v| v.to_string()),
                    match r.exact {
                        Some(true) => "exact".to_string(),
                        Some(false) => "mismatch".to_string(),
                        None => "n/a".to_string(),
                    },
                ]
            })
            .collect();
        csv_string(
            &["kind", "payload_elems", "group", "calls", "formula", "simulated", "match"],
            &rows,
        )
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "kind": r.kind.to_string(),
                    "payload_elems": r.payload_elems,
                    "group": r.group_size,
                    "calls": r.calls,
                    "formula": vol_json(&r.formula),
                    "simulated": r.simulated.as_ref().map(vol_json),
                    "exact": r.exact,
                    "note": r.note,
                })
            })
            .collect();
        json!({
            "schema": REPORT_SCHEMA,
            "report": "validation",
            "rows": rows,
            "max_abs_discrepancy": self.max_abs_discrepancy,
            "max_rel_discrepancy": self.max_rel_discrepancy,
            "exact": self.all_exact(),
        })
    }
}
