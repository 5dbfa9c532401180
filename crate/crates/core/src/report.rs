//! Result emission: timeline CSVs, summary JSON, montage strips, sweep and rate reports.
//!
//! Output layout under an output directory:
//!
//! ```text
//! summary.json                     means, counts, config echo, tool version
//! results.json                     full run result, input of `report`
//! timelines/<rec>__<ds>__<seq>.csv one row per reconstruction
//! montage/<rec>__<ds>__<seq>/NNNNNN.pgm
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{MontageFrame, RateBinReport, RunResult, SequenceResult, SweepReport};
use crate::image::{encode_pgm, Image};

pub const SUMMARY_FILE: &str = "summary.json";
pub const RESULTS_FILE: &str = "results.json";
pub const TIMELINE_DIR: &str = "timelines";
pub const MONTAGE_DIR: &str = "montage";

/// Formats a float with 9 significant digits, shortest form.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("float round trip");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

pub fn sequence_stem(seq: &SequenceResult) -> String {
    format!("{}__{}__{}", sanitize(&seq.reconstructor), sanitize(&seq.dataset), sanitize(&seq.sequence))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// CSV text for one sequence timeline. Unmatched rows leave full-reference columns empty.
pub fn timeline_csv(run: &RunResult, seq: &SequenceResult) -> String {
    let mut out = String::from("timestamp,group_index,event_rate,matched");
    for m in &run.metrics {
        out.push(',');
        out.push_str(&m.name);
    }
    out.push('\n');
    for row in &seq.rows {
        let rate = row.event_rate.map(format_float).unwrap_or_default();
        write!(out, "{},{},{},{}", format_float(row.timestamp), row.group_index, rate, u8::from(row.matched)).unwrap();
        for v in &row.values {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&format_float(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_timeline(run: &RunResult, seq: &SequenceResult, path: &Path) -> Result<()> {
    write_file(path, timeline_csv(run, seq).as_bytes())
}

/// Summary document: everything except the per-row timelines.
pub fn summary_value(run: &RunResult) -> serde_json::Value {
    let sequences: Vec<_> = run
        .sequences
        .iter()
        .map(|s| {
            json!({
                "reconstructor": s.reconstructor,
                "dataset": s.dataset,
                "sequence": s.sequence,
                "counts": s.counts,
                "means": s.means,
                "failed": s.failed,
                "error": s.error,
            })
        })
        .collect();
    json!({
        "tool_version": run.tool_version,
        "metrics": run.metrics,
        "sequences": sequences,
        "datasets": run.datasets,
        "failed": run.failed_count(),
        "config": run.config,
    })
}

pub fn emit_summary(run: &RunResult, path: &Path) -> Result<()> {
    write_file(path, to_json(&summary_value(run)).as_bytes())
}

pub fn emit_results(run: &RunResult, path: &Path) -> Result<()> {
    write_file(path, to_json(run).as_bytes())
}

pub fn load_results(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Horizontal strip `[events | reconstruction | ground truth]`; the last panel is omitted without ground truth.
pub fn montage_strip(frame: &MontageFrame) -> Image {
    let mut panels = vec![&frame.events, &frame.reconstruction];
    if let Some(gt) = &frame.ground_truth {
        panels.push(gt);
    }
    let (w, h) = (frame.reconstruction.width(), frame.reconstruction.height());
    let mut data = Vec::with_capacity(w * h * panels.len());
    for y in 0..h {
        for p in &panels {
            data.extend_from_slice(&p.data()[y * w..(y + 1) * w]);
        }
    }
    Image::new(w * panels.len(), h, data).expect("strip size")
}

/// Writes one PGM per sampled frame; returns the written paths.
pub fn emit_montage(seq: &SequenceResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for frame in &seq.montage {
        let path = dir.join(format!("{:06}.pgm", frame.group_index));
        write_file(&path, &encode_pgm(&montage_strip(frame)))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes summary, timelines, and (when `results` is set) the raw results and montages.
pub fn emit_bundle(run: &RunResult, out_dir: &Path, results: bool) -> Result<()> {
    emit_summary(run, &out_dir.join(SUMMARY_FILE))?;
    for seq in &run.sequences {
        let stem = sequence_stem(seq);
        emit_timeline(run, seq, &out_dir.join(TIMELINE_DIR).join(format!("{stem}.csv")))?;
        if !seq.montage.is_empty() {
            emit_montage(seq, &out_dir.join(MONTAGE_DIR).join(&stem))?;
        }
    }
    if results {
        emit_results(run, &out_dir.join(RESULTS_FILE))?;
    }
    Ok(())
}

/// Sweep output: `sweep.json` with per-point summaries plus a bundle per point.
pub fn emit_sweep(report: &SweepReport, out_dir: &Path) -> Result<()> {
    let points: Vec<_> = report
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({
                "index": i,
                "label": p.label,
                "value": p.value,
                "fps": p.fps,
                "summary": summary_value(&p.result),
            })
        })
        .collect();
    let doc = json!({ "axis": report.axis, "points": points });
    write_file(&out_dir.join("sweep.json"), to_json(&doc).as_bytes())?;
    for (i, p) in report.points.iter().enumerate() {
        emit_bundle(&p.result, &out_dir.join(format!("point_{i:02}")), false)?;
    }
    Ok(())
}

pub fn rate_csv(report: &RateBinReport) -> String {
    let mut out = String::from("reconstructor,bin,lo,hi,count,mean\n");
    for r in &report.reconstructors {
        for (i, b) in r.bins.iter().enumerate() {
            let mean = b.mean.map(format_float).unwrap_or_default();
            writeln!(out, "{},{i},{},{},{},{mean}", r.reconstructor, format_float(b.lo), format_float(b.hi), b.count).unwrap();
        }
    }
    out
}

pub fn emit_rate_report(report: &RateBinReport, out_dir: &Path) -> Result<()> {
    write_file(&out_dir.join("rates.json"), to_json(report).as_bytes())?;
    write_file(&out_dir.join("rates.csv"), rate_csv(report).as_bytes())
}
