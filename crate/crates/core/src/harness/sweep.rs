//! Robustness sweeps: one full evaluation per axis value.

use serde::{Deserialize, Serialize};

use super::{load_sequences, run_loaded, EvalConfig, LoadedSequence, RunResult, RunSettings};
use crate::error::{Error, Result};
use crate::grouping::{GroupingSpec, MatchPolicy};

pub const DEFAULT_EVENT_COUNTS: [usize; 9] = [5000, 10000, 15000, 20000, 25000, 30000, 35000, 40000, 45000];
pub const DEFAULT_DURATIONS_MS: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
pub const DEFAULT_DISCARD_RATIOS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    EventCount { values: Vec<usize> },
    Duration { values_ms: Vec<f64> },
    DiscardRatio { values: Vec<f64> },
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::EventCount { .. } => "count",
            SweepAxis::Duration { .. } => "duration",
            SweepAxis::DiscardRatio { .. } => "discard",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let values: Vec<f64> = match self {
            SweepAxis::EventCount { values } => {
                if values.contains(&0) {
                    return Err(Error::Config("event counts must be positive".into()));
                }
                values.iter().map(|&v| v as f64).collect()
            }
            SweepAxis::Duration { values_ms } => {
                if values_ms.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::Config("durations must be positive".into()));
                }
                values_ms.clone()
            }
            SweepAxis::DiscardRatio { values } => {
                if values.iter().any(|&v| !(0.0..1.0).contains(&v)) {
                    return Err(Error::Config("discard ratios must lie in [0, 1)".into()));
                }
                values.clone()
            }
        };
        if values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        Ok(())
    }

    fn points(&self) -> Vec<(String, f64, Option<f64>)> {
        match self {
            SweepAxis::EventCount { values } => values.iter().map(|&v| (v.to_string(), v as f64, None)).collect(),
            SweepAxis::Duration { values_ms } => {
                values_ms.iter().map(|&v| (format!("{v}ms"), v, Some(1000.0 / v))).collect()
            }
            SweepAxis::DiscardRatio { values } => values.iter().map(|&v| (format!("{v}"), v, None)).collect(),
        }
    }

    fn apply(&self, base: &RunSettings, value: f64) -> Result<RunSettings> {
        let mut s = base.clone();
        match self {
            SweepAxis::EventCount { .. } => {
                s.grouping = GroupingSpec::FixedNumber { n_g: value as usize };
                s.matching = MatchPolicy::default();
            }
            SweepAxis::Duration { .. } => {
                s.grouping = GroupingSpec::FixedDuration { t_g: value / 1000.0 };
                s.matching = MatchPolicy::default();
            }
            SweepAxis::DiscardRatio { .. } => {
                s.grouping = GroupingSpec::BetweenFrames;
                s.frame_discard = value;
            }
        }
        s.grouping.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub value: f64,
    /// Reconstruction rate of a duration sweep point.
    pub fps: Option<f64>,
    pub result: RunResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn failed_count(&self) -> usize {
        self.points.iter().map(|p| p.result.failed_count()).sum()
    }
}

/// Runs a sweep over already loaded sequences.
pub fn run_sweep(sequences: &[LoadedSequence], base: &RunSettings, axis: &SweepAxis) -> Result<SweepReport> {
    axis.validate()?;
    let mut points = Vec::new();
    for (label, value, fps) in axis.points() {
        let settings = axis.apply(base, value)?;
        log::info!("sweep {} point {label}", axis.name());
        let result = run_loaded(sequences, &settings, None)?;
        points.push(SweepPoint { label, value, fps, result });
    }
    Ok(SweepReport { axis: axis.name().to_string(), points })
}

fn sweep(config: &EvalConfig, axis: SweepAxis) -> Result<SweepReport> {
    axis.validate()?;
    let sequences = load_sequences(config)?;
    let base = RunSettings::from_config(config)?;
    run_sweep(&sequences, &base, &axis)
}

/// Fixed-number grouping at each count (default 5k to 45k in steps of 5k).
pub fn sweep_event_count(config: &EvalConfig, values: Option<&[usize]>) -> Result<SweepReport> {
    let values = values.map_or_else(|| DEFAULT_EVENT_COUNTS.to_vec(), <[usize]>::to_vec);
    sweep(config, SweepAxis::EventCount { values })
}

/// Fixed-duration grouping at each duration in ms (default 10 to 100 ms).
pub fn sweep_duration(config: &EvalConfig, values_ms: Option<&[f64]>) -> Result<SweepReport> {
    let values_ms = values_ms.map_or_else(|| DEFAULT_DURATIONS_MS.to_vec(), <[f64]>::to_vec);
    sweep(config, SweepAxis::Duration { values_ms })
}

/// Between-frames grouping after discarding ground-truth frames (default 0.0 to 0.9).
pub fn sweep_discard(config: &EvalConfig, ratios: Option<&[f64]>) -> Result<SweepReport> {
    let values = ratios.map_or_else(|| DEFAULT_DISCARD_RATIOS.to_vec(), <[f64]>::to_vec);
    sweep(config, SweepAxis::DiscardRatio { values })
}
