//! Metric means binned by per-group event rate.

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;

pub const RATE_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructorBins {
    pub reconstructor: String,
    pub bins: Vec<RateBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBinReport {
    pub metric: String,
    /// Edges in events/s, shared by every reconstructor.
    pub edges: Vec<f64>,
    /// Fewer than two distinct rates: one bin holds everything.
    pub degenerate: bool,
    pub reconstructors: Vec<ReconstructorBins>,
}

/// Equal-width edges over `[min, max]`, or a single `[v, v]` bin when degenerate.
pub fn rate_edges(rates: &[f64], bins: usize) -> Option<(Vec<f64>, bool)> {
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if rates.is_empty() {
        return None;
    }
    if min == max {
        return Some((vec![min, max], true));
    }
    let width = (max - min) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| min + width * i as f64).collect();
    edges.push(max);
    Some((edges, false))
}

/// Bin index of `rate`; the top edge belongs to the last bin.
pub fn bin_index(edges: &[f64], rate: f64) -> usize {
    let bins = edges.len() - 1;
    let (min, max) = (edges[0], edges[bins]);
    if max <= min {
        return 0;
    }
    let i = ((rate - min) / (max - min) * bins as f64).floor();
    (i.max(0.0) as usize).min(bins - 1)
}

/// Bins the rows of a run by event rate. `metric` defaults to the first full-reference metric.
pub fn bin_by_event_rate(run: &RunResult, metric: Option<&str>) -> Result<RateBinReport> {
    let mi = match metric {
        Some(name) => run.metric_index(name).ok_or_else(|| Error::Config(format!("metric `{name}` is not part of the run")))?,
        None => run
            .metrics
            .iter()
            .position(|m| m.kind == MetricKind::FullReference)
            .ok_or_else(|| Error::Config("run has no full-reference metric to bin".into()))?,
    };
    let rates: Vec<f64> = run.sequences.iter().flat_map(|s| &s.rows).filter_map(|r| r.event_rate).collect();
    let (edges, degenerate) =
        rate_edges(&rates, RATE_BINS).ok_or_else(|| Error::Invalid("run has no groups with an event rate".into()))?;

    let mut labels: Vec<&str> = Vec::new();
    for s in &run.sequences {
        if !labels.contains(&s.reconstructor.as_str()) {
            labels.push(&s.reconstructor);
        }
    }
    let reconstructors = labels
        .into_iter()
        .map(|label| {
            let n = edges.len() - 1;
            let mut sums = vec![0.0; n];
            let mut counts = vec![0usize; n];
            for row in run.sequences.iter().filter(|s| s.reconstructor == label).flat_map(|s| &s.rows) {
                if let (Some(rate), Some(v)) = (row.event_rate, row.values[mi]) {
                    let b = bin_index(&edges, rate);
                    sums[b] += v;
                    counts[b] += 1;
                }
            }
            let bins = (0..n)
                .map(|b| RateBin {
                    lo: edges[b],
                    hi: edges[b + 1],
                    count: counts[b],
                    mean: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
                })
                .collect();
            ReconstructorBins { reconstructor: label.to_string(), bins }
        })
        .collect();
    Ok(RateBinReport { metric: run.metrics[mi].name.clone(), edges, degenerate, reconstructors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_edges() {
        let (edges, degenerate) = rate_edges(&[0.0, 3.3e6, 10e6], 10).unwrap();
        assert!(!degenerate);
        assert_eq!(edges.len(), 11);
        for (i, e) in edges.iter().enumerate() {
            assert!((e - i as f64 * 1e6).abs() < 1e-6);
        }
        assert_eq!(bin_index(&edges, 10e6), 9);
        assert_eq!(bin_index(&edges, 0.0), 0);
        assert_eq!(bin_index(&edges, 1.5e6), 1);
    }

    #[test]
    fn degenerate_edges() {
        let (edges, degenerate) = rate_edges(&[5.0, 5.0], 10).unwrap();
        assert!(degenerate);
        assert_eq!(edges, vec![5.0, 5.0]);
        assert_eq!(bin_index(&edges, 5.0), 0);
        assert!(rate_edges(&[], 10).is_none());
    }
}
