//! Event grouping schemes and matching of group outputs to ground-truth frames.
//!
//! Groups are contiguous index ranges into a time-sorted [`EventStream`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::EventStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroupingSpec {
    FixedNumber { n_g: usize },
    /// Window length in seconds.
    FixedDuration { t_g: f64 },
    BetweenFrames,
}

impl GroupingSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GroupingSpec::FixedNumber { n_g: 0 } => Err(Error::Invalid("N_G must be >= 1".into())),
            GroupingSpec::FixedDuration { t_g } if !(t_g.is_finite() && t_g > 0.0) => {
                Err(Error::Invalid(format!("T_G must be > 0, got {t_g}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventGroup {
    pub index: usize,
    pub events: Range<usize>,
    pub t_start: f64,
    pub t_end: f64,
    /// Time the reconstruction for this group is stamped with.
    pub target_time: f64,
}

impl EventGroup {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Events per second, or `None` when the window has zero length.
    pub fn event_rate(&self) -> Option<f64> {
        let d = self.duration();
        (d > 0.0).then(|| self.len() as f64 / d)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupTimeline {
    pub groups: Vec<EventGroup>,
}

impl GroupTimeline {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn event_rates(&self) -> Vec<Option<f64>> {
        self.groups.iter().map(EventGroup::event_rate).collect()
    }
}

/// Groups of exactly `n_g` consecutive events; a trailing short remainder is dropped.
pub fn group_fixed_number(stream: &EventStream, n_g: usize) -> Result<GroupTimeline> {
    GroupingSpec::FixedNumber { n_g }.validate()?;
    let events = stream.events();
    let groups = (0..events.len() / n_g)
        .map(|k| {
            let range = k * n_g..(k + 1) * n_g;
            let t_start = events[range.start].t;
            let t_end = events[range.end - 1].t;
            EventGroup { index: k, events: range, t_start, t_end, target_time: t_end }
        })
        .collect();
    Ok(GroupTimeline { groups })
}

/// Fixed windows of `t_g` seconds anchored at the stream's first timestamp.
pub fn group_fixed_duration(stream: &EventStream, t_g: f64) -> Result<GroupTimeline> {
    match stream.span() {
        Some(span) => group_fixed_duration_over(stream, t_g, span),
        None => {
            GroupingSpec::FixedDuration { t_g }.validate()?;
            Ok(GroupTimeline::default())
        }
    }
}

/// Fixed windows over an explicit `[start, end]` span.
///
/// Emits `max(1, ceil((end - start) / t_g))` windows, empty ones included. Window
/// membership is half-open except that the final window also holds events at
/// exactly `end`, so every event inside the span lands in some group. Events
/// outside the span are not grouped.
pub fn group_fixed_duration_over(stream: &EventStream, t_g: f64, span: (f64, f64)) -> Result<GroupTimeline> {
    GroupingSpec::FixedDuration { t_g }.validate()?;
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::Invalid(format!("invalid span [{t0}, {t1}]")));
    }
    let count = (((t1 - t0) / t_g).ceil() as usize).max(1);
    let events = stream.events();
    let mut idx = events.partition_point(|e| e.t < t0);
    let mut groups = Vec::with_capacity(count);
    for k in 0..count {
        let t_start = t0 + k as f64 * t_g;
        let t_end = t0 + (k + 1) as f64 * t_g;
        let first = idx;
        let last_window = k + 1 == count;
        while idx < events.len() && (events[idx].t < t_end || (last_window && events[idx].t <= t1)) {
            idx += 1;
        }
        groups.push(EventGroup { index: k, events: first..idx, t_start, t_end, target_time: t_end });
    }
    Ok(GroupTimeline { groups })
}

/// One group per pair of consecutive frame timestamps: `[s_k, s_{k+1})`.
pub fn group_between_frames(stream: &EventStream, frame_times: &[f64]) -> Result<GroupTimeline> {
    if frame_times.len() < 2 {
        return Err(Error::Invalid(format!("between-frames grouping needs >= 2 frames, got {}", frame_times.len())));
    }
    if frame_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("frame timestamps must be strictly increasing".into()));
    }
    let events = stream.events();
    let mut start = events.partition_point(|e| e.t < frame_times[0]);
    let groups = frame_times
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let end = start + events[start..].partition_point(|e| e.t < w[1]);
            let g = EventGroup { index: k, events: start..end, t_start: w[0], t_end: w[1], target_time: w[1] };
            start = end;
            g
        })
        .collect();
    Ok(GroupTimeline { groups })
}

pub fn group_events(stream: &EventStream, spec: &GroupingSpec, frame_times: Option<&[f64]>) -> Result<GroupTimeline> {
    match *spec {
        GroupingSpec::FixedNumber { n_g } => group_fixed_number(stream, n_g),
        GroupingSpec::FixedDuration { t_g } => group_fixed_duration(stream, t_g),
        GroupingSpec::BetweenFrames => {
            let times = frame_times.ok_or_else(|| Error::Invalid("between-frames grouping needs ground-truth frames".into()))?;
            group_between_frames(stream, times)
        }
    }
}

pub const DEFAULT_MATCH_TOLERANCE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    /// Seconds.
    pub tolerance: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { tolerance: DEFAULT_MATCH_TOLERANCE }
    }
}

impl MatchPolicy {
    pub fn new(tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(Error::Invalid(format!("match tolerance must be >= 0, got {tolerance}")));
        }
        Ok(Self { tolerance })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupMatch {
    pub group: usize,
    pub frame: Option<usize>,
}

/// Pairs each group with its nearest frame when within tolerance.
///
/// A frame is claimed by at most one group: the closest one, the earlier group on ties.
/// Groups that lose a frame stay unmatched.
pub fn match_ground_truth(timeline: &GroupTimeline, frame_times: &[f64], policy: &MatchPolicy) -> Vec<GroupMatch> {
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; frame_times.len()];
    for (gi, g) in timeline.groups.iter().enumerate() {
        let Some((frame, dist)) = nearest_frame(frame_times, g.target_time) else { continue };
        if dist > policy.tolerance {
            continue;
        }
        match claims[frame] {
            Some((_, best)) if best <= dist => {}
            _ => claims[frame] = Some((gi, dist)),
        }
    }
    let mut matches: Vec<GroupMatch> = (0..timeline.len()).map(|group| GroupMatch { group, frame: None }).collect();
    for (frame, claim) in claims.into_iter().enumerate() {
        if let Some((gi, _)) = claim {
            matches[gi].frame = Some(frame);
        }
    }
    matches
}

fn nearest_frame(frame_times: &[f64], t: f64) -> Option<(usize, f64)> {
    let j = frame_times.partition_point(|&s| s < t);
    let before = j.checked_sub(1).map(|i| (i, (t - frame_times[i]).abs()));
    let after = frame_times.get(j).map(|&s| (j, (s - t).abs()));
    match (before, after) {
        (Some(b), Some(a)) => Some(if a.1 < b.1 { a } else { b }),
        (b, a) => b.or(a),
    }
}
