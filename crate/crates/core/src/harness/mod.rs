//! Evaluation orchestration: standard runs, robustness sweeps, event-rate binning.

pub mod config;
pub mod rates;
pub mod sweep;

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{self, EventStream, FrameStream, SensorGeometry, SequenceDataset, TextOptions};
use crate::grouping::{self, GroupMatch, GroupTimeline, GroupingSpec, MatchPolicy};
use crate::image::Image;
use crate::metrics::{self, MetricId, MetricRegistry, MetricSource, RegisteredMetric};
use crate::plugin::{self, SessionOptions};
use crate::preprocess::{self, DownsampleSpec, NoiseSpec};
use crate::reconstruct::{
    self, histogram_equalize, LeakyIntegrator, PluginReconstructor, PostProcSpec, ReconstructOptions, Reconstructor,
    ReconstructorHandle, VoxelCollapse, DEFAULT_LEAK_GAIN, DEFAULT_LEAK_TAU,
};
use crate::representation::{PadSpec, TensorNormSpec};

pub use config::{
    BuiltinReconstructor, DatasetConfig, EvalConfig, GroupingConfig, GroupingMode, MetricConfig, PluginMetricConfig,
    PreprocessConfig, ReconstructorConfig, SequenceConfig,
};
pub use rates::{bin_by_event_rate, RateBinReport, RATE_BINS};
pub use sweep::{sweep_discard, sweep_duration, sweep_event_count, SweepAxis, SweepPoint, SweepReport};

/// A sequence loaded from disk together with the dataset it belongs to.
#[derive(Clone, Debug)]
pub struct LoadedSequence {
    pub dataset: String,
    pub data: SequenceDataset,
}

/// Loads every configured sequence. Any missing or malformed input is a config error.
pub fn load_sequences(config: &EvalConfig) -> Result<Vec<LoadedSequence>> {
    let mut out = Vec::new();
    for ds in &config.datasets {
        for seq in &ds.sequences {
            let wrap = |e: Error| Error::Config(format!("{}/{}: {e}", ds.name, seq.name));
            let geometry = match (seq.width, seq.height) {
                (Some(w), Some(h)) => Some(SensorGeometry::new(w, h).map_err(wrap)?),
                (None, None) => None,
                _ => return Err(wrap(Error::Invalid("give both width and height".into()))),
            };
            let events = event::load_events(&seq.events, geometry, TextOptions { sort: seq.sort }).map_err(wrap)?;
            let frames = seq.frames.as_deref().map(event::load_frame_stream).transpose().map_err(wrap)?;
            let window = seq.eval_window.map(|[a, b]| (a, b));
            let data = SequenceDataset::new(seq.name.clone(), events, frames, window).map_err(wrap)?;
            out.push(LoadedSequence { dataset: ds.name.clone(), data });
        }
    }
    Ok(out)
}

/// Everything that varies between runs over the same loaded sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub grouping: GroupingSpec,
    pub matching: MatchPolicy,
    pub bins: usize,
    pub tensor_norm: TensorNormSpec,
    pub pad: PadSpec,
    pub postproc: PostProcSpec,
    pub reconstructors: Vec<ReconstructorConfig>,
    pub metrics: Vec<MetricConfig>,
    pub noise_rate: f64,
    pub drop_ratio: f64,
    /// Probability of discarding each interior ground-truth frame.
    pub frame_discard: f64,
    pub seed: u64,
    pub parallelism: usize,
    pub montage_stride: usize,
    pub plugin_timeout: Duration,
}

impl RunSettings {
    pub fn from_config(config: &EvalConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            grouping: config.grouping.spec()?,
            matching: config.grouping.match_policy()?,
            bins: config.bins,
            tensor_norm: config.tensor_norm,
            pad: PadSpec { multiple: config.pad_multiple },
            postproc: config.postproc.clone(),
            reconstructors: config.reconstructors.clone(),
            metrics: config.metrics.clone(),
            noise_rate: config.preprocess.noise_rate,
            drop_ratio: config.preprocess.drop_ratio,
            frame_discard: 0.0,
            seed: config.seed,
            parallelism: config.parallelism,
            montage_stride: config.montage_stride,
            plugin_timeout: Duration::from_secs_f64(config.plugin_timeout_s),
        })
    }

    pub fn metric_ids(&self) -> Vec<MetricId> {
        self.metrics
            .iter()
            .map(|m| match m {
                MetricConfig::Name(n) => MetricId::builtin(n).expect("validated builtin"),
                MetricConfig::Plugin(p) => {
                    MetricId { name: p.name.clone(), kind: p.kind, direction: p.direction, source: MetricSource::Plugin }
                }
            })
            .collect()
    }
}

/// One timeline entry: a reconstruction and its metric values (aligned with `RunResult::metrics`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub timestamp: f64,
    pub group_index: usize,
    pub event_rate: Option<f64>,
    pub matched: bool,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceCounts {
    pub groups: usize,
    pub reconstructed: usize,
    pub scored: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub metric_failures: usize,
}

/// Frames kept for montage strips.
#[derive(Clone, Debug, PartialEq)]
pub struct MontageFrame {
    pub group_index: usize,
    pub timestamp: f64,
    pub events: Image,
    pub reconstruction: Image,
    pub ground_truth: Option<Image>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub reconstructor: String,
    pub dataset: String,
    pub sequence: String,
    pub counts: SequenceCounts,
    /// Per-metric mean over this sequence's samples; `None` without samples.
    pub means: BTreeMap<String, Option<f64>>,
    pub failed: bool,
    pub error: Option<String>,
    pub rows: Vec<TimelineRow>,
    #[serde(skip)]
    pub montage: Vec<MontageFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub reconstructor: String,
    pub dataset: String,
    /// Mean over sequences of the per-sequence means (failed sequences excluded).
    pub means: BTreeMap<String, Option<f64>>,
    pub sequences: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub tool_version: String,
    pub metrics: Vec<MetricId>,
    pub sequences: Vec<SequenceResult>,
    pub datasets: Vec<DatasetSummary>,
    pub config: Option<serde_json::Value>,
}

impl RunResult {
    pub fn failed_count(&self) -> usize {
        self.sequences.iter().filter(|s| s.failed).count()
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m.name == name)
    }

    pub fn dataset(&self, reconstructor: &str, dataset: &str) -> Option<&DatasetSummary> {
        self.datasets.iter().find(|d| d.reconstructor == reconstructor && d.dataset == dataset)
    }

    pub fn sequence(&self, reconstructor: &str, sequence: &str) -> Option<&SequenceResult> {
        self.sequences.iter().find(|s| s.reconstructor == reconstructor && s.sequence == sequence)
    }
}

/// Derives an independent seed for one purpose from the run seed.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a over the key, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Drops each interior frame with probability `ratio`; first and last frames are always kept.
pub fn discard_frames(frames: &FrameStream, ratio: f64, seed: u64) -> FrameStream {
    if ratio <= 0.0 {
        return frames.clone();
    }
    let mut rng = preprocess::rng_from_seed(seed);
    let last = frames.len().saturating_sub(1);
    let keep: Vec<bool> = (0..frames.len())
        .map(|i| {
            let draw = rng.random::<f64>();
            i == 0 || i == last || draw >= ratio
        })
        .collect();
    frames.retain_indices(|i| keep[i])
}

/// The reconstructor-independent part of a sequence's evaluation.
#[derive(Clone, Debug)]
pub struct PreparedSequence {
    pub dataset: String,
    pub name: String,
    pub eval_window: Option<(f64, f64)>,
    pub stream: EventStream,
    pub frames: Option<FrameStream>,
    pub timeline: GroupTimeline,
    pub matches: Vec<GroupMatch>,
}

pub fn prepare_sequence(seq: &LoadedSequence, settings: &RunSettings) -> Result<PreparedSequence> {
    let key = format!("{}/{}", seq.dataset, seq.data.name);
    let mut stream = seq.data.events.clone();
    if settings.noise_rate > 0.0 {
        stream = preprocess::inject_noise(&stream, &NoiseSpec::new(settings.noise_rate, derive_seed(settings.seed, &format!("{key}/noise")))?)?;
    }
    if settings.drop_ratio > 0.0 {
        stream = preprocess::downsample_events(&stream, &DownsampleSpec::new(settings.drop_ratio, derive_seed(settings.seed, &format!("{key}/drop")))?);
    }
    let frames = seq
        .data
        .ground_truth
        .as_ref()
        .map(|f| discard_frames(f, settings.frame_discard, derive_seed(settings.seed, &format!("{key}/discard"))));
    let frame_times = frames.as_ref().map(FrameStream::timestamps);
    let timeline = grouping::group_events(&stream, &settings.grouping, frame_times.as_deref())?;
    let matches = match &frame_times {
        Some(times) => grouping::match_ground_truth(&timeline, times, &settings.matching),
        None => (0..timeline.len()).map(|group| GroupMatch { group, frame: None }).collect(),
    };
    Ok(PreparedSequence {
        dataset: seq.dataset.clone(),
        name: seq.data.name.clone(),
        eval_window: seq.data.eval_window,
        stream,
        frames,
        timeline,
        matches,
    })
}

fn build_reconstructor(cfg: &ReconstructorConfig, geometry: SensorGeometry, settings: &RunSettings) -> Result<Box<dyn Reconstructor>> {
    match (&cfg.builtin, &cfg.plugin) {
        (Some(BuiltinReconstructor::VoxelCollapse), _) => Ok(Box::new(VoxelCollapse)),
        (Some(BuiltinReconstructor::LeakyIntegrator), _) => Ok(Box::new(LeakyIntegrator::new(
            geometry,
            cfg.tau.unwrap_or(DEFAULT_LEAK_TAU),
            cfg.gain.unwrap_or(DEFAULT_LEAK_GAIN),
        )?)),
        (None, Some(cmd)) => {
            let m = settings.pad.multiple;
            let (w, h) = ((geometry.width as usize).div_ceil(m) * m, (geometry.height as usize).div_ceil(m) * m);
            let options = SessionOptions { handshake_timeout: settings.plugin_timeout, request_timeout: Some(settings.plugin_timeout) };
            Ok(Box::new(PluginReconstructor::spawn(cmd, w, h, settings.bins, options)?))
        }
        (None, None) => Err(Error::Config(format!("reconstructor `{}` has no backend", cfg.label()))),
    }
}

fn build_registry(settings: &RunSettings, geometry: SensorGeometry) -> Result<MetricRegistry> {
    let mut registry = MetricRegistry::new();
    for (m, id) in settings.metrics.iter().zip(settings.metric_ids()) {
        match m {
            MetricConfig::Name(_) => registry.push(RegisteredMetric::Builtin(id)),
            MetricConfig::Plugin(p) => {
                let options = SessionOptions { handshake_timeout: settings.plugin_timeout, request_timeout: Some(settings.plugin_timeout) };
                let session = plugin::init_session(&p.plugin, geometry.width as usize, geometry.height as usize, settings.bins, options)?;
                if session.info().kind != plugin::PluginKind::Metric {
                    return Err(Error::Config(format!("plugin `{}` is not a metric", p.name)));
                }
                registry.push(RegisteredMetric::Plugin { id, session: std::sync::Mutex::new(session) });
            }
        }
    }
    Ok(registry)
}

/// Per-pixel event counts of a group, min/max normalized.
pub fn event_count_image(stream: &EventStream, group: &grouping::EventGroup) -> Image {
    let g = stream.geometry();
    let mut counts = vec![0.0; g.pixels()];
    for e in &stream.events()[group.events.clone()] {
        counts[e.y as usize * g.width as usize + e.x as usize] += 1.0;
    }
    let img = Image::new(g.width as usize, g.height as usize, counts).expect("sensor size");
    reconstruct::robust_minmax_normalize(&img, 0.0, 100.0)
}

fn failed_result(cfg: &ReconstructorConfig, prep_dataset: &str, prep_name: &str, error: String) -> SequenceResult {
    SequenceResult {
        reconstructor: cfg.label(),
        dataset: prep_dataset.to_string(),
        sequence: prep_name.to_string(),
        counts: SequenceCounts::default(),
        means: BTreeMap::new(),
        failed: true,
        error: Some(error),
        rows: Vec::new(),
        montage: Vec::new(),
    }
}

/// Evaluates one reconstructor on one prepared sequence.
pub fn run_sequence(prep: &PreparedSequence, cfg: &ReconstructorConfig, settings: &RunSettings, metric_ids: &[MetricId]) -> SequenceResult {
    let geometry = prep.stream.geometry();
    let mut handle = match build_reconstructor(cfg, geometry, settings) {
        Ok(r) => ReconstructorHandle::new(r),
        Err(e) => return failed_result(cfg, &prep.dataset, &prep.name, e.to_string()),
    };
    let mut registry = match build_registry(settings, geometry) {
        Ok(r) => r,
        Err(e) => {
            handle.shutdown();
            return failed_result(cfg, &prep.dataset, &prep.name, e.to_string());
        }
    };
    let opts = ReconstructOptions {
        bins: settings.bins,
        norm: cfg.tensor_norm.unwrap_or(settings.tensor_norm),
        pad: settings.pad,
        postproc: cfg.postproc.clone().unwrap_or_else(|| settings.postproc.clone()),
    };
    let output = reconstruct::reconstruct_sequence(&prep.stream, &prep.timeline, &mut handle, &opts);
    handle.shutdown();

    let equalize = opts.postproc.equalizes();
    let mut counts = SequenceCounts { groups: prep.timeline.len(), reconstructed: output.frames.len(), ..Default::default() };
    let mut rows = Vec::new();
    let mut montage = Vec::new();
    for r in &output.frames {
        if !prep.eval_window.is_none_or(|(a, b)| r.timestamp >= a && r.timestamp <= b) {
            continue;
        }
        let group = &prep.timeline.groups[r.group_index];
        let frame = prep.matches[r.group_index].frame.zip(prep.frames.as_ref()).map(|(i, f)| &f.frames()[i].image);
        let gt = frame.map(|img| if equalize { histogram_equalize(img) } else { img.clone() });
        let eval = metrics::evaluate_pair(&registry, r.timestamp, &r.image, gt.as_ref());
        counts.metric_failures += eval.failures.len();
        for (id, msg) in &eval.failures {
            log::warn!("{}/{} group {}: metric {} failed: {msg}", prep.dataset, prep.name, r.group_index, id.name);
        }
        let values = metric_ids
            .iter()
            .map(|id| eval.samples.iter().find(|s| &s.metric == id).map(|s| s.value))
            .collect();
        if gt.is_some() {
            counts.matched += 1;
        } else {
            counts.unmatched += 1;
        }
        if settings.montage_stride > 0 && rows.len() % settings.montage_stride == 0 {
            montage.push(MontageFrame {
                group_index: r.group_index,
                timestamp: r.timestamp,
                events: event_count_image(&prep.stream, group),
                reconstruction: r.image.clone(),
                ground_truth: frame.cloned(),
            });
        }
        rows.push(TimelineRow { timestamp: r.timestamp, group_index: r.group_index, event_rate: group.event_rate(), matched: gt.is_some(), values });
    }
    counts.scored = rows.len();
    registry.shutdown();

    let means = metric_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.name.clone(), mean(rows.iter().filter_map(|r: &TimelineRow| r.values[i]))))
        .collect();
    SequenceResult {
        reconstructor: cfg.label(),
        dataset: prep.dataset.clone(),
        sequence: prep.name.clone(),
        counts,
        means,
        failed: output.failure.is_some(),
        error: output.failure,
        rows,
        montage,
    }
}

pub fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

/// Dataset means are the arithmetic mean of per-sequence means of non-failed sequences.
pub fn aggregate_datasets(sequences: &[SequenceResult], metric_ids: &[MetricId], reconstructors: &[String]) -> Vec<DatasetSummary> {
    let mut out = Vec::new();
    for rec in reconstructors {
        let mut datasets: Vec<&str> = Vec::new();
        for s in sequences.iter().filter(|s| &s.reconstructor == rec) {
            if !datasets.contains(&s.dataset.as_str()) {
                datasets.push(&s.dataset);
            }
        }
        for ds in datasets {
            let members: Vec<&SequenceResult> = sequences.iter().filter(|s| &s.reconstructor == rec && s.dataset == ds).collect();
            let ok: Vec<&&SequenceResult> = members.iter().filter(|s| !s.failed).collect();
            let means = metric_ids
                .iter()
                .map(|id| (id.name.clone(), mean(ok.iter().filter_map(|s| s.means.get(&id.name).copied().flatten()))))
                .collect();
            out.push(DatasetSummary {
                reconstructor: rec.clone(),
                dataset: ds.to_string(),
                means,
                sequences: ok.len(),
                failed: members.len() - ok.len(),
            });
        }
    }
    out
}

/// Runs every (reconstructor, sequence) pair with bounded parallelism.
pub fn run_loaded(sequences: &[LoadedSequence], settings: &RunSettings, config_echo: Option<serde_json::Value>) -> Result<RunResult> {
    let metric_ids = settings.metric_ids();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let results = pool.install(|| {
        let prepared: Vec<std::result::Result<PreparedSequence, String>> =
            sequences.par_iter().map(|s| prepare_sequence(s, settings).map_err(|e| e.to_string())).collect();
        let jobs: Vec<(&ReconstructorConfig, usize)> =
            settings.reconstructors.iter().flat_map(|r| (0..sequences.len()).map(move |i| (r, i))).collect();
        jobs.par_iter()
            .map(|&(cfg, i)| match &prepared[i] {
                Ok(prep) => run_sequence(prep, cfg, settings, &metric_ids),
                Err(e) => failed_result(cfg, &sequences[i].dataset, &sequences[i].data.name, e.clone()),
            })
            .collect::<Vec<_>>()
    });

    let labels: Vec<String> = settings.reconstructors.iter().map(ReconstructorConfig::label).collect();
    let datasets = aggregate_datasets(&results, &metric_ids, &labels);
    Ok(RunResult { tool_version: crate::VERSION.to_string(), metrics: metric_ids, sequences: results, datasets, config: config_echo })
}

/// Loads the configured data and runs the full pipeline once.
pub fn run_standard_eval(config: &EvalConfig) -> Result<RunResult> {
    let sequences = load_sequences(config)?;
    let settings = RunSettings::from_config(config)?;
    run_loaded(&sequences, &settings, Some(serde_json::to_value(config).expect("config serializes")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Frame};

    fn sequence(name: &str, dataset: &str, n_frames: usize) -> LoadedSequence {
        let g = SensorGeometry::new(16, 12).unwrap();
        let events = (0..400)
            .map(|i| Event::new(i as f64 * 0.001, (i * 7 % 16) as u16, (i * 5 % 12) as u16, if i % 2 == 0 { 1 } else { -1 }))
            .collect();
        let frames = (0..n_frames)
            .map(|k| Frame { timestamp: k as f64 * 0.04, image: Image::filled(16, 12, (k % 5) as f64 / 4.0) })
            .collect();
        let data = SequenceDataset::new(
            name,
            EventStream::new(g, events).unwrap(),
            Some(FrameStream::new(g, frames).unwrap()),
            None,
        )
        .unwrap();
        LoadedSequence { dataset: dataset.into(), data }
    }

    fn settings() -> RunSettings {
        RunSettings {
            grouping: GroupingSpec::BetweenFrames,
            matching: MatchPolicy::default(),
            bins: 5,
            tensor_norm: TensorNormSpec::None,
            pad: PadSpec::default(),
            postproc: PostProcSpec::default(),
            reconstructors: vec![ReconstructorConfig::builtin(BuiltinReconstructor::VoxelCollapse)],
            metrics: vec![MetricConfig::Name("mse".into())],
            noise_rate: 0.0,
            drop_ratio: 0.0,
            frame_discard: 0.0,
            seed: 0,
            parallelism: 2,
            montage_stride: 0,
            plugin_timeout: Duration::from_secs(30),
        }
    }

    #[test]
    fn between_frames_timeline_length() {
        let seqs = vec![sequence("a", "d", 11)];
        let r = run_loaded(&seqs, &settings(), None).unwrap();
        assert_eq!(r.sequences[0].rows.len(), 10);
        assert!(r.sequences[0].rows.iter().all(|row| row.matched && row.values[0].is_some()));
    }

    #[test]
    fn dataset_mean_is_mean_of_sequence_means() {
        let seqs = vec![sequence("a", "d", 11), sequence("b", "d", 6)];
        let r = run_loaded(&seqs, &settings(), None).unwrap();
        let m1 = r.sequences[0].means["mse"].unwrap();
        let m2 = r.sequences[1].means["mse"].unwrap();
        assert_eq!(r.datasets.len(), 1);
        assert_eq!(r.datasets[0].means["mse"], Some((m1 + m2) / 2.0));
    }

    #[test]
    fn eval_window_restricts_rows() {
        let mut seq = sequence("a", "d", 11);
        seq.data.eval_window = Some((0.1, 0.3));
        let r = run_loaded(&[seq], &settings(), None).unwrap();
        let times: Vec<f64> = r.sequences[0].rows.iter().map(|row| row.timestamp).collect();
        assert!(times.iter().all(|&t| (0.1..=0.3).contains(&t)));
        assert_eq!(times.len(), 5);
        assert_eq!(r.sequences[0].counts.groups, 10);
    }

    #[test]
    fn preparation_failure_is_isolated() {
        let mut bad = sequence("bad", "d", 11);
        bad.data.ground_truth = None;
        let seqs = vec![sequence("a", "d", 11), bad];
        let r = run_loaded(&seqs, &settings(), None).unwrap();
        assert!(!r.sequences[0].failed);
        assert!(r.sequences[1].failed);
        assert_eq!(r.datasets[0].sequences, 1);
        assert_eq!(r.datasets[0].failed, 1);
        assert_eq!(r.datasets[0].means["mse"], r.sequences[0].means["mse"]);
    }

    #[test]
    fn discard_keeps_endpoints() {
        let frames = sequence("a", "d", 50).data.ground_truth.unwrap();
        let kept = discard_frames(&frames, 0.9, 4);
        assert_eq!(kept.frames()[0].timestamp, frames.frames()[0].timestamp);
        assert_eq!(kept.frames().last().unwrap().timestamp, frames.frames().last().unwrap().timestamp);
        assert_eq!(discard_frames(&frames, 0.0, 4), frames);
    }

    #[test]
    fn derived_seeds_differ_by_key() {
        assert_ne!(derive_seed(0, "a/noise"), derive_seed(0, "a/drop"));
        assert_eq!(derive_seed(3, "x"), derive_seed(3, "x"));
    }
}
