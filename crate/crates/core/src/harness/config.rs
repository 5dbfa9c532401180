//! JSON run configuration.
//!
//! ```json
//! {
//!   "datasets": [{
//!     "name": "ecd",
//!     "sequences": [{
//!       "name": "dynamic_6dof",
//!       "events": "ecd/dynamic_6dof/events.txt",
//!       "width": 240, "height": 180,
//!       "frames": "ecd/dynamic_6dof/frames",
//!       "eval_window": [5.0, 20.0],
//!       "sort": false
//!     }]
//!   }],
//!   "grouping": { "mode": "between_frames", "n_g": 5000, "t_g_ms": 50, "tolerance_ms": 1.0 },
//!   "bins": 5,
//!   "tensor_norm": "none",
//!   "pad_multiple": 1,
//!   "postproc": [{ "step": "robust_min_max", "lo_pct": 1, "hi_pct": 99 }],
//!   "reconstructors": [
//!     { "builtin": "voxel_collapse" },
//!     { "builtin": "leaky_integrator", "tau": 0.1 },
//!     { "name": "e2vid", "plugin": ["python3", "plugin.py", "--model", "e2vid"],
//!       "tensor_norm": "nonzero_mean_std" }
//!   ],
//!   "metrics": ["mse", "ssim",
//!     { "name": "lpips", "plugin": ["python3", "plugin.py"], "kind": "full_reference", "direction": "lower_better" }],
//!   "preprocess": { "noise_rate": 0.0, "drop_ratio": 0.0 },
//!   "seed": 0,
//!   "parallelism": 1,
//!   "montage_stride": 0,
//!   "plugin_timeout_s": 30
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! `events` ending in `.evt`, `.evt1` or `.bin` are read as EVT1 (geometry from
//! the header); anything else is a text log and needs `width`/`height`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{GroupingSpec, MatchPolicy};
use crate::metrics::{Direction, MetricKind};
use crate::reconstruct::PostProcSpec;
use crate::representation::{TensorNormSpec, DEFAULT_BINS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub grouping: GroupingConfig,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub tensor_norm: TensorNormSpec,
    #[serde(default = "default_pad")]
    pub pad_multiple: usize,
    #[serde(default)]
    pub postproc: PostProcSpec,
    pub reconstructors: Vec<ReconstructorConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricConfig>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub montage_stride: usize,
    #[serde(default = "default_timeout")]
    pub plugin_timeout_s: f64,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_pad() -> usize {
    1
}

fn default_metrics() -> Vec<MetricConfig> {
    vec![MetricConfig::Name("mse".into()), MetricConfig::Name("ssim".into())]
}

fn default_parallelism() -> usize {
    1
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub sequences: Vec<SequenceConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub name: String,
    pub events: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_window: Option<[f64; 2]>,
    #[serde(default)]
    pub sort: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    FixedNumber,
    FixedDuration,
    BetweenFrames,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingConfig {
    pub mode: GroupingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_g_ms: Option<f64>,
    #[serde(default = "default_tolerance_ms")]
    pub tolerance_ms: f64,
}

fn default_tolerance_ms() -> f64 {
    1.0
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { mode: GroupingMode::BetweenFrames, n_g: None, t_g_ms: None, tolerance_ms: default_tolerance_ms() }
    }
}

impl GroupingConfig {
    pub fn spec(&self) -> Result<GroupingSpec> {
        let spec = match self.mode {
            GroupingMode::FixedNumber => GroupingSpec::FixedNumber {
                n_g: self.n_g.ok_or_else(|| Error::Config("fixed_number grouping needs `n_g`".into()))?,
            },
            GroupingMode::FixedDuration => GroupingSpec::FixedDuration {
                t_g: self.t_g_ms.ok_or_else(|| Error::Config("fixed_duration grouping needs `t_g_ms`".into()))? / 1000.0,
            },
            GroupingMode::BetweenFrames => GroupingSpec::BetweenFrames,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn match_policy(&self) -> Result<MatchPolicy> {
        MatchPolicy::new(self.tolerance_ms / 1000.0).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinReconstructor {
    VoxelCollapse,
    LeakyIntegrator,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinReconstructor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plugin: Option<Vec<String>>,
    /// Leaky integrator time constant, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    /// Overrides the run-level tensor normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor_norm: Option<TensorNormSpec>,
    /// Overrides the run-level post-processing chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postproc: Option<PostProcSpec>,
}

impl ReconstructorConfig {
    pub fn builtin(kind: BuiltinReconstructor) -> Self {
        Self { builtin: Some(kind), ..Default::default() }
    }

    pub fn plugin(name: &str, cmdline: Vec<String>) -> Self {
        Self { name: Some(name.into()), plugin: Some(cmdline), ..Default::default() }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.builtin, &self.plugin) {
            (Some(BuiltinReconstructor::VoxelCollapse), _) => "voxel_collapse".into(),
            (Some(BuiltinReconstructor::LeakyIntegrator), _) => "leaky_integrator".into(),
            (None, Some(cmd)) => cmd.join(" "),
            (None, None) => "unnamed".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.builtin, &self.plugin) {
            (Some(_), None) => {}
            (None, Some(cmd)) if !cmd.is_empty() => {}
            _ => return Err(Error::Config(format!("reconstructor `{}` needs exactly one of `builtin` or a non-empty `plugin`", self.label()))),
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) {
                return Err(Error::Config(format!("reconstructor `{}`: tau must be > 0", self.label())));
            }
        }
        if let Some(pp) = &self.postproc {
            pp.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricConfig {
    /// A builtin metric name (`mse`, `ssim`).
    Name(String),
    Plugin(PluginMetricConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginMetricConfig {
    pub name: String,
    pub plugin: Vec<String>,
    pub kind: MetricKind,
    pub direction: Direction,
}

impl MetricConfig {
    pub fn name(&self) -> &str {
        match self {
            MetricConfig::Name(n) => n,
            MetricConfig::Plugin(p) => &p.name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Background-noise events per pixel per second.
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub drop_ratio: f64,
}

impl EvalConfig {
    /// Reads and validates a config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: EvalConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for ds in &mut self.datasets {
            for seq in &mut ds.sequences {
                resolve(&mut seq.events);
                if let Some(f) = seq.frames.as_mut() {
                    resolve(f);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.iter().all(|d| d.sequences.is_empty()) {
            return Err(Error::Config("no sequences configured".into()));
        }
        if self.reconstructors.is_empty() {
            return Err(Error::Config("no reconstructors configured".into()));
        }
        let mut labels: Vec<String> = self.reconstructors.iter().map(ReconstructorConfig::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("reconstructor names must be unique".into()));
        }
        for r in &self.reconstructors {
            r.validate()?;
        }
        for m in &self.metrics {
            if let MetricConfig::Name(n) = m {
                if crate::metrics::MetricId::builtin(n).is_none() {
                    return Err(Error::Config(format!("metric {n:?} is not builtin; give it a `plugin` command line")));
                }
            }
        }
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be >= 2, got {}", self.bins)));
        }
        if self.pad_multiple == 0 {
            return Err(Error::Config("pad_multiple must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if !(self.plugin_timeout_s > 0.0) {
            return Err(Error::Config("plugin_timeout_s must be > 0".into()));
        }
        self.postproc.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.grouping.spec()?;
        self.grouping.match_policy()?;
        crate::preprocess::NoiseSpec::new(self.preprocess.noise_rate, 0).map_err(|e| Error::Config(e.to_string()))?;
        crate::preprocess::DownsampleSpec::new(self.preprocess.drop_ratio, 0).map_err(|e| Error::Config(e.to_string()))?;
        for ds in &self.datasets {
            for seq in &ds.sequences {
                if let Some([a, b]) = seq.eval_window {
                    if !(a <= b) {
                        return Err(Error::Config(format!("{}/{}: eval_window [{a}, {b}] is empty", ds.name, seq.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "datasets": [{"name": "d", "sequences": [{"name": "s", "events": "s/events.txt", "width": 8, "height": 6}]}],
        "reconstructors": [{"builtin": "voxel_collapse"}]
    }"#;

    #[test]
    fn defaults() {
        let c: EvalConfig = serde_json::from_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.bins, 5);
        assert_eq!(c.grouping.mode, GroupingMode::BetweenFrames);
        assert_eq!(c.grouping.match_policy().unwrap().tolerance, 0.001);
        assert_eq!(c.metrics.len(), 2);
        assert_eq!(c.parallelism, 1);
    }

    #[test]
    fn resolves_relative_paths() {
        let mut c: EvalConfig = serde_json::from_str(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(c.datasets[0].sequences[0].events, PathBuf::from("/data/run/s/events.txt"));
    }

    #[test]
    fn rejects_unknown_metric_without_plugin() {
        let mut c: EvalConfig = serde_json::from_str(MINIMAL).unwrap();
        c.metrics.push(MetricConfig::Name("lpips".into()));
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("lpips")));
    }

    #[test]
    fn plugin_metric_parses() {
        let m: MetricConfig = serde_json::from_str(
            r#"{"name": "lpips", "plugin": ["python3", "p.py"], "kind": "full_reference", "direction": "lower_better"}"#,
        )
        .unwrap();
        assert!(matches!(m, MetricConfig::Plugin(ref p) if p.kind == MetricKind::FullReference));
    }

    #[test]
    fn grouping_needs_parameters() {
        let g = GroupingConfig { mode: GroupingMode::FixedNumber, ..Default::default() };
        assert!(g.spec().is_err());
        let g = GroupingConfig { mode: GroupingMode::FixedDuration, t_g_ms: Some(50.0), ..Default::default() };
        assert_eq!(g.spec().unwrap(), GroupingSpec::FixedDuration { t_g: 0.05 });
    }

    #[test]
    fn reconstructor_needs_one_backend() {
        let mut c: EvalConfig = serde_json::from_str(MINIMAL).unwrap();
        c.reconstructors.push(ReconstructorConfig::default());
        assert!(c.validate().is_err());
        let bad: std::result::Result<EvalConfig, _> = serde_json::from_str(&MINIMAL.replace("\"builtin\"", "\"bogus\""));
        assert!(bad.is_err());
    }
}
