//! Full-reference image metrics and the metric registry.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, data
//! range 1, population (not sample) local statistics, and averages the SSIM map
//! over positions where the window lies fully inside the image.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::plugin::PluginSession;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
pub const SSIM_C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FullReference,
    NoReference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    Builtin,
    Plugin,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricId {
    pub name: String,
    pub kind: MetricKind,
    pub direction: Direction,
    pub source: MetricSource,
}

impl MetricId {
    pub fn mse() -> Self {
        Self { name: "mse".into(), kind: MetricKind::FullReference, direction: Direction::LowerBetter, source: MetricSource::Builtin }
    }

    pub fn ssim() -> Self {
        Self { name: "ssim".into(), kind: MetricKind::FullReference, direction: Direction::HigherBetter, source: MetricSource::Builtin }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mse" => Some(Self::mse()),
            "ssim" => Some(Self::ssim()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSample {
    pub timestamp: f64,
    pub value: f64,
    pub metric: MetricId,
}

fn check_pair(pred: &Image, gt: &Image) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::Dimension(format!("prediction {:?} vs ground truth {:?}", pred.dims(), gt.dims())));
    }
    Ok(())
}

pub fn mse(pred: &Image, gt: &Image) -> Result<f64> {
    check_pair(pred, gt)?;
    let n = pred.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / n as f64)
}

/// Normalized 1-D Gaussian taps for the SSIM window.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / total).collect()
}

/// Separable filter evaluated only where the window fits: output is `(h-k+1) x (w-k+1)`.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = line[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src_row = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += kv * v;
            }
        }
    }
    out
}

pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    check_pair(pred, gt)?;
    let (h, w) = pred.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, image is {h}x{w}")));
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let a = pred.data();
    let b = gt.data();
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(&|x, _| x * x), h, w, &k);
    let bb = filter_valid(&prod(&|_, y| y * y), h, w, &k);
    let ab = filter_valid(&prod(&|x, y| x * y), h, w, &k);

    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

pub enum RegisteredMetric {
    Builtin(MetricId),
    Plugin { id: MetricId, session: Mutex<PluginSession> },
}

impl RegisteredMetric {
    pub fn id(&self) -> &MetricId {
        match self {
            RegisteredMetric::Builtin(id) | RegisteredMetric::Plugin { id, .. } => id,
        }
    }

    fn evaluate(&self, pred: &Image, gt: Option<&Image>) -> std::result::Result<f64, String> {
        match self {
            RegisteredMetric::Builtin(id) => {
                let gt = gt.ok_or("full-reference metric without ground truth")?;
                let value = match id.name.as_str() {
                    "mse" => mse(pred, gt),
                    "ssim" => ssim(pred, gt),
                    other => return Err(format!("unknown builtin metric {other}")),
                };
                value.map_err(|e| e.to_string())
            }
            RegisteredMetric::Plugin { session, .. } => {
                let mut session = session.lock().map_err(|_| "metric session poisoned".to_string())?;
                session.metric_query(pred, gt).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Default)]
pub struct MetricRegistry {
    metrics: Vec<RegisteredMetric>,
}

impl MetricRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins(names: &[&str]) -> Result<Self> {
        let mut reg = Self::new();
        for name in names {
            let id = MetricId::builtin(name).ok_or_else(|| Error::Config(format!("unknown builtin metric {name:?}")))?;
            reg.push(RegisteredMetric::Builtin(id));
        }
        Ok(reg)
    }

    pub fn push(&mut self, metric: RegisteredMetric) {
        self.metrics.push(metric);
    }

    pub fn ids(&self) -> Vec<MetricId> {
        self.metrics.iter().map(|m| m.id().clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn first_full_reference(&self) -> Option<&MetricId> {
        self.metrics.iter().map(RegisteredMetric::id).find(|id| id.kind == MetricKind::FullReference)
    }

    pub fn shutdown(&mut self) {
        for m in &mut self.metrics {
            if let RegisteredMetric::Plugin { session, .. } = m {
                if let Ok(s) = session.get_mut() {
                    let _ = s.shutdown();
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairEvaluation {
    pub samples: Vec<MetricSample>,
    pub failures: Vec<(MetricId, String)>,
}

/// Runs every applicable metric; full-reference metrics are skipped when `gt` is absent.
pub fn evaluate_pair(registry: &MetricRegistry, timestamp: f64, pred: &Image, gt: Option<&Image>) -> PairEvaluation {
    let mut out = PairEvaluation::default();
    for metric in &registry.metrics {
        let id = metric.id();
        let reference = match id.kind {
            MetricKind::FullReference => match gt {
                Some(g) => Some(g),
                None => continue,
            },
            MetricKind::NoReference => None,
        };
        match metric.evaluate(pred, reference) {
            Ok(value) if value.is_finite() => out.samples.push(MetricSample { timestamp, value, metric: id.clone() }),
            Ok(value) => out.failures.push((id.clone(), format!("non-finite value {value}"))),
            Err(e) => out.failures.push((id.clone(), e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        Image::new(w, h, (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect()).unwrap()
    }

    #[test]
    fn mse_cases() {
        let a = Image::filled(8, 8, 0.5);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &Image::filled(8, 8, 0.25)).unwrap(), 0.0625);
        assert!(mse(&a, &Image::filled(8, 7, 0.25)).is_err());
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = img(32, 24, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let zero = Image::filled(16, 16, 0.0);
        let one = Image::filled(16, 16, 1.0);
        let expected = SSIM_C1 / (1.0 + SSIM_C1);
        assert!((ssim(&zero, &one).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 9.999e-5).abs() < 1e-8);
        assert!(ssim(&Image::filled(10, 20, 0.0), &Image::filled(10, 20, 0.0)).is_err());
    }

    #[test]
    fn kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(k[i], k[10 - i]);
        }
    }

    #[test]
    fn registry_applicability() {
        let reg = MetricRegistry::with_builtins(&["mse"]).unwrap();
        let a = Image::filled(12, 12, 0.5);
        assert_eq!(evaluate_pair(&reg, 0.0, &a, Some(&a)).samples.len(), 1);
        assert!(evaluate_pair(&reg, 0.0, &a, None).samples.is_empty());
        assert!(evaluate_pair(&MetricRegistry::new(), 0.0, &a, Some(&a)).samples.is_empty());
        assert!(MetricRegistry::with_builtins(&["lpips"]).is_err());
        assert_eq!(reg.first_full_reference(), Some(&MetricId::mse()));
    }

    #[test]
    fn directions() {
        assert_eq!(MetricId::mse().direction, Direction::LowerBetter);
        assert_eq!(MetricId::ssim().direction, Direction::HigherBetter);
    }
}
