//! Image post-processing applied to raw reconstructor output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_LO_PCT: f64 = 1.0;
pub const DEFAULT_HI_PCT: f64 = 99.0;
const DEGENERATE_RANGE: f64 = 1e-6;
const EXP_INPUT_LIMIT: f64 = 80.0;
const HIST_LEVELS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PostProcStep {
    Exponential,
    RobustMinMax {
        #[serde(default = "default_lo")]
        lo_pct: f64,
        #[serde(default = "default_hi")]
        hi_pct: f64,
    },
    HistogramEqualize,
}

fn default_lo() -> f64 {
    DEFAULT_LO_PCT
}

fn default_hi() -> f64 {
    DEFAULT_HI_PCT
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostProcSpec {
    pub steps: Vec<PostProcStep>,
}

impl PostProcSpec {
    pub fn new(steps: Vec<PostProcStep>) -> Result<Self> {
        let spec = Self { steps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for step in &self.steps {
            if let PostProcStep::RobustMinMax { lo_pct, hi_pct } = *step {
                if !(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0) {
                    return Err(Error::Invalid(format!("percentiles must satisfy 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})")));
                }
            }
        }
        Ok(())
    }

    pub fn equalizes(&self) -> bool {
        self.steps.contains(&PostProcStep::HistogramEqualize)
    }

    /// Applies the steps in order.
    pub fn apply(&self, image: &Image) -> Image {
        self.steps.iter().fold(image.clone(), |img, step| match *step {
            PostProcStep::Exponential => apply_exponential(&img),
            PostProcStep::RobustMinMax { lo_pct, hi_pct } => robust_minmax_normalize(&img, lo_pct, hi_pct),
            PostProcStep::HistogramEqualize => histogram_equalize(&img),
        })
    }
}

/// Linear-interpolated percentile of already sorted values (`pct` in `[0, 100]`).
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Clamps to the `[lo_pct, hi_pct]` percentiles and rescales to `[0, 1]`.
/// A range narrower than 1e-6 yields a uniform 0.5 image.
pub fn robust_minmax_normalize(image: &Image, lo_pct: f64, hi_pct: f64) -> Image {
    if image.data().is_empty() {
        return image.clone();
    }
    let mut sorted = image.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, lo_pct);
    let hi = percentile_sorted(&sorted, hi_pct);
    let range = hi - lo;
    if !(range >= DEGENERATE_RANGE) {
        return image.map(|_| 0.5);
    }
    image.map(|v| (v.clamp(lo, hi) - lo) / range)
}

pub fn apply_exponential(image: &Image) -> Image {
    image.map(|v| v.min(EXP_INPUT_LIMIT).exp())
}

/// Global equalization on 256 levels: a pixel at level `l` maps to the fraction of
/// pixels at level `<= l`.
pub fn histogram_equalize(image: &Image) -> Image {
    let n = image.data().len();
    if n == 0 {
        return image.clone();
    }
    let level = |v: f64| (v.clamp(0.0, 1.0) * (HIST_LEVELS - 1) as f64).round() as usize;
    let mut hist = [0usize; HIST_LEVELS];
    for &v in image.data() {
        hist[level(v)] += 1;
    }
    let mut cdf = [0.0f64; HIST_LEVELS];
    let mut acc = 0usize;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc as f64 / n as f64;
    }
    image.map(|v| cdf[level(v)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_minmax_degenerate_and_full_range() {
        let c = Image::filled(4, 4, 0.3);
        assert!(robust_minmax_normalize(&c, 1.0, 99.0).data().iter().all(|&v| v == 0.5));
        let img = Image::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(robust_minmax_normalize(&img, 0.0, 100.0), img);
    }

    #[test]
    fn robust_minmax_zero_hundred_is_plain_minmax() {
        let img = Image::new(4, 1, vec![-2.0, 0.0, 1.0, 6.0]).unwrap();
        assert_eq!(robust_minmax_normalize(&img, 0.0, 100.0).data(), &[0.0, 0.25, 0.375, 1.0]);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&s, 50.0), 2.0);
        assert_eq!(percentile_sorted(&s, 10.0), 0.4);
        assert_eq!(percentile_sorted(&s, 100.0), 4.0);
    }

    #[test]
    fn exponential() {
        let img = Image::new(3, 1, vec![0.0, std::f64::consts::LN_2, 1000.0]).unwrap();
        let out = apply_exponential(&img);
        assert_eq!(out.data()[0], 1.0);
        assert!((out.data()[1] - 2.0).abs() < 1e-12);
        assert_eq!(out.data()[2], 80f64.exp());
    }

    #[test]
    fn equalize_cases() {
        let c = Image::filled(4, 4, 0.3);
        let out = histogram_equalize(&c);
        assert!(out.data().iter().all(|&v| v == out.data()[0]));

        let two = Image::new(4, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(histogram_equalize(&two).data(), &[0.5, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn spec_validation_and_order() {
        assert!(PostProcSpec::new(vec![PostProcStep::RobustMinMax { lo_pct: 50.0, hi_pct: 50.0 }]).is_err());
        assert!(PostProcSpec::new(vec![PostProcStep::RobustMinMax { lo_pct: -1.0, hi_pct: 50.0 }]).is_err());
        let img = Image::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let chain = PostProcSpec::new(vec![
            PostProcStep::Exponential,
            PostProcStep::RobustMinMax { lo_pct: 0.0, hi_pct: 100.0 },
        ])
        .unwrap();
        let e = std::f64::consts::E;
        let expected = [0.0, (e - 1.0) / (e * e - 1.0), 1.0];
        for (a, b) in chain.apply(&img).data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_shape() {
        let spec: PostProcSpec =
            serde_json::from_str(r#"[{"step":"exponential"},{"step":"robust_min_max"},{"step":"histogram_equalize"}]"#).unwrap();
        assert_eq!(spec.steps[1], PostProcStep::RobustMinMax { lo_pct: 1.0, hi_pct: 99.0 });
        assert!(spec.equalizes());
    }
}
