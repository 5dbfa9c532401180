//! Raw-event degradations applied before grouping.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` so outputs are
//! reproducible across platforms and runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform background activity: `rate` events per pixel per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    rate: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Invalid(format!("noise rate must be finite and >= 0, got {rate}")));
        }
        Ok(Self { rate, seed })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Bernoulli thinning: each event is dropped independently with `drop_ratio`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownsampleSpec {
    drop_ratio: f64,
    seed: u64,
}

impl DownsampleSpec {
    pub fn new(drop_ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&drop_ratio) {
            return Err(Error::Invalid(format!("drop ratio must lie in [0, 1], got {drop_ratio}")));
        }
        Ok(Self { drop_ratio, seed })
    }

    pub fn drop_ratio(&self) -> f64 {
        self.drop_ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn downsample_events(stream: &EventStream, spec: &DownsampleSpec) -> EventStream {
    if spec.drop_ratio == 0.0 {
        return stream.clone();
    }
    let mut rng = rng_from_seed(spec.seed);
    let kept = stream.events().iter().filter(|_| rng.random::<f64>() >= spec.drop_ratio).copied().collect();
    EventStream::from_parts_unchecked(stream.geometry(), kept)
}

pub fn inject_noise(stream: &EventStream, spec: &NoiseSpec) -> Result<EventStream> {
    if spec.rate == 0.0 {
        return Ok(stream.clone());
    }
    let (t0, t1) = match stream.span() {
        Some((a, b)) if b > a => (a, b),
        _ => return Err(Error::Invalid("cannot place noise: stream span is zero".into())),
    };
    let geometry = stream.geometry();
    let mut rng = rng_from_seed(spec.seed);
    let mean = spec.rate * geometry.pixels() as f64 * (t1 - t0);
    let count = Poisson::new(mean).map_err(|e| Error::Invalid(format!("noise rate: {e}")))?.sample(&mut rng) as usize;

    let mut noise: Vec<Event> = (0..count)
        .map(|_| {
            let t = (t0 + rng.random::<f64>() * (t1 - t0)).min(t1);
            let x = rng.random_range(0..geometry.width);
            let y = rng.random_range(0..geometry.height);
            let p = if rng.random::<bool>() { 1 } else { -1 };
            Event { t, x, y, p }
        })
        .collect();
    noise.sort_by(|a, b| a.t.total_cmp(&b.t));

    // Stable merge; on equal timestamps the original event comes first.
    let original = stream.events();
    let mut merged = Vec::with_capacity(original.len() + noise.len());
    let (mut i, mut j) = (0, 0);
    while i < original.len() && j < noise.len() {
        if noise[j].t < original[i].t {
            merged.push(noise[j]);
            j += 1;
        } else {
            merged.push(original[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&original[i..]);
    merged.extend_from_slice(&noise[j..]);
    Ok(EventStream::from_parts_unchecked(geometry, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::SensorGeometry;

    fn stream(n: usize, span: f64) -> EventStream {
        let g = SensorGeometry::new(240, 180).unwrap();
        let mut rng = rng_from_seed(7);
        let events = (0..n)
            .map(|i| Event {
                t: span * i as f64 / (n.max(2) - 1) as f64,
                x: rng.random_range(0..240),
                y: rng.random_range(0..180),
                p: if rng.random::<bool>() { 1 } else { -1 },
            })
            .collect();
        EventStream::new(g, events).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DownsampleSpec::new(1.5, 0).is_err());
        assert!(DownsampleSpec::new(-0.1, 0).is_err());
        assert!(NoiseSpec::new(-1.0, 0).is_err());
        assert!(NoiseSpec::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn downsample_identity_and_degenerate() {
        let s = stream(1000, 1.0);
        assert_eq!(downsample_events(&s, &DownsampleSpec::new(0.0, 1).unwrap()), s);
        let empty = downsample_events(&s, &DownsampleSpec::new(1.0, 1).unwrap());
        assert!(empty.is_empty());
        assert_eq!(empty.geometry(), s.geometry());
    }

    #[test]
    fn downsample_binomial_count() {
        let s = stream(100_000, 1.0);
        let out = downsample_events(&s, &DownsampleSpec::new(0.3, 42).unwrap());
        let sigma = (100_000f64 * 0.3 * 0.7).sqrt();
        let dev = (out.len() as f64 - 70_000.0).abs();
        assert!(dev <= 3.0 * sigma, "kept {} (sigma {sigma})", out.len());
    }

    #[test]
    fn downsample_preserves_order_and_is_deterministic() {
        let s = stream(5000, 2.0);
        let spec = DownsampleSpec::new(0.5, 9).unwrap();
        let a = downsample_events(&s, &spec);
        assert_eq!(a, downsample_events(&s, &spec));
        // survivors appear as a subsequence of the input
        let mut it = s.events().iter();
        for e in a.events() {
            assert!(it.any(|o| o == e));
        }
    }

    #[test]
    fn noise_identity_and_zero_span() {
        let s = stream(100, 1.0);
        assert_eq!(inject_noise(&s, &NoiseSpec::new(0.0, 1).unwrap()).unwrap(), s);
        let single = stream(1, 0.0);
        assert!(inject_noise(&single, &NoiseSpec::new(1.0, 1).unwrap()).is_err());
        assert_eq!(inject_noise(&single, &NoiseSpec::new(0.0, 1).unwrap()).unwrap(), single);
    }

    #[test]
    fn noise_poisson_count_and_validity() {
        let s = stream(2, 1.0);
        let out = inject_noise(&s, &NoiseSpec::new(1.0, 3).unwrap()).unwrap();
        let added = (out.len() - 2) as f64;
        let sigma = 43_200f64.sqrt();
        assert!((added - 43_200.0).abs() <= 3.0 * sigma, "added {added}");
        assert!(out.events().windows(2).all(|w| w[0].t <= w[1].t));
        assert!(out.events().iter().all(|e| out.geometry().contains(e.x, e.y) && (e.p == 1 || e.p == -1)));
        // revalidating through the checked constructor must succeed
        EventStream::new(out.geometry(), out.events().to_vec()).unwrap();
    }

    #[test]
    fn noise_keeps_original_order_and_composes() {
        let s = stream(3000, 0.5);
        let noisy = inject_noise(&s, &NoiseSpec::new(0.2, 11).unwrap()).unwrap();
        let mut it = noisy.events().iter();
        for e in s.events() {
            assert!(it.any(|o| o == e));
        }
        let thinned = downsample_events(&noisy, &DownsampleSpec::new(0.4, 12).unwrap());
        EventStream::new(thinned.geometry(), thinned.events().to_vec()).unwrap();
        assert_eq!(inject_noise(&s, &NoiseSpec::new(0.2, 11).unwrap()).unwrap(), noisy);
    }
}
