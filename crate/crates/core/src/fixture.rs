//! Deterministic synthetic sequences standing in for real datasets.
//!
//! A textured scene drifts across the sensor while a bright blob circles over it.
//! Events come from an idealized sensor model: each pixel keeps a reference log
//! intensity and fires one event per contrast-threshold crossing, with timestamps
//! linearly interpolated inside the simulation step. Ground-truth frames are the
//! same scene sampled at a fixed rate and quantized to 8 bits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::event::{write_binary_events, write_frame_stream, Event, EventStream, Frame, FrameStream, SensorGeometry, SequenceDataset};
use crate::image::Image;
use crate::preprocess::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSpec {
    pub name: String,
    pub width: u16,
    pub height: u16,
    /// Seconds.
    pub duration: f64,
    pub fps: f64,
    /// Log-intensity contrast threshold.
    pub contrast: f64,
    /// Texture drift in pixels per second.
    pub velocity: (f64, f64),
    /// Simulation step in seconds.
    pub step: f64,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(name: &str, width: u16, height: u16, duration: f64, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            width,
            height,
            duration,
            fps: 25.0,
            contrast: 0.25,
            velocity: (40.0, 15.0),
            step: 0.004,
            seed,
        }
    }
}

/// The three sequences of the bundled evaluation fixture (~200k events in total).
pub fn bundled_specs() -> Vec<FixtureSpec> {
    vec![
        FixtureSpec { velocity: (40.0, 15.0), contrast: 0.3, ..FixtureSpec::new("drift", 240, 180, 1.0, 1) },
        FixtureSpec { velocity: (-25.0, 30.0), contrast: 0.3, ..FixtureSpec::new("diagonal", 240, 180, 1.0, 2) },
        FixtureSpec { velocity: (60.0, -10.0), fps: 20.0, contrast: 0.35, ..FixtureSpec::new("fast", 240, 180, 1.0, 3) },
    ]
}

struct Scene {
    width: f64,
    height: f64,
    velocity: (f64, f64),
    phase: f64,
    blob_radius: f64,
}

impl Scene {
    fn intensity(&self, x: f64, y: f64, t: f64) -> f64 {
        let u = x - self.velocity.0 * t;
        let v = y - self.velocity.1 * t;
        let texture = 0.5 + 0.25 * (u * 0.11 + self.phase).sin() * (v * 0.07).cos() + 0.15 * ((u + v) * 0.045).sin();
        let angle = 2.0 * std::f64::consts::PI * t / 1.6 + self.phase;
        let (cx, cy) = (self.width * (0.5 + 0.25 * angle.cos()), self.height * (0.5 + 0.25 * angle.sin()));
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        let blob = 0.35 * (-d2 / (2.0 * self.blob_radius * self.blob_radius)).exp();
        (0.08 + 0.8 * texture + blob).clamp(0.02, 1.0)
    }
}

pub fn generate_sequence(spec: &FixtureSpec) -> Result<SequenceDataset> {
    let geometry = SensorGeometry::new(spec.width, spec.height)?;
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut rng = rng_from_seed(spec.seed);
    let scene = Scene {
        width: w as f64,
        height: h as f64,
        velocity: spec.velocity,
        phase: rng.random::<f64>() * std::f64::consts::TAU,
        blob_radius: 0.08 * w.min(h) as f64 + 4.0,
    };

    let log_at = |t: f64| -> Vec<f64> {
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| scene.intensity(x as f64, y as f64, t).ln()).collect()
    };
    let mut reference = log_at(0.0);
    let mut prev = reference.clone();
    let steps = (spec.duration / spec.step).round() as usize;
    let mut events = Vec::new();
    for s in 1..=steps {
        let t0 = (s - 1) as f64 * spec.step;
        let t1 = s as f64 * spec.step;
        let now = log_at(t1);
        for (i, (&l1, &l0)) in now.iter().zip(&prev).enumerate() {
            let (x, y) = ((i % w) as u16, (i / w) as u16);
            while (l1 - reference[i]).abs() >= spec.contrast {
                let p: i8 = if l1 > reference[i] { 1 } else { -1 };
                reference[i] += f64::from(p) * spec.contrast;
                let frac = if l1 != l0 { ((reference[i] - l0) / (l1 - l0)).clamp(0.0, 1.0) } else { 1.0 };
                events.push(Event { t: t0 + frac * (t1 - t0), x, y, p });
            }
        }
        prev = now;
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    let stream = EventStream::new(geometry, events)?;

    let frame_count = (spec.duration * spec.fps).floor() as usize + 1;
    let frames = (0..frame_count)
        .map(|k| {
            let t = k as f64 / spec.fps;
            let data = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .map(|(x, y)| (scene.intensity(x as f64, y as f64, t) * 255.0).round() / 255.0)
                .collect();
            Frame { timestamp: t, image: Image::new(w, h, data).expect("frame size") }
        })
        .collect();
    let frames = FrameStream::new(geometry, frames)?;
    SequenceDataset::new(spec.name.clone(), stream, Some(frames), None)
}

/// Writes the bundled sequences plus an evaluation config; returns the config path.
///
/// Layout: `<dir>/<name>/events.evt1`, `<dir>/<name>/frames/`, `<dir>/eval.json`.
pub fn write_fixture_dataset(dir: &Path, specs: &[FixtureSpec]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sequences = Vec::new();
    for spec in specs {
        let seq = generate_sequence(spec)?;
        let seq_dir = dir.join(&spec.name);
        fs::create_dir_all(&seq_dir).map_err(|e| Error::io(&seq_dir, e))?;
        write_binary_events(&seq.events, &seq_dir.join("events.evt1"))?;
        if let Some(gt) = &seq.ground_truth {
            write_frame_stream(gt, &seq_dir.join("frames"))?;
        }
        sequences.push(json!({
            "name": spec.name,
            "events": format!("{}/events.evt1", spec.name),
            "frames": format!("{}/frames", spec.name),
        }));
    }
    let config = json!({
        "datasets": [{ "name": "synthetic", "sequences": sequences }],
        "grouping": { "mode": "between_frames", "tolerance_ms": 1.0 },
        "reconstructors": [
            { "builtin": "voxel_collapse" },
            { "builtin": "leaky_integrator" }
        ],
        "metrics": ["mse", "ssim"],
    });
    let path = dir.join("eval.json");
    let text = serde_json::to_string_pretty(&config).expect("json");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
