//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evbench::event::{Event, EventStream, SensorGeometry};
use evbench::image::Image;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn plugin_exe() -> String {
    env!("CARGO_BIN_EXE_evbench-plugin-fixture").to_string()
}

pub fn plugin_cmd(mode: &[&str]) -> Vec<String> {
    std::iter::once(plugin_exe()).chain(mode.iter().map(|s| s.to_string())).collect()
}

pub fn cli_exe() -> &'static str {
    env!("CARGO_BIN_EXE_evbench")
}

/// Sorted random events; `t` starts at `t0` and advances by up to `max_dt`.
pub fn random_events(r: &mut ChaCha8Rng, n: usize, g: SensorGeometry, t0: f64, max_dt: f64) -> Vec<Event> {
    let mut t = t0;
    (0..n)
        .map(|_| {
            t += r.random::<f64>() * max_dt;
            let p = if r.random::<bool>() { 1 } else { -1 };
            Event::new(t, r.random_range(0..g.width), r.random_range(0..g.height), p)
        })
        .collect()
}

pub fn random_stream(r: &mut ChaCha8Rng, n: usize, g: SensorGeometry) -> EventStream {
    EventStream::new(g, random_events(r, n, g, 0.0, 1e-3)).unwrap()
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..w * h).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Per-event accumulation straight from the tent-kernel definition, one bin at a time.
pub fn voxel_oracle(events: &[Event], g: SensorGeometry, window: (f64, f64), bins: usize) -> Vec<f64> {
    let (w, h) = (g.width as usize, g.height as usize);
    let mut out = vec![0.0; bins * h * w];
    let dt = window.1 - window.0;
    for e in events {
        let tn = if dt > 0.0 { (bins - 1) as f64 * (e.t - window.0) / dt } else { 0.0 };
        for b in 0..bins {
            let weight = (1.0 - (tn - b as f64).abs()).max(0.0);
            out[b * h * w + e.y as usize * w + e.x as usize] += f64::from(e.p) * weight;
        }
    }
    out
}

/// Membership lists for the fixed-number scheme.
pub fn partition_fixed_number(n_events: usize, n_g: usize) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut current = Vec::new();
    for i in 0..n_events {
        current.push(i);
        if current.len() == n_g {
            groups.push(std::mem::take(&mut current));
        }
    }
    groups
}

/// Membership lists for fixed windows over `[t0, t1]` (last window closed).
pub fn partition_fixed_duration(times: &[f64], t_g: f64, span: (f64, f64)) -> Vec<Vec<usize>> {
    let (t0, t1) = span;
    let mut count = 1;
    while t0 + count as f64 * t_g < t1 {
        count += 1;
    }
    (0..count)
        .map(|k| {
            let lo = t0 + k as f64 * t_g;
            let hi = t0 + (k + 1) as f64 * t_g;
            let last = k + 1 == count;
            times
                .iter()
                .enumerate()
                .filter(|(_, &t)| t >= lo && (t < hi || (last && t <= t1)))
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Membership lists for `[s_k, s_{k+1})` windows.
pub fn partition_between_frames(times: &[f64], frames: &[f64]) -> Vec<Vec<usize>> {
    frames
        .windows(2)
        .map(|w| times.iter().enumerate().filter(|(_, &t)| t >= w[0] && t < w[1]).map(|(i, _)| i).collect())
        .collect()
}

pub fn mse_oracle(a: &Image, b: &Image) -> f64 {
    let mut total = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            total += (a.get(x, y) - b.get(x, y)).powi(2);
        }
    }
    total / (a.width() * a.height()) as f64
}

/// SSIM with an explicit 2-D Gaussian window evaluated at every valid position.
pub fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let (size, sigma) = (11usize, 1.5f64);
    let r = (size / 2) as f64;
    let mut win = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            win[i * size + j] = (-((i as f64 - r).powi(2) + (j as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
    }
    let norm: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= norm);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut n = 0usize;
    for y0 in 0..=a.height() - size {
        for x0 in 0..=a.width() - size {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let wgt = win[i * size + j];
                    ma += wgt * a.get(x0 + j, y0 + i);
                    mb += wgt * b.get(x0 + j, y0 + i);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let wgt = win[i * size + j];
                    let da = a.get(x0 + j, y0 + i) - ma;
                    let db = b.get(x0 + j, y0 + i) - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    total / n as f64
}

/// Writes the bundled synthetic dataset once per test binary and returns its eval config.
pub fn fixture_config() -> PathBuf {
    use std::sync::OnceLock;
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    let dir = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        evbench::fixture::write_fixture_dataset(dir.path(), &evbench::fixture::bundled_specs()).unwrap();
        dir
    });
    dir.path().join("eval.json")
}

pub fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Random, truncated, and corrupted wire frames.
pub fn fuzz_corpus(seed: u64, n: usize) -> Vec<Vec<u8>> {
    use evbench::plugin::wire::{self, Tensor, WireMessage, KNOWN_TAGS};
    let mut r = rng(seed);
    (0..n)
        .map(|i| match i % 5 {
            0 => (0..r.random_range(0..64)).map(|_| r.random::<u8>()).collect(),
            1 => {
                let tag = KNOWN_TAGS[r.random_range(0..KNOWN_TAGS.len())];
                let payload: Vec<u8> = (0..r.random_range(0..32)).map(|_| r.random::<u8>()).collect();
                let mut bytes = WireMessage::new(tag, payload).encode();
                let cut = r.random_range(0..bytes.len());
                bytes.truncate(cut);
                bytes
            }
            2 => {
                let dims: Vec<usize> = (0..r.random_range(1..=4)).map(|_| r.random_range(1..4)).collect();
                let count = dims.iter().product();
                let t = Tensor { dims, data: vec![0.5; count] };
                let mut payload = wire::encode_tensor(&t).unwrap();
                let at = r.random_range(0..payload.len());
                payload[at] = r.random::<u8>();
                if r.random::<bool>() {
                    let cut = r.random_range(0..payload.len());
                    payload.truncate(cut);
                }
                WireMessage::new(wire::TENS, payload).encode()
            }
            3 => {
                let mut bytes = vec![];
                bytes.extend_from_slice(&KNOWN_TAGS[r.random_range(0..KNOWN_TAGS.len())]);
                bytes.extend_from_slice(&r.random::<u32>().to_le_bytes());
                bytes.extend((0..r.random_range(0..16)).map(|_| r.random::<u8>()));
                bytes
            }
            _ => {
                let mut bytes = WireMessage::new(wire::METQ, vec![0u8; r.random_range(0..40)]).encode();
                let at = r.random_range(0..bytes.len());
                bytes[at] ^= 1 << r.random_range(0..8);
                bytes
            }
        })
        .collect()
}

/// Feeds every decoder with `bytes`; returns true when nothing panicked.
pub fn decoders_survive(bytes: &[u8]) -> bool {
    use evbench::plugin::wire;
    std::panic::catch_unwind(|| {
        if let Ok((msg, used)) = wire::decode_message(bytes) {
            assert!(used <= bytes.len());
            let _ = wire::decode_tensor(&msg.payload);
            let _ = wire::decode_tensor_prefix(&msg.payload);
            let _ = wire::parse_key_values(&msg.payload);
        }
        let mut reader = bytes;
        while let Ok(Some(_)) = wire::read_message(&mut reader) {}
        let _ = wire::decode_tensor(bytes);
    })
    .is_ok()
}
