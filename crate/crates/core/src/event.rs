//! Event and frame domain types, plus ingestion of the on-disk formats.
//!
//! Three formats are handled here:
//!
//! * text logs with one `t x y p` event per line (`#` starts a comment),
//! * the `EVT1` binary container (16-byte header, 13-byte records, little endian);
//!   the header is magic `EVT1`, version `u8 = 1`, reserved `u8`, width `u16`,
//!   height `u16`, reserved `u16`, event count `u32`,
//! * frame directories holding `timestamps.txt` and `%06d.pgm` 8-bit P5 images.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
pub const EVT1_VERSION: u8 = 1;
pub const EVT1_HEADER_LEN: usize = 16;
pub const EVT1_RECORD_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("sensor geometry {width}x{height} must be at least 1x1")));
        }
        Ok(Self { width, height })
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

/// A single brightness-change event. Polarity is canonically `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, p: i8) -> Self {
        Self { t, x, y, p }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates every event and the ordering of timestamps.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        for (index, e) in events.iter().enumerate() {
            validate_event(&geometry, index, e)?;
        }
        if let Some(index) = first_unsorted(&events) {
            return Err(Error::NotSorted { index, prev: events[index - 1].t, next: events[index].t });
        }
        Ok(Self { geometry, events })
    }

    /// Like [`EventStream::new`] but stably sorts by timestamp instead of rejecting.
    pub fn new_sorted(geometry: SensorGeometry, mut events: Vec<Event>) -> Result<Self> {
        for (index, e) in events.iter().enumerate() {
            validate_event(&geometry, index, e)?;
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { geometry, events })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self { geometry, events: Vec::new() }
    }

    // Callers guarantee the invariants (used by transformations of valid streams).
    pub(crate) fn from_parts_unchecked(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        debug_assert!(first_unsorted(&events).is_none());
        Self { geometry, events }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `[t_first, t_last]`, or `None` for an empty stream.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

fn validate_event(geometry: &SensorGeometry, index: usize, e: &Event) -> Result<()> {
    if !e.t.is_finite() || e.t < 0.0 {
        return Err(Error::OutOfBounds { index, message: format!("timestamp {} is not a finite non-negative value", e.t) });
    }
    if e.x >= geometry.width {
        return Err(Error::OutOfBounds { index, message: format!("x out of bounds: {} >= width {}", e.x, geometry.width) });
    }
    if e.y >= geometry.height {
        return Err(Error::OutOfBounds { index, message: format!("y out of bounds: {} >= height {}", e.y, geometry.height) });
    }
    if e.p != 1 && e.p != -1 {
        return Err(Error::OutOfBounds { index, message: format!("polarity {} not in {{-1, +1}}", e.p) });
    }
    Ok(())
}

fn first_unsorted(events: &[Event]) -> Option<usize> {
    events.windows(2).position(|w| w[1].t < w[0].t).map(|i| i + 1)
}

/// Options for reading event text logs.
#[derive(Clone, Copy, Debug, Default)]
pub struct TextOptions {
    pub sort: bool,
}

pub fn parse_text_events(path: &Path, geometry: SensorGeometry, opts: TextOptions) -> Result<EventStream> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_text_events(BufReader::new(file), geometry, opts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_text_events<R: BufRead>(reader: R, geometry: SensorGeometry, opts: TextOptions) -> Result<EventStream> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(PathBuf::new(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event = parse_event_line(line).map_err(|message| Error::Parse { line: lineno, message })?;
        if let Err(err) = validate_event(&geometry, events.len(), &event) {
            let message = match err {
                Error::OutOfBounds { message, .. } => message,
                other => other.to_string(),
            };
            return Err(Error::Parse { line: lineno, message });
        }
        events.push(event);
    }
    if opts.sort {
        EventStream::new_sorted(geometry, events)
    } else {
        EventStream::new(geometry, events)
    }
}

fn parse_event_line(line: &str) -> std::result::Result<Event, String> {
    let mut fields = line.split_whitespace();
    let mut next = |name: &str| fields.next().ok_or_else(|| format!("missing field `{name}` in {line:?}"));
    let t: f64 = next("t")?.parse().map_err(|e| format!("bad timestamp: {e}"))?;
    let x: i64 = next("x")?.parse().map_err(|e| format!("bad x: {e}"))?;
    let y: i64 = next("y")?.parse().map_err(|e| format!("bad y: {e}"))?;
    let p: i64 = next("p")?.parse().map_err(|e| format!("bad polarity: {e}"))?;
    if fields.next().is_some() {
        return Err(format!("trailing fields in {line:?}"));
    }
    let p = match p {
        0 | -1 => -1,
        1 => 1,
        other => return Err(format!("polarity {other} not in {{0, 1}} or {{-1, +1}}")),
    };
    let x = u16::try_from(x).map_err(|_| format!("x out of bounds: {x}"))?;
    let y = u16::try_from(y).map_err(|_| format!("y out of bounds: {y}"))?;
    Ok(Event { t, x, y, p })
}

/// Writes `t x y p` lines with `p` in `{0, 1}` and shortest round-trip float formatting.
pub fn write_text_events(stream: &EventStream, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for e in stream.events() {
            writeln!(w, "{} {} {} {}", e.t, e.x, e.y, if e.p > 0 { 1 } else { 0 })?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Panics if the stream holds more than `u32::MAX` events.
pub fn encode_binary_events(stream: &EventStream) -> Vec<u8> {
    assert!(stream.len() <= u32::MAX as usize, "EVT1 holds at most u32::MAX events");
    let mut buf = Vec::with_capacity(EVT1_HEADER_LEN + stream.len() * EVT1_RECORD_LEN);
    buf.extend_from_slice(EVT1_MAGIC);
    buf.push(EVT1_VERSION);
    buf.push(0);
    buf.extend_from_slice(&stream.geometry.width.to_le_bytes());
    buf.extend_from_slice(&stream.geometry.height.to_le_bytes());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(stream.len() as u32).to_le_bytes());
    for e in stream.events() {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.p as u8);
    }
    buf
}

pub fn decode_binary_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < EVT1_HEADER_LEN {
        return Err(Error::Format(format!("EVT1 header truncated: {} of {EVT1_HEADER_LEN} bytes", bytes.len())));
    }
    if &bytes[0..4] != EVT1_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"EVT1\"", &bytes[0..4])));
    }
    if bytes[4] != EVT1_VERSION {
        return Err(Error::Format(format!("unsupported EVT1 version {}", bytes[4])));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]);
    let height = u16::from_le_bytes([bytes[8], bytes[9]]);
    let count = u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as u64;
    let geometry = SensorGeometry::new(width, height)?;
    let payload = &bytes[EVT1_HEADER_LEN..];
    if !payload.len().is_multiple_of(EVT1_RECORD_LEN) {
        return Err(Error::Format(format!(
            "truncated payload: {} bytes is not a whole number of {EVT1_RECORD_LEN}-byte records",
            payload.len()
        )));
    }
    let records = (payload.len() / EVT1_RECORD_LEN) as u64;
    if records != count {
        return Err(Error::Format(format!("count mismatch: header declares {count} events, payload holds {records}")));
    }
    let events = payload
        .chunks_exact(EVT1_RECORD_LEN)
        .map(|r| Event {
            t: f64::from_le_bytes(r[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            p: r[12] as i8,
        })
        .collect();
    EventStream::new(geometry, events)
}

pub fn write_binary_events(stream: &EventStream, path: &Path) -> Result<()> {
    fs::write(path, encode_binary_events(stream)).map_err(|e| Error::io(path, e))
}

pub fn parse_binary_events(path: &Path) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_binary_events(&bytes)
}

/// True when the path names an `EVT1` container by extension (`.evt`, `.evt1`, `.bin`).
pub fn is_binary_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("evt" | "evt1" | "bin")
    )
}

/// Loads either format; text input needs the sensor geometry from the caller.
pub fn load_events(path: &Path, geometry: Option<SensorGeometry>, opts: TextOptions) -> Result<EventStream> {
    if is_binary_path(path) {
        let stream = parse_binary_events(path)?;
        if let Some(g) = geometry {
            if g != stream.geometry() {
                return Err(Error::Dimension(format!(
                    "{}: header geometry {}x{} differs from configured {}x{}",
                    path.display(),
                    stream.geometry().width,
                    stream.geometry().height,
                    g.width,
                    g.height
                )));
            }
        }
        Ok(stream)
    } else {
        let geometry = geometry
            .ok_or_else(|| Error::Invalid(format!("{}: text events need an explicit width/height", path.display())))?;
        parse_text_events(path, geometry, opts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub image: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStream {
    geometry: SensorGeometry,
    frames: Vec<Frame>,
}

impl FrameStream {
    pub fn new(geometry: SensorGeometry, frames: Vec<Frame>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.image.width() != geometry.width as usize || f.image.height() != geometry.height as usize {
                return Err(Error::Dimension(format!(
                    "frame {i} is {}x{}, sensor is {}x{}",
                    f.image.width(),
                    f.image.height(),
                    geometry.width,
                    geometry.height
                )));
            }
            if !f.image.in_unit_range() {
                return Err(Error::Invalid(format!("frame {i} has pixels outside [0, 1]")));
            }
            if !f.timestamp.is_finite() {
                return Err(Error::Invalid(format!("frame {i} timestamp is not finite")));
            }
        }
        if let Some(i) = frames.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Invalid(format!(
                "frame timestamps must be strictly increasing: {} then {}",
                frames[i].timestamp,
                frames[i + 1].timestamp
            )));
        }
        Ok(Self { geometry, frames })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps the frames whose index passes `keep`.
    pub fn retain_indices(&self, mut keep: impl FnMut(usize) -> bool) -> FrameStream {
        let frames = self.frames.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, f)| f.clone()).collect();
        FrameStream { geometry: self.geometry, frames }
    }
}

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.pgm")
}

pub fn load_frame_stream(dir: &Path) -> Result<FrameStream> {
    let ts_path = dir.join(TIMESTAMPS_FILE);
    let text = fs::read_to_string(&ts_path).map_err(|e| Error::io(&ts_path, e))?;
    let mut timestamps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line.parse().map_err(|e| Error::Parse { line: i + 1, message: format!("bad timestamp: {e}") })?;
        timestamps.push(t);
    }

    let mut pgm_count = 0;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().extension().is_some_and(|e| e == "pgm") {
            pgm_count += 1;
        }
    }
    if pgm_count != timestamps.len() {
        return Err(Error::Invalid(format!(
            "{}: {} timestamps but {} PGM files",
            dir.display(),
            timestamps.len(),
            pgm_count
        )));
    }

    let mut frames = Vec::with_capacity(timestamps.len());
    for (i, &timestamp) in timestamps.iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let image = crate::image::decode_pgm(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        frames.push(Frame { timestamp, image });
    }
    let geometry = match frames.first() {
        Some(f) => SensorGeometry::new(
            u16::try_from(f.image.width()).map_err(|_| Error::Dimension("frame too wide".into()))?,
            u16::try_from(f.image.height()).map_err(|_| Error::Dimension("frame too tall".into()))?,
        )?,
        None => return Err(Error::Invalid(format!("{}: no frames", dir.display()))),
    };
    FrameStream::new(geometry, frames)
}

/// Writes frames as 8-bit PGMs (`round(v * 255)`) plus `timestamps.txt`.
pub fn write_frame_stream(frames: &FrameStream, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ts = String::new();
    for (i, f) in frames.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        fs::write(&path, crate::image::encode_pgm(&f.image)).map_err(|e| Error::io(&path, e))?;
        ts.push_str(&format!("{}\n", f.timestamp));
    }
    let ts_path = dir.join(TIMESTAMPS_FILE);
    fs::write(&ts_path, ts).map_err(|e| Error::io(&ts_path, e))
}

/// One evaluation sequence: events, optional ground truth, optional scoring window.
#[derive(Clone, Debug)]
pub struct SequenceDataset {
    pub name: String,
    pub events: EventStream,
    pub ground_truth: Option<FrameStream>,
    pub eval_window: Option<(f64, f64)>,
}

impl SequenceDataset {
    pub fn new(
        name: impl Into<String>,
        events: EventStream,
        ground_truth: Option<FrameStream>,
        eval_window: Option<(f64, f64)>,
    ) -> Result<Self> {
        if let Some(gt) = &ground_truth {
            if gt.geometry() != events.geometry() {
                return Err(Error::Dimension(format!(
                    "ground truth {}x{} differs from event sensor {}x{}",
                    gt.geometry().width,
                    gt.geometry().height,
                    events.geometry().width,
                    events.geometry().height
                )));
            }
        }
        if let Some((a, b)) = eval_window {
            if !(a <= b) {
                return Err(Error::Invalid(format!("eval window [{a}, {b}] is empty")));
            }
        }
        Ok(Self { name: name.into(), events, ground_truth, eval_window })
    }

    pub fn in_eval_window(&self, t: f64) -> bool {
        self.eval_window.is_none_or(|(a, b)| t >= a && t <= b)
    }
}
