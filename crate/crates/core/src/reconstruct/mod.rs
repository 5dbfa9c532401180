//! Reconstructor abstraction, non-learned baselines, and per-sequence driving.

pub mod postproc;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, SensorGeometry};
use crate::grouping::{EventGroup, GroupTimeline};
use crate::image::Image;
use crate::plugin::{self, PluginSession, SessionOptions};
use crate::representation::{
    build_group_voxel_grid, crop_image, normalize_tensor, pad_to_multiple, PadSpec, TensorNormSpec, VoxelGrid,
};

pub use postproc::{
    apply_exponential, histogram_equalize, robust_minmax_normalize, PostProcSpec, PostProcStep, DEFAULT_HI_PCT,
    DEFAULT_LO_PCT,
};

pub const DEFAULT_LEAK_TAU: f64 = 0.1;
pub const DEFAULT_LEAK_GAIN: f64 = 0.1;

/// Everything a reconstructor may look at for one group.
pub struct GroupInput<'a> {
    pub group: &'a EventGroup,
    pub events: &'a [Event],
    /// Normalized and padded voxel grid.
    pub voxel: &'a VoxelGrid,
    pub geometry: SensorGeometry,
}

pub trait Reconstructor: Send {
    fn name(&self) -> &str;

    /// Stateful reconstructors carry state across groups of one sequence.
    fn is_stateful(&self) -> bool;

    fn reset(&mut self) -> Result<()>;

    /// Returns a raw image, either at the voxel's (padded) size or the sensor size.
    fn reconstruct(&mut self, input: &GroupInput<'_>) -> Result<Image>;

    fn shutdown(&mut self) {}
}

/// Sums the bins of a voxel grid into one image.
pub fn collapse_bins(grid: &VoxelGrid) -> Image {
    let plane = grid.height() * grid.width();
    let mut acc = vec![0.0; plane];
    for b in 0..grid.bins() {
        acc.iter_mut().zip(grid.bin(b)).for_each(|(a, v)| *a += v);
    }
    Image::new(grid.width(), grid.height(), acc).expect("plane size")
}

pub fn baseline_voxel_collapse(grid: &VoxelGrid) -> Image {
    robust_minmax_normalize(&collapse_bins(grid), DEFAULT_LO_PCT, DEFAULT_HI_PCT)
}

/// Stateless baseline: bin sum followed by robust min/max.
#[derive(Debug, Default)]
pub struct VoxelCollapse;

impl Reconstructor for VoxelCollapse {
    fn name(&self) -> &str {
        "voxel_collapse"
    }

    fn is_stateful(&self) -> bool {
        false
    }

    fn reset(&mut self) -> Result<()> {
        Ok(())
    }

    fn reconstruct(&mut self, input: &GroupInput<'_>) -> Result<Image> {
        Ok(baseline_voxel_collapse(input.voxel))
    }
}

/// Stateful baseline: per-pixel exponentially leaking event integrator.
///
/// Each pixel decays by `exp(-dt / tau)` between updates and adds `gain * p` per event.
#[derive(Debug)]
pub struct LeakyIntegrator {
    tau: f64,
    gain: f64,
    width: usize,
    state: Vec<f64>,
    last: Vec<f64>,
}

impl LeakyIntegrator {
    pub fn new(geometry: SensorGeometry, tau: f64, gain: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Invalid(format!("leak time constant must be > 0, got {tau}")));
        }
        let n = geometry.pixels();
        Ok(Self { tau, gain, width: geometry.width as usize, state: vec![0.0; n], last: vec![0.0; n] })
    }

    pub fn integrate(&mut self, events: &[Event]) {
        for e in events {
            let i = e.y as usize * self.width + e.x as usize;
            self.state[i] = self.state[i] * self.decay(e.t - self.last[i]) + self.gain * f64::from(e.p);
            self.last[i] = e.t;
        }
    }

    fn decay(&self, dt: f64) -> f64 {
        if self.tau.is_infinite() {
            1.0
        } else {
            (-dt.max(0.0) / self.tau).exp()
        }
    }

    /// Raw state of pixel `(x, y)` evaluated at time `t`.
    pub fn state_at(&self, x: usize, y: usize, t: f64) -> f64 {
        let i = y * self.width + x;
        self.state[i] * self.decay(t - self.last[i])
    }

    pub fn sample(&self, t: f64) -> Image {
        let data = self.state.iter().zip(&self.last).map(|(&s, &l)| s * self.decay(t - l)).collect();
        Image::new(self.width, self.state.len() / self.width, data).expect("state size")
    }
}

impl Reconstructor for LeakyIntegrator {
    fn name(&self) -> &str {
        "leaky_integrator"
    }

    fn is_stateful(&self) -> bool {
        true
    }

    fn reset(&mut self) -> Result<()> {
        self.state.iter_mut().for_each(|v| *v = 0.0);
        self.last.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }

    fn reconstruct(&mut self, input: &GroupInput<'_>) -> Result<Image> {
        self.integrate(input.events);
        Ok(robust_minmax_normalize(&self.sample(input.group.target_time), DEFAULT_LO_PCT, DEFAULT_HI_PCT))
    }
}

/// A reconstructor living in a plugin process.
pub struct PluginReconstructor {
    name: String,
    session: PluginSession,
}

impl PluginReconstructor {
    pub fn spawn(cmdline: &[String], width: usize, height: usize, bins: usize, options: SessionOptions) -> Result<Self> {
        let session = plugin::init_session(cmdline, width, height, bins, options)?;
        if session.info().kind != plugin::PluginKind::Reconstructor {
            return Err(Error::Config(format!("plugin `{}` is not a reconstructor", session.info().name)));
        }
        Ok(Self { name: session.info().name.clone(), session })
    }

    pub fn session(&self) -> &PluginSession {
        &self.session
    }
}

impl Reconstructor for PluginReconstructor {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_stateful(&self) -> bool {
        true
    }

    fn reset(&mut self) -> Result<()> {
        Ok(self.session.reset()?)
    }

    fn reconstruct(&mut self, input: &GroupInput<'_>) -> Result<Image> {
        Ok(self.session.infer(input.voxel)?)
    }

    fn shutdown(&mut self) {
        let _ = self.session.shutdown();
    }
}

/// Owns a reconstructor and enforces in-order feeding for stateful ones.
pub struct ReconstructorHandle {
    inner: Box<dyn Reconstructor>,
    next_group: Option<usize>,
}

impl ReconstructorHandle {
    pub fn new(inner: Box<dyn Reconstructor>) -> Self {
        Self { inner, next_group: None }
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn is_stateful(&self) -> bool {
        self.inner.is_stateful()
    }

    /// Resets state; must precede the first group of every sequence.
    pub fn begin_sequence(&mut self) -> Result<()> {
        self.next_group = None;
        self.inner.reset()?;
        self.next_group = Some(0);
        Ok(())
    }

    pub fn feed(&mut self, input: &GroupInput<'_>) -> Result<Image> {
        let index = input.group.index;
        if self.inner.is_stateful() {
            match self.next_group {
                None => return Err(Error::Reconstructor("stateful reconstructor fed before begin_sequence".into())),
                Some(expected) if expected != index => {
                    return Err(Error::Reconstructor(format!("group {index} fed out of order, expected {expected}")))
                }
                _ => {}
            }
        }
        let image = self.inner.reconstruct(input)?;
        self.next_group = Some(index + 1);
        Ok(image)
    }

    pub fn shutdown(&mut self) {
        self.inner.shutdown();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub timestamp: f64,
    pub image: Image,
    pub group_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructOptions {
    pub bins: usize,
    pub norm: TensorNormSpec,
    pub pad: PadSpec,
    pub postproc: PostProcSpec,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            bins: crate::representation::DEFAULT_BINS,
            norm: TensorNormSpec::None,
            pad: PadSpec::default(),
            postproc: PostProcSpec::default(),
        }
    }
}

/// Reconstructions of one sequence; on failure the frames produced so far are kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceReconstruction {
    pub frames: Vec<Reconstruction>,
    pub failure: Option<String>,
}

/// Runs one group through representation, the reconstructor, and post-processing.
pub fn reconstruct_group(
    stream: &EventStream,
    group: &EventGroup,
    handle: &mut ReconstructorHandle,
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    let voxel = build_group_voxel_grid(stream, group, opts.bins)?;
    let voxel = normalize_tensor(&voxel, opts.norm);
    let (voxel, crop) = pad_to_multiple(&voxel, opts.pad)?;
    let input = GroupInput { group, events: &stream.events()[group.events.clone()], voxel: &voxel, geometry: stream.geometry() };
    let raw = handle.feed(&input)?;
    let raw = crop_image(&raw, crop)?;
    let geometry = stream.geometry();
    if raw.dims() != (geometry.height as usize, geometry.width as usize) {
        return Err(Error::Dimension(format!(
            "reconstructor `{}` returned {:?}, sensor is {}x{}",
            handle.name(),
            raw.dims(),
            geometry.height,
            geometry.width
        )));
    }
    let mut image = opts.postproc.apply(&raw);
    image.clamp_unit();
    Ok(Reconstruction { timestamp: group.target_time, image, group_index: group.index })
}

/// Resets the handle and reconstructs every group in order.
pub fn reconstruct_sequence(
    stream: &EventStream,
    timeline: &GroupTimeline,
    handle: &mut ReconstructorHandle,
    opts: &ReconstructOptions,
) -> SequenceReconstruction {
    let mut out = SequenceReconstruction::default();
    if let Err(e) = handle.begin_sequence() {
        out.failure = Some(e.to_string());
        return out;
    }
    for group in &timeline.groups {
        match reconstruct_group(stream, group, handle, opts) {
            Ok(r) => out.frames.push(r),
            Err(e) => {
                out.failure = Some(format!("group {}: {e}", group.index));
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::group_fixed_duration;
    use crate::representation::build_voxel_grid;

    fn geom(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    #[test]
    fn collapse_zero_grid_is_mid_gray() {
        let g = VoxelGrid::zeros(5, 6, 8, 0.0, 1.0);
        assert!(baseline_voxel_collapse(&g).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn collapse_single_event_small_sensor() {
        // With 16 pixels the 99th percentile interpolates toward the hit pixel,
        // so the two-valued image maps to exactly {0, 1}.
        let g = build_voxel_grid(&[Event::new(0.3, 1, 2, 1)], geom(4, 4), (0.0, 1.0), 5).unwrap();
        let img = baseline_voxel_collapse(&g);
        assert_eq!(img.get(1, 2), 1.0);
        assert_eq!(img.data().iter().filter(|&&v| v == 0.0).count(), 15);
    }

    #[test]
    fn collapse_is_linear_before_normalization() {
        let a = build_voxel_grid(&[Event::new(0.1, 1, 1, 1), Event::new(0.7, 2, 3, -1)], geom(5, 5), (0.0, 1.0), 5).unwrap();
        let b = build_voxel_grid(&[Event::new(0.4, 1, 1, 1)], geom(5, 5), (0.0, 1.0), 5).unwrap();
        let sum = collapse_bins(&a.add(&b).unwrap());
        let parts: Vec<f64> = collapse_bins(&a).data().iter().zip(collapse_bins(&b).data()).map(|(x, y)| x + y).collect();
        assert_eq!(sum.data(), parts.as_slice());
    }

    #[test]
    fn leaky_closed_form_decay() {
        let mut li = LeakyIntegrator::new(geom(4, 4), 0.1, 0.1).unwrap();
        li.integrate(&[Event::new(0.5, 2, 1, 1)]);
        let after = li.state_at(2, 1, 0.5);
        assert_eq!(after, 0.1);
        let decayed = li.state_at(2, 1, 0.5 + 10.0 * 0.1);
        assert!((decayed / after - (-10f64).exp()).abs() < 1e-15);
        assert!((decayed / after - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn leaky_infinite_tau_accumulates() {
        let mut li = LeakyIntegrator::new(geom(4, 4), f64::INFINITY, 0.1).unwrap();
        li.integrate(&[Event::new(0.0, 0, 0, 1), Event::new(5.0, 0, 0, 1), Event::new(9.0, 0, 0, -1)]);
        assert!((li.state_at(0, 0, 100.0) - 0.1).abs() < 1e-15);
        assert!(LeakyIntegrator::new(geom(4, 4), 0.0, 0.1).is_err());
    }

    fn stream() -> EventStream {
        let events = (0..200).map(|i| Event::new(i as f64 * 0.005, (i % 16) as u16, (i % 12) as u16, if i % 3 == 0 { -1 } else { 1 })).collect();
        EventStream::new(geom(16, 12), events).unwrap()
    }

    #[test]
    fn sequence_timestamps_and_empty() {
        let s = stream();
        let tl = group_fixed_duration(&s, 0.1).unwrap();
        assert_eq!(tl.len(), 10);
        let mut h = ReconstructorHandle::new(Box::new(VoxelCollapse));
        let out = reconstruct_sequence(&s, &tl, &mut h, &ReconstructOptions::default());
        assert!(out.failure.is_none());
        assert_eq!(out.frames.len(), 10);
        for (r, g) in out.frames.iter().zip(&tl.groups) {
            assert_eq!(r.timestamp, g.target_time);
            assert!(r.image.in_unit_range());
        }
        let empty = reconstruct_sequence(&s, &GroupTimeline::default(), &mut h, &ReconstructOptions::default());
        assert!(empty.frames.is_empty());
    }

    #[test]
    fn stateful_rerun_is_deterministic() {
        let s = stream();
        let tl = group_fixed_duration(&s, 0.05).unwrap();
        let mut h = ReconstructorHandle::new(Box::new(LeakyIntegrator::new(s.geometry(), 0.1, 0.1).unwrap()));
        let opts = ReconstructOptions { pad: PadSpec { multiple: 8 }, ..Default::default() };
        let a = reconstruct_sequence(&s, &tl, &mut h, &opts);
        let b = reconstruct_sequence(&s, &tl, &mut h, &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn stateful_rejects_out_of_order() {
        let s = stream();
        let tl = group_fixed_duration(&s, 0.1).unwrap();
        let mut h = ReconstructorHandle::new(Box::new(LeakyIntegrator::new(s.geometry(), 0.1, 0.1).unwrap()));
        let opts = ReconstructOptions::default();
        assert!(reconstruct_group(&s, &tl.groups[0], &mut h, &opts).is_err());
        h.begin_sequence().unwrap();
        reconstruct_group(&s, &tl.groups[0], &mut h, &opts).unwrap();
        assert!(reconstruct_group(&s, &tl.groups[2], &mut h, &opts).is_err());
        reconstruct_group(&s, &tl.groups[1], &mut h, &opts).unwrap();
    }

    #[test]
    fn postproc_chain_applied_and_clamped() {
        let s = stream();
        let tl = group_fixed_duration(&s, 0.1).unwrap();
        let mut h = ReconstructorHandle::new(Box::new(VoxelCollapse));
        let opts = ReconstructOptions { postproc: PostProcSpec::new(vec![PostProcStep::Exponential]).unwrap(), ..Default::default() };
        let out = reconstruct_sequence(&s, &tl, &mut h, &opts);
        // exp maps [0, 1] to [1, e]; clamping pins everything at 1
        assert!(out.frames.iter().all(|r| r.image.data().iter().all(|&v| v == 1.0)));
    }
}
