use std::io::Write;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::wire::{self, Tensor, WireMessage};
use super::{PluginError, DEFAULT_HANDSHAKE_TIMEOUT, PROTOCOL_VERSION};
use crate::image::Image;
use crate::metrics::MetricKind;
use crate::representation::VoxelGrid;

const CLAMP_WARN_THRESHOLD: f64 = 1e-3;
const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SessionState {
    Init,
    Ready,
    InSequence,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginKind {
    Reconstructor,
    Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PluginInfo {
    pub name: String,
    pub kind: PluginKind,
    pub version: String,
    /// Optional `metric_kind` key a metric plugin may announce.
    pub metric_kind: Option<MetricKind>,
}

#[derive(Clone, Copy, Debug)]
pub struct SessionOptions {
    pub handshake_timeout: Duration,
    /// `None` waits indefinitely for `IMGR`/`METR` replies.
    pub request_timeout: Option<Duration>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self { handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT, request_timeout: None }
    }
}

type Reply = Result<WireMessage, PluginError>;

pub struct PluginSession {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<Reply>,
    state: SessionState,
    info: PluginInfo,
    bins: usize,
    height: usize,
    width: usize,
    options: SessionOptions,
}

/// Spawns `cmdline` and performs the `INIT`/`IRES` handshake.
///
/// `width`/`height` are the spatial dims of the tensors that will be sent, `bins`
/// their leading dimension.
pub fn init_session(
    cmdline: &[String],
    width: usize,
    height: usize,
    bins: usize,
    options: SessionOptions,
) -> Result<PluginSession, PluginError> {
    let (program, args) = cmdline
        .split_first()
        .ok_or_else(|| PluginError::Spawn { cmd: String::new(), source: std::io::Error::other("empty command line") })?;
    let command = cmdline.join(" ");
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| PluginError::Spawn { cmd: command.clone(), source })?;

    let stdin = child.stdin.take();
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, replies) = mpsc::channel::<Reply>();
    thread::spawn(move || loop {
        match wire::read_message(&mut stdout) {
            Ok(Some(msg)) => {
                if tx.send(Ok(msg)).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                let _ = tx.send(Err(e));
                break;
            }
        }
    });

    let mut session = PluginSession {
        command,
        child,
        stdin,
        replies,
        state: SessionState::Init,
        info: PluginInfo { name: String::new(), kind: PluginKind::Reconstructor, version: String::new(), metric_kind: None },
        bins,
        height,
        width,
        options,
    };

    let payload = wire::format_key_values([
        ("protocol_version", PROTOCOL_VERSION.to_string()),
        ("width", width.to_string()),
        ("height", height.to_string()),
        ("bins", bins.to_string()),
    ]);
    let reply = session.exchange(WireMessage::new(wire::INIT, payload), Some(options.handshake_timeout));
    let reply = match reply {
        Ok(r) => r,
        Err(e) => {
            session.kill();
            return Err(e);
        }
    };
    match session.parse_ires(&reply) {
        Ok(info) => {
            session.info = info;
            session.state = SessionState::Ready;
            log::debug!("plugin `{}` ready: {:?}", session.command, session.info);
            Ok(session)
        }
        Err(e) => {
            session.kill();
            Err(e)
        }
    }
}

impl PluginSession {
    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn info(&self) -> &PluginInfo {
        &self.info
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn parse_ires(&self, reply: &WireMessage) -> Result<PluginInfo, PluginError> {
        if reply.tag != wire::IRES {
            return Err(PluginError::Protocol(format!("expected IRES, got {}", reply.tag_str())));
        }
        let mut info = PluginInfo { name: String::new(), kind: PluginKind::Reconstructor, version: String::new(), metric_kind: None };
        let mut kind = None;
        for (key, value) in wire::parse_key_values(&reply.payload)? {
            match key.as_str() {
                "protocol_version" => {
                    if value.parse::<u32>().ok() != Some(PROTOCOL_VERSION) {
                        return Err(PluginError::VersionMismatch { expected: PROTOCOL_VERSION, got: value });
                    }
                }
                "name" => info.name = value,
                "version" => info.version = value,
                "kind" => {
                    kind = Some(match value.as_str() {
                        "reconstructor" => PluginKind::Reconstructor,
                        "metric" => PluginKind::Metric,
                        other => return Err(PluginError::Protocol(format!("unknown plugin kind {other:?}"))),
                    })
                }
                "metric_kind" => {
                    info.metric_kind = Some(match value.as_str() {
                        "full_reference" => MetricKind::FullReference,
                        "no_reference" => MetricKind::NoReference,
                        other => return Err(PluginError::Protocol(format!("unknown metric_kind {other:?}"))),
                    })
                }
                _ => {}
            }
        }
        info.kind = kind.ok_or_else(|| PluginError::Protocol("IRES lacks `kind`".into()))?;
        if info.name.is_empty() {
            return Err(PluginError::Protocol("IRES lacks `name`".into()));
        }
        Ok(info)
    }

    fn ensure_open(&self) -> Result<(), PluginError> {
        if self.state == SessionState::Closed {
            Err(PluginError::Closed)
        } else {
            Ok(())
        }
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), PluginError> {
        let Some(stdin) = self.stdin.as_mut() else { return Err(PluginError::Closed) };
        if wire::write_message(stdin, msg).is_err() {
            self.kill();
            return Err(PluginError::ChildExited);
        }
        Ok(())
    }

    /// Sends a request and waits for the reply; `ERRS` replies become [`PluginError::Remote`].
    fn exchange(&mut self, msg: WireMessage, timeout: Option<Duration>) -> Result<WireMessage, PluginError> {
        self.send(&msg)?;
        let received = match timeout {
            Some(t) => self.replies.recv_timeout(t),
            None => self.replies.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match received {
            Ok(Ok(reply)) if reply.tag == wire::ERRS => Err(PluginError::Remote(String::from_utf8_lossy(&reply.payload).into_owned())),
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                self.kill();
                Err(e)
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(PluginError::Timeout(timeout.unwrap_or_default()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                Err(PluginError::ChildExited)
            }
        }
    }

    fn expect_tag(&mut self, reply: &WireMessage, tag: wire::Tag) -> Result<(), PluginError> {
        if reply.tag != tag {
            self.kill();
            return Err(PluginError::Protocol(format!(
                "expected {}, got {}",
                String::from_utf8_lossy(&tag),
                reply.tag_str()
            )));
        }
        Ok(())
    }

    /// Clears model state and enters `InSequence`. Legal repeatedly.
    pub fn reset(&mut self) -> Result<(), PluginError> {
        self.ensure_open()?;
        if self.state == SessionState::Init {
            return Err(PluginError::State { state: self.state, message: "RSET before handshake".into() });
        }
        self.send(&WireMessage::new(wire::RSET, Vec::new()))?;
        self.state = SessionState::InSequence;
        Ok(())
    }

    /// Sends one voxel grid and returns the reconstructed `H x W` image clamped to `[0, 1]`.
    pub fn infer(&mut self, voxel: &VoxelGrid) -> Result<Image, PluginError> {
        self.ensure_open()?;
        if self.state != SessionState::InSequence {
            return Err(PluginError::State { state: self.state, message: "TENS requires RSET first".into() });
        }
        if self.info.kind != PluginKind::Reconstructor {
            return Err(PluginError::State { state: self.state, message: "TENS sent to a metric plugin".into() });
        }
        let expected = [self.bins, self.height, self.width];
        if voxel.shape() != expected {
            return Err(PluginError::Dimension(format!("voxel {:?} does not match negotiated {expected:?}", voxel.shape())));
        }
        let tensor = Tensor { dims: expected.to_vec(), data: voxel.data().iter().map(|&v| v as f32).collect() };
        let reply = self.exchange(WireMessage::new(wire::TENS, wire::encode_tensor(&tensor)?), self.options.request_timeout)?;
        self.expect_tag(&reply, wire::IMGR)?;
        let image = wire::decode_tensor(&reply.payload)?;
        let (h, w) = match image.dims.as_slice() {
            [h, w] | [1, h, w] => (*h, *w),
            other => return Err(PluginError::Dimension(format!("IMGR dims {other:?}, expected [{}, {}]", self.height, self.width))),
        };
        if (h, w) != (self.height, self.width) {
            return Err(PluginError::Dimension(format!("IMGR is {h}x{w}, session is {}x{}", self.height, self.width)));
        }
        let mut image = Image::new(w, h, image.data.into_iter().map(f64::from).collect()).expect("dims checked");
        let shift = image.clamp_unit();
        if shift > CLAMP_WARN_THRESHOLD {
            log::warn!("plugin `{}` returned pixels outside [0, 1] (max shift {shift:.3e}); clamped", self.info.name);
        }
        Ok(image)
    }

    /// Queries a metric plugin with one (no-reference) or two (full-reference) images.
    pub fn metric_query(&mut self, image: &Image, reference: Option<&Image>) -> Result<f64, PluginError> {
        self.ensure_open()?;
        if self.state == SessionState::Init {
            return Err(PluginError::State { state: self.state, message: "METQ before handshake".into() });
        }
        if self.info.kind != PluginKind::Metric {
            return Err(PluginError::State { state: self.state, message: "METQ sent to a reconstructor plugin".into() });
        }
        match (self.info.metric_kind, reference.is_some()) {
            (Some(MetricKind::FullReference), false) => {
                return Err(PluginError::Protocol("full-reference metric needs two images".into()))
            }
            (Some(MetricKind::NoReference), true) => {
                return Err(PluginError::Protocol("no-reference metric takes one image".into()))
            }
            _ => {}
        }
        let mut payload = wire::encode_tensor(&image_tensor(image))?;
        if let Some(r) = reference {
            payload.extend(wire::encode_tensor(&image_tensor(r))?);
        }
        let reply = self.exchange(WireMessage::new(wire::METQ, payload), self.options.request_timeout)?;
        self.expect_tag(&reply, wire::METR)?;
        let bytes: [u8; 8] = reply
            .payload
            .as_slice()
            .try_into()
            .map_err(|_| PluginError::Protocol(format!("METR payload must be 8 bytes, got {}", reply.payload.len())))?;
        let value = f64::from_le_bytes(bytes);
        if !value.is_finite() {
            return Err(PluginError::Protocol(format!("METR value {value} is not finite")));
        }
        Ok(value)
    }

    /// Sends `QUIT` and reaps the child, killing it if it lingers.
    pub fn shutdown(&mut self) -> Result<(), PluginError> {
        if self.state == SessionState::Closed {
            return Ok(());
        }
        if let Some(mut stdin) = self.stdin.take() {
            let _ = wire::write_message(&mut stdin, &WireMessage::new(wire::QUIT, Vec::new()));
            let _ = stdin.flush();
        }
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    break;
                }
            }
        }
        self.state = SessionState::Closed;
        Ok(())
    }

    fn kill(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.state = SessionState::Closed;
    }
}

impl Drop for PluginSession {
    fn drop(&mut self) {
        if self.state != SessionState::Closed {
            let _ = self.shutdown();
        }
    }
}

fn image_tensor(image: &Image) -> Tensor {
    Tensor { dims: vec![image.height(), image.width()], data: image.data().iter().map(|&v| v as f32).collect() }
}
