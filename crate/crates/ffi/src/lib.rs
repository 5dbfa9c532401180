//! C ABI over the evbench core: event loading, voxel grids, and image metrics.
//!
//! Every fallible function returns an [`EvbStatus`]; on failure a message is
//! available from [`evb_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use evbench::event::{self, Event, EventStream, SensorGeometry, TextOptions};
use evbench::image::Image;
use evbench::metrics;
use evbench::representation::{build_voxel_grid, VoxelGrid};
use evbench::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Format = 5,
    Dimension = 6,
    Internal = 7,
}

/// A time-sorted event stream.
pub struct EvbEventStream(EventStream);

/// A `bins x height x width` voxel grid of f64, bins-major.
pub struct EvbVoxelGrid(VoxelGrid);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version string"),
};

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("nul removed")));
}

fn status_of(err: &Error) -> EvbStatus {
    match err {
        Error::Io { .. } => EvbStatus::Io,
        Error::Parse { .. } | Error::OutOfBounds { .. } | Error::NotSorted { .. } => EvbStatus::Parse,
        Error::Format(_) => EvbStatus::Format,
        Error::Dimension(_) => EvbStatus::Dimension,
        Error::Invalid(_) | Error::Config(_) => EvbStatus::InvalidArgument,
        Error::Plugin(_) | Error::Reconstructor(_) => EvbStatus::Internal,
    }
}

fn fail(status: EvbStatus, message: impl Into<String>) -> EvbStatus {
    set_error(message);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), EvbStatus>) -> EvbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EvbStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(EvbStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: evbench::Result<T>) -> Result<T, EvbStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), EvbStatus> {
    if p.is_null() {
        Err(fail(EvbStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evb_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn evb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads an EVT1 or text event file. `width`/`height` of 0 take the geometry from an
/// EVT1 header; text files need both.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_load(
    path: *const c_char,
    width: u16,
    height: u16,
    out: *mut *mut EvbEventStream,
) -> EvbStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| fail(EvbStatus::InvalidArgument, "path is not UTF-8"))?;
        let geometry = match (width, height) {
            (0, 0) => None,
            (w, h) => Some(lift(SensorGeometry::new(w, h))?),
        };
        let stream = lift(event::load_events(Path::new(path), geometry, TextOptions::default()))?;
        *out = Box::into_raw(Box::new(EvbEventStream(stream)));
        Ok(())
    })
}

/// Builds a stream from parallel arrays of length `count`; events must be time-sorted.
///
/// # Safety
/// Each array must hold `count` elements (any may be null when `count` is 0) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_from_arrays(
    width: u16,
    height: u16,
    t: *const f64,
    x: *const u16,
    y: *const u16,
    p: *const i8,
    count: usize,
    out: *mut *mut EvbEventStream,
) -> EvbStatus {
    guard(|| {
        non_null(out, "out")?;
        let geometry = lift(SensorGeometry::new(width, height))?;
        let mut events = Vec::with_capacity(count);
        if count > 0 {
            non_null(t, "t")?;
            non_null(x, "x")?;
            non_null(y, "y")?;
            non_null(p, "p")?;
            let (t, x, y, p) = (
                std::slice::from_raw_parts(t, count),
                std::slice::from_raw_parts(x, count),
                std::slice::from_raw_parts(y, count),
                std::slice::from_raw_parts(p, count),
            );
            for i in 0..count {
                if p[i] != 1 && p[i] != -1 {
                    return Err(fail(EvbStatus::InvalidArgument, format!("event {i}: polarity must be +1 or -1")));
                }
                events.push(Event::new(t[i], x[i], y[i], p[i]));
            }
        }
        let stream = lift(EventStream::new(geometry, events))?;
        *out = Box::into_raw(Box::new(EvbEventStream(stream)));
        Ok(())
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_len(stream: *const EvbEventStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Sensor geometry of a stream.
///
/// # Safety
/// `stream` must be a live handle; `width` and `height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_geometry(
    stream: *const EvbEventStream,
    width: *mut u16,
    height: *mut u16,
) -> EvbStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(width, "width")?;
        non_null(height, "height")?;
        let g = (*stream).0.geometry();
        *width = g.width;
        *height = g.height;
        Ok(())
    })
}

/// Writes a stream as EVT1 (`.evt`, `.evt1`, `.bin`) or text, chosen by extension.
///
/// # Safety
/// `stream` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_save(stream: *const EvbEventStream, path: *const c_char) -> EvbStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(path, "path")?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| fail(EvbStatus::InvalidArgument, "path is not UTF-8"))?;
        let path = Path::new(path);
        if event::is_binary_path(path) {
            lift(event::write_binary_events(&(*stream).0, path))
        } else {
            lift(event::write_text_events(&(*stream).0, path))
        }
    })
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evb_event_stream_free(stream: *mut EvbEventStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Accumulates events `[first, first + count)` over the window `[t_start, t_end]` into `bins` bins.
///
/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evb_voxel_grid_build(
    stream: *const EvbEventStream,
    first: usize,
    count: usize,
    t_start: f64,
    t_end: f64,
    bins: usize,
    out: *mut *mut EvbVoxelGrid,
) -> EvbStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(out, "out")?;
        let s = &(*stream).0;
        let end = first.checked_add(count).filter(|&e| e <= s.len()).ok_or_else(|| {
            fail(EvbStatus::InvalidArgument, format!("range {first}+{count} exceeds {} events", s.len()))
        })?;
        if !(t_start.is_finite() && t_end.is_finite() && t_end >= t_start) {
            return Err(fail(EvbStatus::InvalidArgument, format!("invalid window [{t_start}, {t_end}]")));
        }
        let grid = lift(build_voxel_grid(&s.events()[first..end], s.geometry(), (t_start, t_end), bins))?;
        *out = Box::into_raw(Box::new(EvbVoxelGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_voxel_grid_dims(
    grid: *const EvbVoxelGrid,
    bins: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> EvbStatus {
    guard(|| {
        non_null(grid, "grid")?;
        non_null(bins, "bins")?;
        non_null(height, "height")?;
        non_null(width, "width")?;
        let [b, h, w] = (*grid).0.shape();
        *bins = b;
        *height = h;
        *width = w;
        Ok(())
    })
}

/// Pointer to the `bins * height * width` values, valid while the grid lives; null for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evb_voxel_grid_data(grid: *const EvbVoxelGrid) -> *const f64 {
    grid.as_ref().map_or(ptr::null(), |g| g.0.data().as_ptr())
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evb_voxel_grid_free(grid: *mut EvbVoxelGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

unsafe fn image_pair(a: *const f64, b: *const f64, width: usize, height: usize) -> Result<(Image, Image), EvbStatus> {
    non_null(a, "a")?;
    non_null(b, "b")?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| fail(EvbStatus::InvalidArgument, "image size overflows"))?;
    let load = |p: *const f64| lift(Image::new(width, height, std::slice::from_raw_parts(p, n).to_vec()));
    Ok((load(a)?, load(b)?))
}

/// Mean squared error of two row-major `height x width` images.
///
/// # Safety
/// `a` and `b` must each hold `width * height` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_mse(a: *const f64, b: *const f64, width: usize, height: usize, out: *mut f64) -> EvbStatus {
    guard(|| {
        non_null(out, "out")?;
        let (a, b) = image_pair(a, b, width, height)?;
        *out = lift(metrics::mse(&a, &b))?;
        Ok(())
    })
}

/// Gaussian-window SSIM (11x11, sigma 1.5, data range 1) of two row-major images.
///
/// # Safety
/// `a` and `b` must each hold `width * height` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_ssim(a: *const f64, b: *const f64, width: usize, height: usize, out: *mut f64) -> EvbStatus {
    guard(|| {
        non_null(out, "out")?;
        let (a, b) = image_pair(a, b, width, height)?;
        *out = lift(metrics::ssim(&a, &b))?;
        Ok(())
    })
}
