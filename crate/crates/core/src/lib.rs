//! Benchmark harness for event-based video reconstruction.
//!
//! The pipeline is: ingest events ([`event`]), optionally degrade them
//! ([`preprocess`]), split them into groups ([`grouping`]), accumulate each group
//! into a voxel grid ([`representation`]), reconstruct intensity frames with a
//! builtin baseline or an external plugin ([`reconstruct`], [`plugin`]), and
//! score the frames against ground truth ([`metrics`]). [`harness`] runs whole
//! evaluations and robustness sweeps; [`report`] writes the results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod event;
pub mod fixture;
pub mod grouping;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod plugin;
pub mod preprocess;
pub mod reconstruct;
pub mod report;
pub mod representation;

pub use error::{Error, Result};
pub use event::{Event, EventStream, Frame, FrameStream, SensorGeometry, SequenceDataset};
pub use image::Image;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
