//! Visual inspection of rail valves.
//!
//! The crate covers the whole inference path: two-step ROI segmentation
//! with pluggable segmenters ([`pipeline`]), mask cleanup ([`morphology`]),
//! the geometric fault classifier ([`detector`]), scoring ([`eval`]),
//! dataset manifests and offsets ([`dataset`]), plus a synthetic scene
//! generator with exact ground truth ([`synth`]) and paired augmentation
//! ([`augment`]).

pub mod augment;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
mod fsutil;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result, Stage};
pub use fsutil::atomic_write;
pub use raster::{BBox, BinaryMask, CropWindow, GrayImage, Point, ProbMask, Raster};
