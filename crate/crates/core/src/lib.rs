//! Rotated-box operators for oriented text detection: geometry and IoU,
//! rotated anchors, proposal decoding and NMS, rotated RoI Align, upright
//! patch extraction, and a synthetic-scene harness.

pub mod anchors;
pub mod bench;
pub mod cli;
pub mod error;
pub mod geom;
pub mod harness;
pub mod image;
pub mod patch;
pub mod proposals;
pub mod rbox;
pub mod rroi;

pub use error::{Error, Result};
pub use geom::{rotated_iou, Point, Polygon};
pub use image::ImageBuffer;
pub use rbox::{AxisAlignedRect, BoxRecord, RotatedBox};
pub use rroi::Tensor;
