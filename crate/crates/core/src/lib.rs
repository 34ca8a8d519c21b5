//! Non-neural components of a single-stage, rotated-anchor object detector
//! on dynamic occupancy grid maps (DOGMa).
//!
//! Pipeline stages:
//!
//! 1. **grid** – frame data model, occupancy probability, smoothing, derivatives.
//! 2. **simulator** – deterministic synthetic DOGMa sequences with ground truth.
//! 3. **auto_label** – offline forward/backward object extraction.
//! 4. **anchors** – greedy anchor-shape optimization and anchor sets.
//! 5. **targets** – per-cell IoU and offset supervision, max-IoU map.
//! 6. **loss** – spatially balanced squared loss and its gradient.
//! 7. **decode** – winning-box extraction from prediction tensors.
//! 8. **eval** – matching, precision/recall sweep, AP, box RMSE, oracle predictor.
//!
//! The detection math (geometry, loss, targets, decode) is generic over
//! [`Real`]; the aliases below fix the common instantiations.

pub mod anchors;
pub mod auto_label;
pub mod decode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod loss;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod targets;

pub use error::{Error, Result};
pub use geometry::{angle_diff, cells_in_box, rotated_iou, OrientedBox, Shape};
pub use grid::{CellState, DogmaFrame, GridMeta, ScalarField};
pub use scalar::Real;

pub type OrientedBoxF32 = geometry::OrientedBox<f32>;
pub type ShapeF32 = geometry::Shape<f32>;
pub type TargetTensors = targets::TargetTensors<f64>;
pub type TargetTensorsF32 = targets::TargetTensors<f32>;
pub type Detection = decode::Detection<f64>;
pub type DetectionF32 = decode::Detection<f32>;
