//! Offline object extraction from DOGMa sequences.
//!
//! A forward pass tracks clusters of moving, confidently occupied cells
//! through time; a backward pass re-tracks each trajectory in reverse with
//! its shape frozen, extending it into the frames before it was first found.
//! Accepted trajectories are spline-smoothed and written as labels.

mod boxfit;
mod cluster;
mod postprocess;
pub mod spline;
mod tracking;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::grid::{gaussian_smooth, occupancy_probability, spatial_derivatives, Derivatives, DogmaFrame, ScalarField};
use crate::io::labels::FrameLabels;

pub use boxfit::{fit_box, reanchor, select_reference_point, FittedBox};
pub use cluster::{detect_initializations, predict_silhouette, remove_cells, robust_stats, segment_cluster, Prediction};
pub use postprocess::{postprocess, LabelOutput, Rejection};
pub use tracking::{backward_pass, forward_pass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    /// Smoothed P_O needed to seed a new track.
    pub p_init: f64,
    /// m/s
    pub v_min: f64,
    /// m²/s²
    pub var_init_max: f64,
    /// cells
    pub sigma_spatial: f64,
    /// frames
    pub sigma_temporal: f64,
    /// Seed cells per m² of predicted silhouette.
    pub seed_density: f64,
    /// m/s, per axis
    pub similarity_v: f64,
    pub similarity_p: f64,
    /// 4 or 8.
    pub connectivity: u8,
    /// m/s
    pub v_max: f64,
    /// m/s²
    pub a_max: f64,
    /// m
    pub d_min_total: f64,
    pub spline_smoothing: f64,
    /// Raw P_O a cell needs to join a silhouette.
    pub p_member: f64,
    /// P_O at which a cell blocks the line of sight to a box corner.
    pub p_occlusion: f64,
    /// Silhouettes smaller than this count as misses.
    pub min_cells: usize,
    /// Consecutive misses that end a track.
    pub max_misses: usize,
    /// s; used when frame timestamps do not increase.
    pub default_frame_period: f64,
    /// `(rows, cols)`, row 0 southmost; `true` cells never join a silhouette.
    #[serde(skip)]
    pub static_mask: Option<Array2<bool>>,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            p_init: 0.8,
            v_min: 1.0,
            var_init_max: 0.5,
            sigma_spatial: 2.0,
            sigma_temporal: 1.0,
            seed_density: 2.0,
            similarity_v: 1.0,
            similarity_p: 0.2,
            connectivity: 8,
            v_max: 15.0,
            a_max: 5.0,
            d_min_total: 1.0,
            spline_smoothing: 0.02,
            p_member: 0.52,
            p_occlusion: 0.7,
            min_cells: 3,
            max_misses: 3,
            default_frame_period: 0.1,
            static_mask: None,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_init", self.p_init),
            ("v_min", self.v_min),
            ("var_init_max", self.var_init_max),
            ("seed_density", self.seed_density),
            ("similarity_v", self.similarity_v),
            ("similarity_p", self.similarity_p),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("default_frame_period", self.default_frame_period),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("sigma_spatial", self.sigma_spatial),
            ("sigma_temporal", self.sigma_temporal),
            ("d_min_total", self.d_min_total),
            ("spline_smoothing", self.spline_smoothing),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !matches!(self.connectivity, 4 | 8) {
            return Err(Error::Config(format!("connectivity must be 4 or 8, got {}", self.connectivity)));
        }
        if self.min_cells == 0 || self.max_misses == 0 {
            return Err(Error::Config("min_cells and max_misses must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn masked(&self, meta: &crate::grid::GridMeta, index: usize) -> bool {
        self.static_mask.as_ref().is_some_and(|m| {
            let (c, r) = meta.col_row(index);
            m[[r, c]]
        })
    }
}

/// Velocity statistics of a silhouette's inlier cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub mean_v: (f64, f64),
    pub cov_v: [[f64; 2]; 2],
    pub n_inliers: usize,
}

impl ClusterStats {
    pub fn speed(&self) -> f64 {
        self.mean_v.0.hypot(self.mean_v.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    /// Sorted cell indices.
    pub cells: Vec<usize>,
    pub stats: ClusterStats,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub frame: usize,
    pub bbox: OrientedBox,
    pub silhouette: Silhouette,
    pub reference_corner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MaxSpeed,
    MaxAcceleration,
    MinDisplacement,
    StaticMask,
    Duplicate,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::MaxSpeed => "max-speed",
            RejectReason::MaxAcceleration => "max-acceleration",
            RejectReason::MinDisplacement => "min-displacement",
            RejectReason::StaticMask => "static-mask",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Raw,
    Refined,
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    /// Strictly increasing in `frame`.
    pub entries: Vec<TrajectoryEntry>,
    pub status: TrajectoryStatus,
    /// Frame at which the forward pass created the track.
    pub forward_start: usize,
}

impl Trajectory {
    pub fn first_frame(&self) -> Option<usize> {
        self.entries.first().map(|e| e.frame)
    }

    pub fn entry_at(&self, frame: usize) -> Option<&TrajectoryEntry> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Per-frame fields shared by both passes.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub raw: ScalarField,
    pub smoothed: ScalarField,
    pub derivatives: Derivatives,
    /// Seconds.
    pub time: f64,
}

pub fn prepare(frames: &[DogmaFrame], config: &LabelerConfig) -> Result<Vec<FrameContext>> {
    config.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("labeling needs at least one frame".into()))?;
    for f in frames {
        if !f.meta.same_grid(&first.meta) {
            return Err(Error::Dimension("frames do not share one grid".into()));
        }
    }
    if let Some(m) = &config.static_mask {
        if m.dim() != first.meta.shape() {
            return Err(Error::Dimension(format!(
                "static mask is {:?}, grid is {:?}",
                m.dim(),
                first.meta.shape()
            )));
        }
    }
    let raw: Vec<ScalarField> = frames.iter().map(occupancy_probability).collect();
    let smoothed = gaussian_smooth(&raw, config.sigma_spatial, config.sigma_temporal)?;
    let stamps: Vec<f64> = frames.iter().map(|f| f.meta.timestamp_us as f64 * 1e-6).collect();
    let increasing = stamps.windows(2).all(|w| w[1] > w[0]);
    let mut out = Vec::with_capacity(frames.len());
    for (t, (raw, smoothed)) in raw.into_iter().zip(smoothed).enumerate() {
        let derivatives = spatial_derivatives(&smoothed)?;
        let time = if increasing { stamps[t] } else { t as f64 * config.default_frame_period };
        out.push(FrameContext {
            raw,
            smoothed,
            derivatives,
            time,
        });
    }
    Ok(out)
}

/// Forward pass, backward pass and post-processing in one call.
pub fn label_sequence(frames: &[DogmaFrame], config: &LabelerConfig) -> Result<LabelOutput> {
    if frames.len() < 2 {
        return Err(Error::Empty(format!("labeling needs at least two frames, got {}", frames.len())));
    }
    let ctx = prepare(frames, config)?;
    let raw = forward_pass(frames, &ctx, config);
    let refined = backward_pass(frames, &ctx, raw, config);
    postprocess(refined, &ctx, &frames[0].meta, config)
}

/// Convenience accessor for label rows of one frame.
pub fn frame_labels(output: &LabelOutput, t: usize) -> Option<&FrameLabels> {
    output.labels.get(t)
}

#[cfg(test)]
mod tests;
