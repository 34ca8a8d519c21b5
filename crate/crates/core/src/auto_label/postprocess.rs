//! Spline smoothing, plausibility checks and label output.

use super::spline::smoothing_spline;
use super::{FrameContext, LabelerConfig, RejectReason, Trajectory, TrajectoryStatus};
use crate::error::Result;
use crate::geometry::{angle_diff, rotated_iou, OrientedBox};
use crate::grid::GridMeta;
use crate::io::labels::{FrameLabels, LabelObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rejection {
    pub id: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutput {
    /// One row per input frame.
    pub labels: Vec<FrameLabels>,
    pub trajectories: Vec<Trajectory>,
    pub rejections: Vec<Rejection>,
}

impl LabelOutput {
    pub fn rejection_csv(&self) -> String {
        let mut s = String::from("id,reason\n");
        for r in &self.rejections {
            s.push_str(&format!("{},{}\n", r.id, r.reason.as_str()));
        }
        s
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| t.status == TrajectoryStatus::Accepted)
    }
}

struct Smoothed {
    boxes: Vec<OrientedBox>,
    velocity: Vec<(f64, f64)>,
}

fn smooth(traj: &Trajectory, ctx: &[FrameContext], config: &LabelerConfig) -> Result<(Smoothed, f64, f64, f64)> {
    let t: Vec<f64> = traj.entries.iter().map(|e| ctx[e.frame].time).collect();
    let e: Vec<f64> = traj.entries.iter().map(|x| x.bbox.center_e).collect();
    let n: Vec<f64> = traj.entries.iter().map(|x| x.bbox.center_n).collect();
    let mut phi = Vec::with_capacity(t.len());
    for x in &traj.entries {
        let next = match phi.last() {
            Some(&p) => p + angle_diff(x.bbox.orientation, p),
            None => x.bbox.orientation,
        };
        phi.push(next);
    }
    let lambda = config.spline_smoothing;
    let (fe, fn_, fphi) = (
        smoothing_spline(&t, &e, lambda)?,
        smoothing_spline(&t, &n, lambda)?,
        smoothing_spline(&t, &phi, lambda)?,
    );
    let mut max_speed = 0.0f64;
    let mut max_accel = 0.0f64;
    let mut path = 0.0;
    let mut boxes = Vec::with_capacity(t.len());
    let mut velocity = Vec::with_capacity(t.len());
    for (i, entry) in traj.entries.iter().enumerate() {
        let v = (fe.slope(i), fn_.slope(i));
        max_speed = max_speed.max(v.0.hypot(v.1));
        max_accel = max_accel.max(fe.second[i].hypot(fn_.second[i]));
        if i > 0 {
            path += (fe.values[i] - fe.values[i - 1]).hypot(fn_.values[i] - fn_.values[i - 1]);
        }
        boxes.push(OrientedBox::new(
            fe.values[i],
            fn_.values[i],
            entry.bbox.width,
            entry.bbox.length,
            fphi.values[i],
        ));
        velocity.push(v);
    }
    Ok((Smoothed { boxes, velocity }, max_speed, max_accel, path))
}

/// Smooths every refined trajectory, rejects implausible or duplicate ones
/// and writes the survivors as per-frame labels.
pub fn postprocess(
    trajectories: Vec<Trajectory>,
    ctx: &[FrameContext],
    meta: &GridMeta,
    config: &LabelerConfig,
) -> Result<LabelOutput> {
    let mut trajectories = trajectories;
    let mut smoothed: Vec<Option<Smoothed>> = Vec::with_capacity(trajectories.len());
    let mut rejections = Vec::new();
    for traj in trajectories.iter_mut() {
        let (s, speed, accel, path) = smooth(traj, ctx, config)?;
        let in_mask = s
            .boxes
            .iter()
            .filter(|b| {
                meta.cell_of(b.center_e, b.center_n)
                    .is_some_and(|(c, r)| config.masked(meta, meta.index(c, r)))
            })
            .count();
        let reason = if speed > config.v_max {
            Some(RejectReason::MaxSpeed)
        } else if accel > config.a_max {
            Some(RejectReason::MaxAcceleration)
        } else if traj.entries.is_empty() || path < config.d_min_total {
            Some(RejectReason::MinDisplacement)
        } else if 2 * in_mask >= s.boxes.len() && config.static_mask.is_some() {
            Some(RejectReason::StaticMask)
        } else {
            None
        };
        match reason {
            Some(r) => {
                traj.status = TrajectoryStatus::Rejected(r);
                smoothed.push(None);
            }
            None => {
                traj.status = TrajectoryStatus::Accepted;
                smoothed.push(Some(s));
            }
        }
    }

    // Longer trajectories win over ones that mostly overlap them.
    let mut order: Vec<usize> = (0..trajectories.len()).filter(|&i| smoothed[i].is_some()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(trajectories[i].entries.len()), trajectories[i].id));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let duplicate = kept.iter().any(|&k| {
            let (a, b) = (&trajectories[i], &trajectories[k]);
            let (sa, sb) = (smoothed[i].as_ref().expect("kept"), smoothed[k].as_ref().expect("kept"));
            let overlapping = a
                .entries
                .iter()
                .zip(&sa.boxes)
                .filter(|(e, ba)| {
                    b.entries
                        .binary_search_by_key(&e.frame, |x| x.frame)
                        .is_ok_and(|j| rotated_iou(*ba, &sb.boxes[j]) >= 0.5)
                })
                .count();
            2 * overlapping >= a.entries.len()
        });
        if duplicate {
            trajectories[i].status = TrajectoryStatus::Rejected(RejectReason::Duplicate);
            smoothed[i] = None;
        } else {
            kept.push(i);
        }
    }

    for traj in &trajectories {
        if let TrajectoryStatus::Rejected(reason) = traj.status {
            rejections.push(Rejection { id: traj.id, reason });
        }
    }

    let mut labels: Vec<FrameLabels> = (0..ctx.len())
        .map(|t| FrameLabels {
            t: t as u64,
            objects: Vec::new(),
        })
        .collect();
    for (traj, s) in trajectories.iter_mut().zip(&smoothed) {
        let Some(s) = s else { continue };
        for (k, entry) in traj.entries.iter_mut().enumerate() {
            let b = s.boxes[k];
            let (ve, vn) = s.velocity[k];
            entry.bbox = b;
            labels[entry.frame].objects.push(LabelObject {
                id: traj.id,
                e: b.center_e,
                n: b.center_n,
                w: b.width,
                l: b.length,
                phi: b.orientation,
                ve,
                vn,
            });
        }
    }
    for f in labels.iter_mut() {
        f.objects.sort_by_key(|o| o.id);
    }
    Ok(LabelOutput {
        labels,
        trajectories,
        rejections,
    })
}
