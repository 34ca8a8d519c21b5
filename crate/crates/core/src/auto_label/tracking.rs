//! Forward and backward tracking passes.

use super::boxfit::{fit_box, reanchor, FittedBox};
use super::cluster::{clean, detect_initializations, predict_shifted, segment_cluster};
use super::{FrameContext, LabelerConfig, Silhouette, Trajectory, TrajectoryEntry, TrajectoryStatus};
use crate::geometry::{cells_in_box, OrientedBox, Shape};
use crate::grid::DogmaFrame;

struct Step<'a> {
    frame: &'a DogmaFrame,
    ctx: &'a FrameContext,
    index: usize,
    excluded: &'a [bool],
}

/// One predict → grow → clean → fit update. `direction` is +1 forward in
/// time and −1 backward.
fn track_step(
    step: &Step,
    prev: &Silhouette,
    direction: f64,
    dt: f64,
    prior_shape: Option<Shape>,
    prior_orientation: Option<f64>,
    config: &LabelerConfig,
) -> Option<(Silhouette, FittedBox)> {
    let v = prev.stats.mean_v;
    let pred = predict_shifted(
        prev,
        (direction * v.0, direction * v.1),
        v,
        dt,
        step.frame,
        &step.ctx.raw,
        step.excluded,
        config,
    );
    if pred.seeds.is_empty() {
        return None;
    }
    let grown = segment_cluster(step.frame, step.ctx, &pred.seeds, Some(&prev.stats), step.excluded, step.index, config);
    let n = if grown.cells.len() >= prev.cells.len() {
        prev.cells.len()
    } else {
        pred.seeds.len().div_ceil(2)
    };
    let sil = clean(&grown, step.frame, n);
    if sil.cells.len() < config.min_cells {
        return None;
    }
    let fitted = fit_box(&sil, &sil.stats, &step.ctx.raw, prior_shape, prior_orientation, config);
    Some((sil, fitted))
}

struct Active {
    traj: Trajectory,
    last: Silhouette,
    last_time: f64,
    last_box: OrientedBox,
    misses: usize,
    max_w: f64,
    max_l: f64,
}

impl Active {
    fn record(&mut self, frame: usize, time: f64, sil: Silhouette, fitted: FittedBox) {
        self.max_w = self.max_w.max(fitted.cover.width);
        self.max_l = self.max_l.max(fitted.cover.length);
        self.traj.entries.push(TrajectoryEntry {
            frame,
            bbox: fitted.bbox,
            silhouette: sil.clone(),
            reference_corner: fitted.reference_corner,
        });
        self.last = sil;
        self.last_time = time;
        self.last_box = fitted.bbox;
        self.misses = 0;
    }
}

fn mark(flags: &mut [bool], cells: &[usize]) {
    for &c in cells {
        flags[c] = true;
    }
}

/// Seeds grouped into 8-connected components, strongest seed first.
fn seed_components(seeds: &[usize], ctx: &FrameContext) -> Vec<Vec<usize>> {
    let meta = &ctx.raw.meta;
    let mut is_seed = vec![false; meta.n_cells()];
    mark(&mut is_seed, seeds);
    let mut order = seeds.to_vec();
    order.sort_by(|&a, &b| ctx.smoothed.at(b).total_cmp(&ctx.smoothed.at(a)).then(a.cmp(&b)));
    let mut used = vec![false; meta.n_cells()];
    let mut out = Vec::new();
    for s in order {
        if used[s] {
            continue;
        }
        used[s] = true;
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            for nb in meta.neighbors8(comp[k]) {
                if is_seed[nb] && !used[nb] {
                    used[nb] = true;
                    comp.push(nb);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Causal tracking: existing tracks are updated first, then unclaimed seeds
/// start new tracks. A track ends after `max_misses` consecutive misses.
pub fn forward_pass(frames: &[DogmaFrame], ctx: &[FrameContext], config: &LabelerConfig) -> Vec<Trajectory> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let n_cells = first.meta.n_cells();
    let mut active: Vec<Active> = Vec::new();
    let mut finished: Vec<Trajectory> = Vec::new();
    let mut next_id = 1u64;

    for (t, (frame, fc)) in frames.iter().zip(ctx).enumerate() {
        let mut claimed = vec![false; n_cells];
        for track in active.iter_mut() {
            let step = Step {
                frame,
                ctx: fc,
                index: t,
                excluded: &claimed,
            };
            let prior = Shape::from_dims(track.max_w, track.max_l);
            let dt = fc.time - track.last_time;
            match track_step(&step, &track.last, 1.0, dt, Some(prior), Some(track.last_box.orientation), config) {
                Some((sil, fitted)) => {
                    mark(&mut claimed, &sil.cells);
                    track.record(t, fc.time, sil, fitted);
                }
                None => track.misses += 1,
            }
        }
        let (done, alive): (Vec<_>, Vec<_>) = active.into_iter().partition(|a| a.misses >= config.max_misses);
        finished.extend(done.into_iter().map(|a| a.traj));
        active = alive;

        let mut excluded = claimed;
        for track in &active {
            mark(&mut excluded, &cells_in_box(&track.last_box, &frame.meta));
        }
        let seeds = detect_initializations(&fc.smoothed, frame, &excluded, config);
        let mut used = vec![false; n_cells];
        for comp in seed_components(&seeds, fc) {
            if comp.iter().all(|&s| used[s] || excluded[s]) {
                continue;
            }
            let grown = segment_cluster(frame, fc, &comp, None, &excluded, t, config);
            mark(&mut used, &grown.cells);
            let sil = clean(&grown, frame, comp.len().div_ceil(2));
            if sil.cells.len() < config.min_cells {
                continue;
            }
            let fitted = fit_box(&sil, &sil.stats, &fc.raw, None, None, config);
            mark(&mut excluded, &sil.cells);
            mark(&mut excluded, &cells_in_box(&fitted.bbox, &frame.meta));
            let mut track = Active {
                traj: Trajectory {
                    id: next_id,
                    entries: Vec::new(),
                    status: TrajectoryStatus::Raw,
                    forward_start: t,
                },
                last: sil.clone(),
                last_time: fc.time,
                last_box: fitted.bbox,
                misses: 0,
                max_w: 0.0,
                max_l: 0.0,
            };
            next_id += 1;
            track.record(t, fc.time, sil, fitted);
            active.push(track);
        }
    }
    finished.extend(active.into_iter().map(|a| a.traj));
    finished.sort_by_key(|t| t.id);
    finished
}

/// Re-tracks every trajectory from its last frame backward with the shape
/// frozen at the largest forward extents. Backward boxes replace forward
/// ones; forward frames the backward track lost are kept, resized to the
/// frozen shape at their reference corner.
pub fn backward_pass(
    frames: &[DogmaFrame],
    ctx: &[FrameContext],
    trajectories: Vec<Trajectory>,
    config: &LabelerConfig,
) -> Vec<Trajectory> {
    trajectories
        .into_iter()
        .map(|traj| refine(frames, ctx, traj, config))
        .collect()
}

fn refine(frames: &[DogmaFrame], ctx: &[FrameContext], mut traj: Trajectory, config: &LabelerConfig) -> Trajectory {
    let Some(last) = traj.entries.last().cloned() else {
        traj.status = TrajectoryStatus::Refined;
        return traj;
    };
    let (w, l) = traj
        .entries
        .iter()
        .fold((0.0f64, 0.0f64), |(w, l), e| (w.max(e.bbox.width), l.max(e.bbox.length)));
    let frozen = Shape::from_dims(w, l);
    let resize = |e: &TrajectoryEntry| TrajectoryEntry {
        bbox: reanchor(&e.bbox, e.reference_corner, w, l),
        ..e.clone()
    };

    let mut backward = vec![resize(&last)];
    let mut prev = last.silhouette.clone();
    let mut prev_time = ctx[last.frame].time;
    let mut orientation = last.bbox.orientation;
    let mut misses = 0;
    for t in (0..last.frame).rev() {
        let step = Step {
            frame: &frames[t],
            ctx: &ctx[t],
            index: t,
            excluded: &[],
        };
        let dt = prev_time - ctx[t].time;
        match track_step(&step, &prev, -1.0, dt, Some(frozen), Some(orientation), config) {
            Some((sil, fitted)) => {
                backward.push(TrajectoryEntry {
                    frame: t,
                    bbox: reanchor(&fitted.cover, fitted.reference_corner, w, l),
                    silhouette: sil.clone(),
                    reference_corner: fitted.reference_corner,
                });
                orientation = fitted.bbox.orientation;
                prev = sil;
                prev_time = ctx[t].time;
                misses = 0;
            }
            None => {
                misses += 1;
                if misses >= config.max_misses {
                    break;
                }
            }
        }
    }
    backward.reverse();
    let mut merged: Vec<TrajectoryEntry> = Vec::with_capacity(backward.len() + traj.entries.len());
    let (mut i, mut j) = (0, 0);
    while i < backward.len() || j < traj.entries.len() {
        let b = backward.get(i);
        let f = traj.entries.get(j);
        match (b, f) {
            (Some(b), Some(f)) if b.frame == f.frame => {
                merged.push(b.clone());
                i += 1;
                j += 1;
            }
            (Some(b), Some(f)) if b.frame < f.frame => {
                merged.push(b.clone());
                i += 1;
            }
            (Some(_), Some(f)) | (None, Some(f)) => {
                merged.push(resize(f));
                j += 1;
            }
            (Some(b), None) => {
                merged.push(b.clone());
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    traj.entries = merged;
    traj.status = TrajectoryStatus::Refined;
    traj
}
