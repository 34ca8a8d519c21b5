//! Box construction from a silhouette, anchored at a visible corner.

use super::{ClusterStats, LabelerConfig, Silhouette};
use crate::geometry::{OrientedBox, Shape, CORNER_SIGNS};
use crate::grid::ScalarField;

/// The corner expected to be visible: the nearest corner to the sensor among
/// those whose line of sight crosses no occupied cell outside the box.
/// Corners whose diagonal outward neighborhood is also in sight are preferred,
/// since a corner in the shadow of another obstacle marks where the view was
/// cut rather than where the object ends. Falls back to the nearest corner.
pub fn select_reference_point(bx: &OrientedBox, p_o: &ScalarField, p_occlusion: f64) -> usize {
    let meta = &p_o.meta;
    let sensor = (meta.sensor_origin_e, meta.sensor_origin_n);
    let step = 0.5 * meta.cell_size;
    let slack = 1e-9 * meta.cell_size;
    let clear = |target: (f64, f64)| {
        let (dx, dy) = (target.0 - sensor.0, target.1 - sensor.1);
        let n = (dx.hypot(dy) / step).ceil() as usize;
        (0..n).all(|k| {
            let t = k as f64 / n as f64;
            let Some((c, r)) = meta.cell_of(sensor.0 + t * dx, sensor.1 + t * dy) else {
                return true;
            };
            let (ce, cn) = meta.cell_center(c, r);
            bx.contains(ce, cn, slack) || p_o.values[[r, c]] < p_occlusion
        })
    };
    let ((ux, uy), (vx, vy)) = bx.axes();
    let reach = 1.5 * meta.cell_size;
    let corners = bx.corners();
    let visible: Vec<bool> = corners.iter().map(|&p| clear(p)).collect();
    let open: Vec<bool> = (0..4)
        .map(|i| {
            let (su, sv) = CORNER_SIGNS[i];
            let (a, b) = (reach * su as f64, reach * sv as f64);
            visible[i] && clear((corners[i].0 + a * ux + b * vx, corners[i].1 + a * uy + b * vy))
        })
        .collect();
    let dist = |p: (f64, f64)| (p.0 - sensor.0).hypot(p.1 - sensor.1);
    let nearest = |keep: &dyn Fn(usize) -> bool| {
        (0..4)
            .filter(|&i| keep(i))
            .min_by(|&a, &b| dist(corners[a]).total_cmp(&dist(corners[b])).then(a.cmp(&b)))
    };
    nearest(&|i| open[i])
        .or_else(|| nearest(&|i| visible[i]))
        .or_else(|| nearest(&|_| true))
        .expect("four corners")
}

/// `bx` resized to `width × length`, keeping corner `corner` in place.
pub fn reanchor(bx: &OrientedBox, corner: usize, width: f64, length: f64) -> OrientedBox {
    let (pe, pn) = bx.corner(corner);
    let ((ux, uy), (vx, vy)) = bx.axes();
    let (su, sv) = CORNER_SIGNS[corner];
    let (hl, hw) = (0.5 * length * su as f64, 0.5 * width * sv as f64);
    OrientedBox {
        center_e: pe - hl * ux - hw * vx,
        center_n: pn - hl * uy - hw * vy,
        width,
        length,
        orientation: bx.orientation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedBox {
    pub bbox: OrientedBox,
    /// Smallest rectangle at the chosen orientation covering the silhouette
    /// cells.
    pub cover: OrientedBox,
    pub reference_corner: usize,
}

fn principal_axis(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (me, mn) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.0 - me, p.1 - mn);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    0.5 * (2.0 * sxy).atan2(sxx - syy)
}

/// Orientation from the mean velocity (or the prior, or the principal axis),
/// extents from the covering rectangle grown to at least the prior shape away
/// from the reference corner.
pub fn fit_box(
    silhouette: &Silhouette,
    stats: &ClusterStats,
    p_o: &ScalarField,
    prior_shape: Option<Shape>,
    prior_orientation: Option<f64>,
    config: &LabelerConfig,
) -> FittedBox {
    let meta = &p_o.meta;
    let points: Vec<(f64, f64)> = silhouette.cells.iter().map(|&i| meta.index_center(i)).collect();
    let orientation = if stats.speed() >= config.v_min {
        stats.mean_v.1.atan2(stats.mean_v.0)
    } else if let Some(phi) = prior_orientation {
        phi
    } else {
        principal_axis(&points)
    };
    let (s, c) = orientation.sin_cos();
    let (mut u_lo, mut u_hi, mut w_lo, mut w_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(e, n) in &points {
        let (u, w) = (e * c + n * s, -e * s + n * c);
        u_lo = u_lo.min(u);
        u_hi = u_hi.max(u);
        w_lo = w_lo.min(w);
        w_hi = w_hi.max(w);
    }
    let pad = meta.cell_size;
    let (um, wm) = (0.5 * (u_lo + u_hi), 0.5 * (w_lo + w_hi));
    let cover = OrientedBox::new(um * c - wm * s, um * s + wm * c, w_hi - w_lo + pad, u_hi - u_lo + pad, orientation);
    let reference_corner = select_reference_point(&cover, p_o, config.p_occlusion);
    let (w, l) = match prior_shape {
        Some(p) => (cover.width.max(p.width()), cover.length.max(p.length)),
        None => (cover.width, cover.length),
    };
    FittedBox {
        bbox: reanchor(&cover, reference_corner, w, l),
        cover,
        reference_corner,
    }
}
