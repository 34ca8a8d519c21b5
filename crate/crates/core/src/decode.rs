//! Winning-box extraction from prediction tensors.
//!
//! Candidates start at thresholded local maxima of the max-score map `Â`.
//! At each candidate cell the best `top_k` anchors by predicted IoU are
//! examined and the one with the smallest predicted orientation offset wins;
//! its box is rebuilt from the anchor and the predicted offsets. A box is
//! refused when it encloses a cell with a strictly higher `Â`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cells_in_box, normalize_angle, OrientedBox};
use crate::grid::GridMeta;
use crate::scalar::Real;
use crate::targets::{max_iou_map, MaxIoUMap, TargetTensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub score_threshold: f64,
    pub top_k_anchors: usize,
    /// Side length of the square local-maximum window (odd).
    pub local_max_neighborhood: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            score_threshold: 0.3,
            top_k_anchors: 4,
            local_max_neighborhood: 3,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err(Error::Config(format!(
                "score_threshold must be in (0, 1), got {}",
                self.score_threshold
            )));
        }
        if self.top_k_anchors == 0 {
            return Err(Error::Config("top_k_anchors must be >= 1".into()));
        }
        if self.local_max_neighborhood == 0 || self.local_max_neighborhood % 2 == 0 {
            return Err(Error::Config(format!(
                "local_max_neighborhood must be odd, got {}",
                self.local_max_neighborhood
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T = f64> {
    pub bbox: OrientedBox<T>,
    /// Predicted IoU of the winning anchor.
    pub score: T,
    pub cell: usize,
    /// `(shape index, orientation index)`.
    pub anchor: (usize, usize),
}

/// Winning anchor at a cell together with its predicted outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinningAnchor<T = f64> {
    pub channel: usize,
    pub shape: usize,
    pub orientation: usize,
    pub iou: T,
    pub dw: T,
    pub dl: T,
    pub dphi: T,
}

/// A decoded box with a non-positive dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateBox<T = f64> {
    pub cell: usize,
    pub anchor: (usize, usize),
    pub width: T,
    pub length: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeOutput<T = f64> {
    pub detections: Vec<Detection<T>>,
    pub degenerate: Vec<DegenerateBox<T>>,
}

/// `Â(c) = max_α ŷ_iou(c, α)`.
pub fn max_score_map<T: Real>(pred: &TargetTensors<T>) -> MaxIoUMap<T> {
    max_iou_map(&pred.y_iou)
}

/// Cells with `Â ≥ threshold` that are not exceeded by any neighbor in the
/// window. Plateaus all qualify. Ordered by descending `Â`, then index.
pub fn find_candidates<T: Real>(a_hat: &MaxIoUMap<T>, meta: &GridMeta, config: &DecodeConfig) -> Vec<usize> {
    let (h, w) = a_hat.a_map.dim();
    let radius = (config.local_max_neighborhood / 2) as isize;
    let threshold = T::of(config.score_threshold);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = a_hat.a_map[[r, c]];
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'window: for dr in -radius..=radius {
                for dc in -radius..=radius {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    if a_hat.a_map[[nr as usize, nc as usize]] > v {
                        is_max = false;
                        break 'window;
                    }
                }
            }
            if is_max {
                out.push(meta.index(c, r));
            }
        }
    }
    out.sort_by(|&x, &y| {
        let (vx, vy) = (a_hat.at(meta, x), a_hat.at(meta, y));
        vy.partial_cmp(&vx).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
    });
    out
}

/// Among the `top_k` anchors by predicted IoU, the one with the smallest
/// `|ŷ_dphi|` of its orientation channel; ties go to the higher IoU, then the
/// lower channel.
pub fn select_winning_anchor<T: Real>(cell: usize, pred: &TargetTensors<T>, config: &DecodeConfig) -> WinningAnchor<T> {
    let (col, row) = pred.meta.col_row(cell);
    let set = &pred.anchor_set;
    let mut channels: Vec<usize> = (0..set.len()).collect();
    channels.sort_by(|&a, &b| {
        let (va, vb) = (pred.y_iou[[a, row, col]], pred.y_iou[[b, row, col]]);
        vb.partial_cmp(&va).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    channels.truncate(config.top_k_anchors);

    let dphi_of = |ch: usize| pred.y_dphi[[set.split_channel(ch).1, row, col]];
    let best = channels
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let (da, db) = (dphi_of(a).abs(), dphi_of(b).abs());
            da.partial_cmp(&db)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let (ia, ib) = (pred.y_iou[[a, row, col]], pred.y_iou[[b, row, col]]);
                    ib.partial_cmp(&ia).unwrap_or(std::cmp::Ordering::Equal)
                })
                .then(a.cmp(&b))
        })
        .expect("anchor set is non-empty");
    let (s, k) = set.split_channel(best);
    WinningAnchor {
        channel: best,
        shape: s,
        orientation: k,
        iou: pred.y_iou[[best, row, col]],
        dw: pred.y_dw[[s, row, col]],
        dl: pred.y_dl[[s, row, col]],
        dphi: pred.y_dphi[[k, row, col]],
    }
}

/// `w = w_s(1 + Δw)`, `l = l_s(1 + Δl)`, `φ = φ_k + π·Δφ`, centered on the
/// cell.
pub fn construct_box<T: Real>(
    cell: usize,
    winner: &WinningAnchor<T>,
    pred: &TargetTensors<T>,
) -> std::result::Result<Detection<T>, DegenerateBox<T>> {
    let set = &pred.anchor_set;
    let shape = set.shapes[winner.shape];
    let width = shape.width() * (T::one() + winner.dw);
    let length = shape.length * (T::one() + winner.dl);
    let anchor = (winner.shape, winner.orientation);
    if !(width > T::zero() && length > T::zero()) {
        return Err(DegenerateBox {
            cell,
            anchor,
            width,
            length,
        });
    }
    let phi = normalize_angle(set.orientations[winner.orientation] + T::PI() * winner.dphi);
    let (e, n) = pred.meta.index_center(cell);
    Ok(Detection {
        bbox: OrientedBox {
            center_e: T::of(e),
            center_n: T::of(n),
            width,
            length,
            orientation: phi,
        },
        score: winner.iou,
        cell,
        anchor,
    })
}

/// Refuses every candidate whose box encloses a cell with a strictly higher
/// `Â` than the candidate's own cell. Candidates are visited by descending
/// `Â` of their cell, then score; a candidate whose box encloses the cell of
/// an already accepted detection is refused as well, which resolves plateaus.
/// The result is sorted by descending score.
pub fn suppress<T: Real>(candidates: Vec<Detection<T>>, a_hat: &MaxIoUMap<T>, meta: &GridMeta) -> Vec<Detection<T>> {
    let mut order = candidates;
    let key = |d: &Detection<T>| a_hat.at(meta, d.cell);
    order.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cell.cmp(&b.cell))
    });

    let mut accepted_cells = vec![false; meta.n_cells()];
    let mut accepted = Vec::new();
    for det in order {
        let own = key(&det);
        let refused = cells_in_box(&det.bbox, meta)
            .into_iter()
            .any(|c| c != det.cell && (a_hat.at(meta, c) > own || accepted_cells[c]));
        if !refused {
            accepted_cells[det.cell] = true;
            accepted.push(det);
        }
    }
    accepted.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cell.cmp(&b.cell))
    });
    accepted
}

/// Full decode of one prediction frame.
pub fn decode<T: Real>(pred: &TargetTensors<T>, config: &DecodeConfig) -> Result<DecodeOutput<T>> {
    config.validate()?;
    pred.check_shapes()?;
    let a_hat = max_score_map(pred);
    let mut out = DecodeOutput {
        detections: Vec::new(),
        degenerate: Vec::new(),
    };
    let mut candidates = Vec::new();
    for cell in find_candidates(&a_hat, &pred.meta, config) {
        let winner = select_winning_anchor(cell, pred, config);
        match construct_box(cell, &winner, pred) {
            Ok(d) => candidates.push(d),
            Err(bad) => out.degenerate.push(bad),
        }
    }
    out.detections = suppress(candidates, &a_hat, &pred.meta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{build_anchor_set, AnchorSet};
    use crate::geometry::{rotated_iou, Shape};
    use crate::targets::encode_targets;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn map(values: &[(usize, usize, f64)], w: usize, h: usize) -> MaxIoUMap {
        let mut a_map = Array2::zeros((h, w));
        for &(c, r, v) in values {
            a_map[[r, c]] = v;
        }
        MaxIoUMap { a_map }
    }

    #[test]
    fn candidate_rules() {
        let meta = GridMeta::new(8, 6, 0.15);
        let cfg = DecodeConfig::default();
        assert!(find_candidates(&map(&[], 8, 6), &meta, &cfg).is_empty());

        let spike = map(&[(3, 2, 0.9)], 8, 6);
        assert_eq!(find_candidates(&spike, &meta, &cfg), vec![meta.index(3, 2)]);

        let plateau = map(&[(3, 2, 0.8), (4, 2, 0.8)], 8, 6);
        assert_eq!(
            find_candidates(&plateau, &meta, &cfg),
            vec![meta.index(3, 2), meta.index(4, 2)]
        );

        let below = map(&[(3, 2, 0.2)], 8, 6);
        assert!(find_candidates(&below, &meta, &cfg).is_empty());
    }

    fn four_orientation_set() -> AnchorSet {
        build_anchor_set(&[Shape::new(0.5, 4.0)], 4, 0.3).unwrap()
    }

    fn preds_at_cell(ious: [f64; 4], dphis: [f64; 4]) -> TargetTensors {
        let meta = GridMeta::new(3, 3, 0.5);
        let mut t = TargetTensors::zeros(meta, four_orientation_set());
        for k in 0..4 {
            t.y_iou[[k, 1, 1]] = ious[k];
            t.y_dphi[[k, 1, 1]] = dphis[k];
        }
        t
    }

    #[test]
    fn winning_anchor_rules() {
        let cfg = DecodeConfig::default();
        let t = preds_at_cell([0.9, 0.2, 0.1, 0.05], [0.01, 0.3, 0.4, 0.5]);
        assert_eq!(select_winning_anchor(4, &t, &cfg).channel, 0);

        let t = preds_at_cell([0.9, 0.89, 0.88, 0.87], [0.4, 0.05, 0.3, 0.2]);
        assert_eq!(select_winning_anchor(4, &t, &cfg).channel, 1);

        let t = preds_at_cell([0.7, 0.89, 0.88, 0.87], [0.1, -0.1, 0.1, -0.1]);
        assert_eq!(select_winning_anchor(4, &t, &cfg).channel, 1);
    }

    #[test]
    fn zero_offsets_reproduce_the_anchor() {
        let t = preds_at_cell([0.9, 0.0, 0.0, 0.0], [0.0; 4]);
        let w = select_winning_anchor(4, &t, &DecodeConfig::default());
        let d = construct_box(4, &w, &t).unwrap();
        let anchor = t.anchor_set.anchor_box(0, 0.75, 0.75);
        assert_eq!(d.bbox, anchor);
        assert_eq!(d.score, 0.9);
    }

    #[test]
    fn collapsed_width_is_rejected() {
        let mut t = preds_at_cell([0.9, 0.0, 0.0, 0.0], [0.0; 4]);
        t.y_dw[[0, 1, 1]] = -1.2;
        let w = select_winning_anchor(4, &t, &DecodeConfig::default());
        let bad = construct_box(4, &w, &t).unwrap_err();
        assert!(bad.width < 0.0);
        let out = decode(&t, &DecodeConfig::default()).unwrap();
        assert!(out.detections.is_empty());
        assert_eq!(out.degenerate.len(), 1);
    }

    fn det(meta: &GridMeta, col: usize, row: usize, score: f64, w: f64, l: f64) -> Detection {
        let (e, n) = meta.cell_center(col, row);
        Detection {
            bbox: OrientedBox::new(e, n, w, l, 0.0),
            score,
            cell: meta.index(col, row),
            anchor: (0, 0),
        }
    }

    #[test]
    fn suppression_rules() {
        let meta = GridMeta::new(20, 20, 0.5);
        let a = map(&[(5, 5, 0.9), (7, 5, 0.95), (15, 15, 0.8)], 20, 20);

        let single = suppress(vec![det(&meta, 15, 15, 0.8, 1.0, 1.0)], &a, &meta);
        assert_eq!(single.len(), 1);

        // The box around (5,5) reaches (7,5), which scores higher.
        let out = suppress(
            vec![det(&meta, 5, 5, 0.9, 1.0, 3.0), det(&meta, 15, 15, 0.8, 1.0, 1.0)],
            &a,
            &meta,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cell, meta.index(15, 15));

        let two = suppress(
            vec![det(&meta, 15, 15, 0.8, 1.0, 1.0), det(&meta, 7, 5, 0.95, 1.0, 1.0)],
            &a,
            &meta,
        );
        assert_eq!(two.len(), 2);
        assert!(two[0].score >= two[1].score);
    }

    #[test]
    fn plateau_duplicates_collapse_to_one() {
        let meta = GridMeta::new(10, 10, 0.5);
        let a = map(&[(4, 4, 0.8), (5, 4, 0.8)], 10, 10);
        let out = suppress(
            vec![det(&meta, 4, 4, 0.8, 2.0, 2.0), det(&meta, 5, 4, 0.8, 2.0, 2.0)],
            &a,
            &meta,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cell, meta.index(4, 4));
    }

    #[test]
    fn perfect_predictions_round_trip() {
        let meta = GridMeta::new(64, 64, 0.15);
        let shapes = [Shape::from_dims(2.0, 4.5), Shape::from_dims(0.8, 1.8)];
        let set = build_anchor_set(&shapes, 12, 0.3).unwrap();
        let (e0, n0) = meta.cell_center(20, 20);
        let (e1, n1) = meta.cell_center(45, 44);
        let labels = vec![
            OrientedBox::new(e0, n0, 2.0, 4.5, PI / 3.0),
            OrientedBox::new(e1, n1, 0.8, 1.8, PI),
        ];
        let t = encode_targets(&meta, &labels, &set).unwrap();
        let out = decode(&t, &DecodeConfig::default()).unwrap();
        assert_eq!(out.detections.len(), 2);
        for label in &labels {
            let best = out
                .detections
                .iter()
                .map(|d| rotated_iou(&d.bbox, label))
                .fold(0.0, f64::max);
            assert!(best > 1.0 - 1e-9, "{best}");
        }
    }

    #[test]
    fn off_grid_centers_round_trip_within_half_a_cell() {
        let meta = GridMeta::new(64, 64, 0.15);
        let set = build_anchor_set(&[Shape::from_dims(2.0, 4.5)], 12, 0.3).unwrap();
        let label = OrientedBox::new(4.81f64, 4.77, 2.0, 4.5, 0.1);
        let t = encode_targets(&meta, &[label], &set).unwrap();
        let out = decode(&t, &DecodeConfig::default()).unwrap();
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert!((d.bbox.width - 2.0).abs() < 1e-9);
        assert!((d.bbox.length - 4.5).abs() < 1e-9);
        assert!(crate::geometry::angle_diff(d.bbox.orientation, 0.1).abs() < 1e-9);
        let off = (d.bbox.center_e - 4.81).hypot(d.bbox.center_n - 4.77);
        assert!(off <= 0.5 * 0.15 * 2f64.sqrt() + 1e-12);
    }
}
