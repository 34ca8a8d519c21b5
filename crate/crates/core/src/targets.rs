//! Per-cell supervision for the four detector outputs.
//!
//! Every cell covered by a label box gets, for each anchor centered on that
//! cell, the rotated IoU with the label (`y_iou`), plus the relative width
//! and length offsets per shape and the π-scaled orientation offset per
//! orientation. Tensors are stored channel-major, `(channels, rows, cols)`;
//! IoU channel `s·C_φ + k` is shape `s` at orientation `k`.

use ndarray::{Array2, Array3, Axis};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, cells_in_box, rotated_iou, OrientedBox};
use crate::grid::GridMeta;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTensors<T = f64> {
    pub meta: GridMeta,
    pub anchor_set: AnchorSet<T>,
    pub y_iou: Array3<T>,
    pub y_dw: Array3<T>,
    pub y_dl: Array3<T>,
    pub y_dphi: Array3<T>,
}

/// Per-cell maximum of an IoU tensor over its anchor channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxIoUMap<T = f64> {
    pub a_map: Array2<T>,
}

impl<T: Real> MaxIoUMap<T> {
    #[inline]
    pub fn at(&self, meta: &GridMeta, index: usize) -> T {
        let (c, r) = meta.col_row(index);
        self.a_map[[r, c]]
    }
}

impl<T: Real> TargetTensors<T> {
    pub fn zeros(meta: GridMeta, anchor_set: AnchorSet<T>) -> Self {
        let (h, w) = meta.shape();
        let (cs, co) = (anchor_set.c_shapes(), anchor_set.c_orientations());
        TargetTensors {
            y_iou: Array3::zeros((cs * co, h, w)),
            y_dw: Array3::zeros((cs, h, w)),
            y_dl: Array3::zeros((cs, h, w)),
            y_dphi: Array3::zeros((co, h, w)),
            meta,
            anchor_set,
        }
    }

    /// Checks array shapes against the grid and anchor set.
    pub fn check_shapes(&self) -> Result<()> {
        let (h, w) = self.meta.shape();
        let (cs, co) = (self.anchor_set.c_shapes(), self.anchor_set.c_orientations());
        let expected = [
            ("y_iou", self.y_iou.dim(), (cs * co, h, w)),
            ("y_dw", self.y_dw.dim(), (cs, h, w)),
            ("y_dl", self.y_dl.dim(), (cs, h, w)),
            ("y_dphi", self.y_dphi.dim(), (co, h, w)),
        ];
        for (name, got, want) in expected {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    /// Same grid and anchor layout.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.meta.same_grid(&other.meta)
            && self.y_iou.dim() == other.y_iou.dim()
            && self.y_dw.dim() == other.y_dw.dim()
            && self.y_dphi.dim() == other.y_dphi.dim()
    }

    pub fn cast<U: Real>(&self) -> TargetTensors<U> {
        let conv = |a: &Array3<T>| a.mapv(|v| U::of(v.as_f64()));
        TargetTensors {
            meta: self.meta.clone(),
            anchor_set: self.anchor_set.cast(),
            y_iou: conv(&self.y_iou),
            y_dw: conv(&self.y_dw),
            y_dl: conv(&self.y_dl),
            y_dphi: conv(&self.y_dphi),
        }
    }
}

/// Assigns each grid cell to at most one label: among the boxes covering the
/// cell, the one with the nearest center wins, ties to the lower label index.
pub fn claim_cells<T: Real>(meta: &GridMeta, labels: &[OrientedBox<T>]) -> Vec<Option<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; meta.n_cells()];
    let mut best_d2 = vec![f64::INFINITY; meta.n_cells()];
    for (i, label) in labels.iter().enumerate() {
        let (le, ln) = (label.center_e.as_f64(), label.center_n.as_f64());
        for cell in cells_in_box(label, meta) {
            let (e, n) = meta.index_center(cell);
            let d2 = (e - le).powi(2) + (n - ln).powi(2);
            if d2 < best_d2[cell] {
                best_d2[cell] = d2;
                owner[cell] = Some(i);
            }
        }
    }
    owner
}

pub fn encode_targets<T: Real>(meta: &GridMeta, labels: &[OrientedBox<T>], anchor_set: &AnchorSet<T>) -> Result<TargetTensors<T>> {
    if anchor_set.is_empty() {
        return Err(Error::Empty("anchor set is empty".into()));
    }
    if let Some(bad) = labels.iter().find(|b| !b.is_valid()) {
        return Err(Error::Invariant(format!("invalid label box {bad:?}")));
    }
    let mut t = TargetTensors::zeros(meta.clone(), anchor_set.clone());
    let owner = claim_cells(meta, labels);
    let pi = T::PI();

    for (cell, label) in owner.iter().enumerate() {
        let Some(li) = *label else { continue };
        let label = &labels[li];
        let (col, row) = meta.col_row(cell);
        let (e, n) = meta.cell_center(col, row);
        let (e, n) = (T::of(e), T::of(n));
        for ch in 0..anchor_set.len() {
            let anchor = anchor_set.anchor_box(ch, e, n);
            t.y_iou[[ch, row, col]] = rotated_iou(&anchor, label);
        }
        for (s, shape) in anchor_set.shapes.iter().enumerate() {
            let (w, l) = (shape.width(), shape.length);
            t.y_dw[[s, row, col]] = (label.width - w) / w;
            t.y_dl[[s, row, col]] = (label.length - l) / l;
        }
        for (k, &phi) in anchor_set.orientations.iter().enumerate() {
            t.y_dphi[[k, row, col]] = angle_diff(label.orientation, phi) / pi;
        }
    }
    Ok(t)
}

/// `A(c) = max_α y_iou(c, α)`.
pub fn max_iou_map<T: Real>(y_iou: &Array3<T>) -> MaxIoUMap<T> {
    let (_, h, w) = y_iou.dim();
    let mut a_map = Array2::from_elem((h, w), T::zero());
    for channel in y_iou.axis_iter(Axis(0)) {
        ndarray::Zip::from(&mut a_map)
            .and(&channel)
            .for_each(|m, &v| *m = if v > *m { v } else { *m });
    }
    MaxIoUMap { a_map }
}
