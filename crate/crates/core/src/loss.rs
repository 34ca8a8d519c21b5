//! Spatially balanced squared loss.
//!
//! Each cell is weighted by `1 + λ_I·A(c)^f`, where `A` is the max-IoU map of
//! the targets: background cells keep weight 1 and object cells get up to
//! `1 + λ_I`. The per-output loss is
//! `L_y = λ_y/2 · Σ_c Σ_α (1 + λ_I·A(c)^f)·(ŷ − y)²` and the total is the sum
//! over the four outputs.

use std::fmt::Write as _;

use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Real};
use crate::targets::{MaxIoUMap, TargetTensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_i: f64,
    pub f_iou: f64,
    pub f_offsets: f64,
    pub lambda_iou: f64,
    pub lambda_dl: f64,
    pub lambda_dw: f64,
    pub lambda_dphi: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_i: 400.0,
            f_iou: 4.0,
            f_offsets: 1.0,
            lambda_iou: 1.0,
            lambda_dl: 0.01,
            lambda_dw: 0.05,
            lambda_dphi: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_i >= 0.0) {
            return Err(Error::Config(format!("lambda_i must be >= 0, got {}", self.lambda_i)));
        }
        // f = 0 would turn the background weight into 1 + λ_I.
        for (name, f) in [("f_iou", self.f_iou), ("f_offsets", self.f_offsets)] {
            if !(f > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {f}")));
            }
        }
        for (name, l) in [
            ("lambda_iou", self.lambda_iou),
            ("lambda_dl", self.lambda_dl),
            ("lambda_dw", self.lambda_dw),
            ("lambda_dphi", self.lambda_dphi),
        ] {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

fn check_shapes<T>(pred: &ArrayView3<T>, target: &ArrayView3<T>, a_map: &ArrayView2<T>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let (_, h, w) = pred.dim();
    if a_map.dim() != (h, w) {
        return Err(Error::Dimension(format!("A map {:?} vs spatial {:?}", a_map.dim(), (h, w))));
    }
    Ok(())
}

#[inline]
fn cell_weight<T: Real>(a: T, lambda_i: T, f: T) -> T {
    T::one() + lambda_i * a.powf(f)
}

/// `λ_y/2 · Σ_c Σ_α (1 + λ_I·A(c)^f)·(ŷ − y)²` over `(channels, rows, cols)`
/// arrays.
pub fn spatial_balance_loss<T: Real>(
    pred: ArrayView3<T>,
    target: ArrayView3<T>,
    a_map: ArrayView2<T>,
    lambda_y: T,
    lambda_i: T,
    f: T,
) -> Result<T> {
    check_shapes(&pred, &target, &a_map)?;
    let weights = a_map.mapv(|a| cell_weight(a, lambda_i, f));
    let mut partial = Vec::with_capacity(pred.len_of(Axis(0)) * pred.len_of(Axis(1)));
    for (p_ch, t_ch) in pred.axis_iter(Axis(0)).zip(target.axis_iter(Axis(0))) {
        for ((p_row, t_row), w_row) in p_ch.rows().into_iter().zip(t_ch.rows()).zip(weights.rows()) {
            let terms: Vec<T> = p_row
                .iter()
                .zip(t_row.iter())
                .zip(w_row.iter())
                .map(|((&p, &t), &w)| {
                    let d = p - t;
                    w * d * d
                })
                .collect();
            partial.push(pairwise_sum(&terms));
        }
    }
    Ok(lambda_y * T::of(0.5) * pairwise_sum(&partial))
}

/// `∂L_y/∂ŷ = λ_y·(1 + λ_I·A^f)·(ŷ − y)`, elementwise.
pub fn loss_gradient<T: Real>(
    pred: ArrayView3<T>,
    target: ArrayView3<T>,
    a_map: ArrayView2<T>,
    lambda_y: T,
    lambda_i: T,
    f: T,
) -> Result<Array3<T>> {
    check_shapes(&pred, &target, &a_map)?;
    let weights = a_map.mapv(|a| cell_weight(a, lambda_i, f));
    let mut grad = &pred - &target;
    for mut ch in grad.axis_iter_mut(Axis(0)) {
        ndarray::Zip::from(&mut ch).and(&weights).for_each(|g, &w| *g = lambda_y * w * *g);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T = f64> {
    pub iou: T,
    pub dw: T,
    pub dl: T,
    pub dphi: T,
    pub total: T,
}

impl<T: Real> LossBreakdown<T> {
    /// `term,value` rows: iou, dw, dl, dphi, total.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,value\n");
        for (name, v) in [
            ("iou", self.iou),
            ("dw", self.dw),
            ("dl", self.dl),
            ("dphi", self.dphi),
            ("total", self.total),
        ] {
            let _ = writeln!(s, "{name},{v}");
        }
        s
    }
}

/// Sum of the four balanced terms, each with its own mixing weight and
/// exponent.
pub fn total_loss<T: Real>(
    pred: &TargetTensors<T>,
    target: &TargetTensors<T>,
    a_map: &MaxIoUMap<T>,
    config: &LossConfig,
) -> Result<LossBreakdown<T>> {
    config.validate()?;
    if !pred.same_layout(target) {
        return Err(Error::Dimension("prediction and target tensors differ in layout".into()));
    }
    let li = T::of(config.lambda_i);
    let a = a_map.a_map.view();
    let term = |p: &Array3<T>, t: &Array3<T>, lambda: f64, f: f64| {
        spatial_balance_loss(p.view(), t.view(), a, T::of(lambda), li, T::of(f))
    };
    let iou = term(&pred.y_iou, &target.y_iou, config.lambda_iou, config.f_iou)?;
    let dw = term(&pred.y_dw, &target.y_dw, config.lambda_dw, config.f_offsets)?;
    let dl = term(&pred.y_dl, &target.y_dl, config.lambda_dl, config.f_offsets)?;
    let dphi = term(&pred.y_dphi, &target.y_dphi, config.lambda_dphi, config.f_offsets)?;
    Ok(LossBreakdown {
        iou,
        dw,
        dl,
        dphi,
        total: iou + dw + dl + dphi,
    })
}

/// Raw and weighted frequency of non-zero `A(c)` values in equal bins over
/// `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoUHistogram {
    pub n_bins: usize,
    pub raw: Vec<u64>,
    pub weighted: Vec<f64>,
}

impl IoUHistogram {
    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        let n = self.n_bins as f64;
        (i as f64 / n, (i + 1) as f64 / n)
    }

    pub fn is_empty(&self) -> bool {
        self.raw.iter().all(|&c| c == 0)
    }

    /// `max / min` over occupied bins, or `None` when nothing is occupied.
    pub fn spread(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
        let occupied = values.filter(|&v| v > 0.0);
        let max = occupied.clone().fold(f64::NAN, f64::max);
        let min = occupied.fold(f64::NAN, f64::min);
        (!max.is_nan()).then(|| max / min)
    }

    pub fn raw_spread(&self) -> Option<f64> {
        Self::spread(self.raw.iter().map(|&c| c as f64))
    }

    pub fn weighted_spread(&self) -> Option<f64> {
        Self::spread(self.weighted.iter().copied())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low,bin_high,raw,weighted\n");
        for i in 0..self.n_bins {
            let (lo, hi) = self.bin_bounds(i);
            let _ = writeln!(s, "{lo},{hi},{},{}", self.raw[i], self.weighted[i]);
        }
        s
    }
}

pub fn weighted_iou_histogram<T: Real>(a_maps: &[MaxIoUMap<T>], lambda_i: f64, f: f64, n_bins: usize) -> Result<IoUHistogram> {
    if n_bins < 2 {
        return Err(Error::Config(format!("n_bins must be >= 2, got {n_bins}")));
    }
    let mut raw = vec![0u64; n_bins];
    let mut weighted = vec![0.0; n_bins];
    for map in a_maps {
        for &a in map.a_map.iter() {
            let a = a.as_f64();
            if a <= 0.0 {
                continue;
            }
            let bin = ((a * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
            raw[bin] += 1;
            weighted[bin] += cell_weight(a, lambda_i, f);
        }
    }
    Ok(IoUHistogram { n_bins, raw, weighted })
}
