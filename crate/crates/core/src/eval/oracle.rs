//! A stand-in for a trained network: targets plus controlled corruption.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::rng::rng_for;
use crate::scalar::Real;
use crate::targets::{claim_cells, TargetTensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OraclePredictorConfig {
    pub iou_noise_sigma: f64,
    pub offset_noise_sigma: f64,
    /// Mean number of false-positive blobs per frame.
    pub false_positive_rate: f64,
    /// Probability that an object vanishes from the predictions.
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for OraclePredictorConfig {
    fn default() -> Self {
        OraclePredictorConfig {
            iou_noise_sigma: 0.0,
            offset_noise_sigma: 0.0,
            false_positive_rate: 0.0,
            drop_rate: 0.0,
            seed: 0,
        }
    }
}

impl OraclePredictorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_noise_sigma", self.iou_noise_sigma),
            ("offset_noise_sigma", self.offset_noise_sigma),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::Config(format!("drop_rate must be in [0, 1], got {}", self.drop_rate)));
        }
        Ok(())
    }
}

const BLOB_SIGMA_CELLS: f64 = 2.0;
const BLOB_PEAK: (f64, f64) = (0.4, 0.8);
/// Random draws for a background blob center before giving up on a frame.
const BLOB_TRIES: usize = 64;

fn add_noise<T: Real>(a: &mut ndarray::Array3<T>, sigma: f64, rng: &mut impl Rng, clip: bool) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for v in a.iter_mut() {
        let x = v.as_f64() + normal.sample(rng);
        *v = T::of(if clip { x.clamp(0.0, 1.0) } else { x });
    }
}

/// Predictions for frame `frame` derived from `targets` and the label boxes
/// they were encoded from. Noise is drawn first, then dropped objects are
/// erased, then false-positive blobs are added to background cells.
pub fn oracle_predict<T: Real>(
    targets: &TargetTensors<T>,
    labels: &[OrientedBox<T>],
    config: &OraclePredictorConfig,
    frame: u64,
) -> Result<TargetTensors<T>> {
    config.validate()?;
    targets.check_shapes()?;
    let meta = &targets.meta;
    let mut pred = targets.clone();

    let mut rng = rng_for(config.seed, &[frame, 0]);
    add_noise(&mut pred.y_iou, config.iou_noise_sigma, &mut rng, true);
    add_noise(&mut pred.y_dw, config.offset_noise_sigma, &mut rng, false);
    add_noise(&mut pred.y_dl, config.offset_noise_sigma, &mut rng, false);
    add_noise(&mut pred.y_dphi, config.offset_noise_sigma, &mut rng, false);

    let owner = claim_cells(meta, labels);
    if config.drop_rate > 0.0 {
        let mut drop_rng = rng_for(config.seed, &[frame, 1]);
        let dropped: Vec<bool> = labels.iter().map(|_| drop_rng.random_bool(config.drop_rate)).collect();
        for (cell, o) in owner.iter().enumerate() {
            if !o.is_some_and(|i| dropped[i]) {
                continue;
            }
            let (c, r) = meta.col_row(cell);
            for a in [&mut pred.y_iou, &mut pred.y_dw, &mut pred.y_dl, &mut pred.y_dphi] {
                a.slice_mut(ndarray::s![.., r, c]).fill(T::zero());
            }
        }
    }

    if config.false_positive_rate > 0.0 {
        let mut fp_rng = rng_for(config.seed, &[frame, 2]);
        let count = Poisson::new(config.false_positive_rate)
            .map_err(|e| Error::Config(format!("false_positive_rate: {e}")))?
            .sample(&mut fp_rng) as usize;
        let (h, w) = meta.shape();
        let reach = (3.0 * BLOB_SIGMA_CELLS).floor() as isize;
        for _ in 0..count {
            let Some(center) = (0..BLOB_TRIES)
                .map(|_| fp_rng.random_range(0..meta.n_cells()))
                .find(|&i| owner[i].is_none())
            else {
                break;
            };
            let channel = fp_rng.random_range(0..pred.y_iou.dim().0);
            let peak = fp_rng.random_range(BLOB_PEAK.0..BLOB_PEAK.1);
            let (c0, r0) = meta.col_row(center);
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (r, c) = (r0 as isize + dr, c0 as isize + dc);
                    if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                        continue;
                    }
                    let d2 = (dr * dr + dc * dc) as f64;
                    if d2 > (3.0 * BLOB_SIGMA_CELLS).powi(2) {
                        continue;
                    }
                    let v = &mut pred.y_iou[[channel, r as usize, c as usize]];
                    let bumped = v.as_f64() + peak * (-0.5 * d2 / (BLOB_SIGMA_CELLS * BLOB_SIGMA_CELLS)).exp();
                    *v = T::of(bumped.min(1.0));
                }
            }
        }
    }
    Ok(pred)
}
