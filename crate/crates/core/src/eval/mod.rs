//! Detection evaluation: greedy matching, precision/recall over a sweep of
//! the IoU threshold γ, average precision and box RMSE.

mod oracle;

use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, rotated_iou, OrientedBox};
use crate::io::labels::{DetectionRecord, FrameDetections};
use crate::scalar::Real;

pub use oracle::{oracle_predict, OraclePredictorConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: OrientedBox,
    pub score: f64,
}

impl<T: Real> From<&Detection<T>> for ScoredBox {
    fn from(d: &Detection<T>) -> Self {
        ScoredBox {
            bbox: d.bbox.cast(),
            score: d.score.as_f64(),
        }
    }
}

impl From<&DetectionRecord> for ScoredBox {
    fn from(d: &DetectionRecord) -> Self {
        ScoredBox {
            bbox: d.bbox(),
            score: d.score,
        }
    }
}

/// Detections of every frame as scored boxes.
pub fn scored_frames(frames: &[FrameDetections]) -> Vec<Vec<ScoredBox>> {
    frames
        .iter()
        .map(|f| f.detections.iter().map(ScoredBox::from).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub detection: usize,
    pub label: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_labels: Vec<usize>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("gamma must be in (0, 1], got {gamma}")))
    }
}

/// Detection order for matching: score descending, then index.
fn score_order(dets: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one matching on a precomputed `iou[det][label]` table.
fn greedy(order: &[usize], iou: &[Vec<f64>], n_labels: usize, gamma: f64) -> MatchResult {
    let mut taken = vec![false; n_labels];
    let mut result = MatchResult::default();
    for &d in order {
        let best = (0..n_labels)
            .filter(|&l| !taken[l])
            .map(|l| (l, iou[d][l]))
            .fold(None, |best: Option<(usize, f64)>, (l, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((l, v)),
            });
        match best {
            Some((l, v)) if v >= gamma => {
                taken[l] = true;
                result.matches.push(Match {
                    detection: d,
                    label: l,
                    iou: v,
                });
            }
            _ => result.unmatched_detections.push(d),
        }
    }
    result.unmatched_detections.sort_unstable();
    result.unmatched_labels = (0..n_labels).filter(|&l| !taken[l]).collect();
    result
}

fn iou_table(dets: &[ScoredBox], labels: &[OrientedBox]) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| labels.iter().map(|l| rotated_iou(&d.bbox, l)).collect())
        .collect()
}

/// Detections in descending score order each take the unmatched label of
/// highest IoU, provided that IoU reaches `gamma`.
pub fn match_detections(dets: &[ScoredBox], labels: &[OrientedBox], gamma: f64) -> Result<MatchResult> {
    check_gamma(gamma)?;
    Ok(greedy(&score_order(dets), &iou_table(dets, labels), labels.len(), gamma))
}

/// `{0.10, 0.11, …, 1.00}`.
pub fn gamma_grid() -> Vec<f64> {
    (10..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub gamma: f64,
    /// NaN when there are no detections.
    pub precision: f64,
    /// NaN when there are no labels.
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

struct FrameTable {
    order: Vec<usize>,
    iou: Vec<Vec<f64>>,
    n_labels: usize,
}

fn frame_tables(dets: &[Vec<ScoredBox>], labels: &[Vec<OrientedBox>]) -> Vec<FrameTable> {
    let build = |t: usize| FrameTable {
        order: score_order(&dets[t]),
        iou: iou_table(&dets[t], &labels[t]),
        n_labels: labels[t].len(),
    };
    let n = dets.len();
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    let chunk = n.div_ceil(workers.max(1)).max(1);
    let mut out: Vec<Option<FrameTable>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (k, slot) in out.chunks_mut(chunk).enumerate() {
            let build = &build;
            scope.spawn(move || {
                for (j, s) in slot.iter_mut().enumerate() {
                    *s = Some(build(k * chunk + j));
                }
            });
        }
    });
    out.into_iter().map(|t| t.expect("every frame built")).collect()
}

fn frames_aligned(dets: &[Vec<ScoredBox>], labels: &[Vec<OrientedBox>]) -> Result<()> {
    if dets.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} detection frames, {} label frames",
            dets.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn point(gamma: f64, tp: usize, fp: usize, fn_: usize) -> PrPoint {
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    PrPoint {
        gamma,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
    }
}

/// Precision and recall aggregated over all frames, one point per γ.
pub fn pr_sweep(dets: &[Vec<ScoredBox>], labels: &[Vec<OrientedBox>], gammas: &[f64]) -> Result<Vec<PrPoint>> {
    frames_aligned(dets, labels)?;
    for &g in gammas {
        check_gamma(g)?;
    }
    let tables = frame_tables(dets, labels);
    Ok(gammas
        .iter()
        .map(|&g| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for t in &tables {
                let m = greedy(&t.order, &t.iou, t.n_labels, g);
                tp += m.matches.len();
                fp += m.unmatched_detections.len();
                fn_ += m.unmatched_labels.len();
            }
            point(g, tp, fp, fn_)
        })
        .collect())
}

/// Area under the precision/recall curve.
///
/// Points without a defined recall are dropped. Undefined precision takes
/// the value of the nearest point (in input order) that has one. Precision
/// is replaced by its running maximum from the high-recall end, the curve is
/// extended to recall 0 at the precision of its lowest-recall point, and the
/// result is integrated with the trapezoid rule.
pub fn average_precision(points: &[PrPoint]) -> Result<f64> {
    let usable: Vec<&PrPoint> = points.iter().filter(|p| !p.recall.is_nan()).collect();
    if usable.is_empty() {
        return Err(Error::Empty("no precision/recall point has a defined recall".into()));
    }
    let defined: Vec<usize> = (0..usable.len()).filter(|&i| !usable[i].precision.is_nan()).collect();
    if defined.is_empty() {
        return Err(Error::Empty("precision is undefined at every point".into()));
    }
    let mut curve: Vec<(f64, f64)> = usable
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let src = *defined
                .iter()
                .min_by_key(|&&j| (j.abs_diff(i), j))
                .expect("non-empty");
            (p.recall, usable[src].precision)
        })
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    if curve[0].0 > 0.0 {
        curve.insert(0, (0.0, curve[0].1));
    }
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRmse {
    /// m
    pub position: f64,
    /// m
    pub width: f64,
    /// m
    pub length: f64,
    /// degrees; NaN when every pair was excluded.
    pub orientation: f64,
    /// Pairs with an orientation error above 90°, left out of `orientation`.
    pub orientation_excluded: usize,
    pub pairs: usize,
}

/// RMSE over `(detection, label)` pairs.
pub fn box_rmse(pairs: &[(OrientedBox, OrientedBox)]) -> Result<BoxRmse> {
    if pairs.is_empty() {
        return Err(Error::Empty("no matched pairs for RMSE".into()));
    }
    let n = pairs.len() as f64;
    let rms = |sum: f64, k: f64| (sum / k).sqrt();
    let (mut pos, mut w, mut l, mut phi) = (0.0, 0.0, 0.0, 0.0);
    let mut excluded = 0;
    for (d, g) in pairs {
        pos += (d.center_e - g.center_e).powi(2) + (d.center_n - g.center_n).powi(2);
        w += (d.width - g.width).powi(2);
        l += (d.length - g.length).powi(2);
        let err = angle_diff(d.orientation, g.orientation).abs().to_degrees();
        if err > 90.0 {
            excluded += 1;
        } else {
            phi += err * err;
        }
    }
    let kept = pairs.len() - excluded;
    Ok(BoxRmse {
        position: rms(pos, n),
        width: rms(w, n),
        length: rms(l, n),
        orientation: if kept == 0 { f64::NAN } else { rms(phi, kept as f64) },
        orientation_excluded: excluded,
        pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// γ for the RMSE table and the TP/FP/FN totals.
    pub reference_gamma: f64,
    pub gammas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            reference_gamma: 0.55,
            gammas: gamma_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pr_points: Vec<PrPoint>,
    pub ap: f64,
    pub reference_gamma: f64,
    /// `None` when nothing matched at the reference γ.
    pub rmse: Option<BoxRmse>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Sweep, AP and reference-γ RMSE in one pass. AP is NaN when it is
/// undefined (no labels or no detections anywhere).
pub fn evaluate(dets: &[Vec<ScoredBox>], labels: &[Vec<OrientedBox>], config: &EvalConfig) -> Result<EvalReport> {
    check_gamma(config.reference_gamma)?;
    let pr_points = pr_sweep(dets, labels, &config.gammas)?;
    let ap = match average_precision(&pr_points) {
        Ok(ap) => ap,
        Err(Error::Empty(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let mut pairs = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (d, l) in dets.iter().zip(labels) {
        let m = match_detections(d, l, config.reference_gamma)?;
        tp += m.matches.len();
        fp += m.unmatched_detections.len();
        fn_ += m.unmatched_labels.len();
        pairs.extend(m.matches.iter().map(|x| (d[x.detection].bbox, l[x.label])));
    }
    let rmse = if pairs.is_empty() { None } else { Some(box_rmse(&pairs)?) };
    Ok(EvalReport {
        pr_points,
        ap,
        reference_gamma: config.reference_gamma,
        rmse,
        tp,
        fp,
        fn_,
    })
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per γ.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("gamma,precision,recall,tp,fp,fn\n");
        for p in &self.pr_points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.gamma,
                num(p.precision),
                num(p.recall),
                p.tp,
                p.fp,
                p.fn_
            ));
        }
        s
    }

    /// Reference-γ box errors and AP in a single row.
    pub fn rmse_csv(&self) -> String {
        let (pos, w, l, phi) = self
            .rmse
            .map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |r| (r.position, r.width, r.length, r.orientation));
        format!(
            "position_m,width_m,length_m,orientation_deg,ap\n{},{},{},{},{}\n",
            num(pos),
            num(w),
            num(l),
            num(phi),
            num(self.ap)
        )
    }
}
