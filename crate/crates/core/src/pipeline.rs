//! End-to-end run: simulate, label, fit anchors, encode, predict with the
//! oracle, decode and evaluate.
//!
//! Per-frame tensors are produced in double precision, stored and processed
//! in single precision from the oracle onwards, and never kept beyond the
//! frame that needs them. The per-frame helpers are the same ones the CLI
//! subcommands call, so a chain of subcommands reproduces a full run.

use serde::{Deserialize, Serialize};

use crate::anchors::{build_anchor_set, optimize_anchor_shapes, AnchorOptConfig, AnchorSet};
use crate::auto_label::{label_sequence, LabelOutput, LabelerConfig};
use crate::decode::{decode, DecodeConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, scored_frames, EvalConfig, EvalReport, OraclePredictorConfig, ScoredBox};
use crate::geometry::{OrientedBox, Shape};
use crate::grid::{DogmaFrame, GridMeta};
use crate::io::labels::{DetectionRecord, FrameDetections, FrameLabels};
use crate::loss::{total_loss, LossBreakdown, LossConfig};
use crate::rng::{stage, stage_seed};
use crate::simulator::{simulate, ScenarioConfig};
use crate::targets::{encode_targets, max_iou_map, TargetTensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub labeler: LabelerConfig,
    #[serde(default)]
    pub anchors: AnchorOptConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub oracle: OraclePredictorConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Root seed; the scenario and oracle seeds are derived from it.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        PipelineConfig {
            scenario,
            labeler: LabelerConfig::default(),
            anchors: AnchorOptConfig::default(),
            loss: LossConfig::default(),
            decode: DecodeConfig::default(),
            oracle: OraclePredictorConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.labeler.validate()?;
        self.anchors.validate()?;
        self.loss.validate()?;
        self.decode.validate()?;
        self.oracle.validate()?;
        Ok(())
    }

    /// The scenario with its seed taken from the root seed.
    pub fn seeded_scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.seed = stage_seed(self.seed, stage::SIMULATE);
        s
    }

    /// The oracle settings with their seed taken from the root seed.
    pub fn seeded_oracle(&self) -> OraclePredictorConfig {
        let mut o = self.oracle.clone();
        o.seed = stage_seed(self.seed, stage::ORACLE);
        o
    }
}

/// One shape sample per labeled object per frame.
pub fn label_shapes(labels: &[FrameLabels]) -> Vec<Shape> {
    labels
        .iter()
        .flat_map(|f| f.objects.iter().map(|o| Shape::from_dims(o.w, o.l)))
        .collect()
}

pub fn fit_anchors(labels: &[FrameLabels], config: &AnchorOptConfig) -> Result<AnchorSet> {
    let samples = label_shapes(labels);
    if samples.is_empty() {
        return Err(Error::Empty("no labeled objects to fit anchors to".into()));
    }
    let shapes = optimize_anchor_shapes(&samples, config)?;
    build_anchor_set(&shapes, config.c_orientations, config.delta)
}

/// Targets for one frame, encoded in double precision and rounded to single.
pub fn encode_frame(meta: &GridMeta, labels: &FrameLabels, anchor_set: &AnchorSet) -> Result<TargetTensors<f32>> {
    Ok(encode_targets(meta, &labels.boxes(), anchor_set)?.cast())
}

pub fn predict_frame(
    targets: &TargetTensors<f32>,
    labels: &FrameLabels,
    config: &OraclePredictorConfig,
) -> Result<TargetTensors<f32>> {
    let boxes: Vec<OrientedBox<f32>> = labels.objects.iter().map(|o| o.bbox().cast()).collect();
    crate::eval::oracle_predict(targets, &boxes, config, labels.t)
}

/// Detections of one frame plus the number of degenerate boxes skipped.
pub fn decode_frame(pred: &TargetTensors<f32>, t: u64, config: &DecodeConfig) -> Result<(FrameDetections, usize)> {
    let out = decode(pred, config)?;
    let detections = out
        .detections
        .iter()
        .map(|d| {
            let s = ScoredBox::from(d);
            DetectionRecord {
                e: s.bbox.center_e,
                n: s.bbox.center_n,
                w: s.bbox.width,
                l: s.bbox.length,
                phi: s.bbox.orientation,
                score: s.score,
            }
        })
        .collect();
    Ok((FrameDetections { t, detections }, out.degenerate.len()))
}

/// Loss of `pred` against `target`, weighted by the target's A map.
pub fn frame_loss(pred: &TargetTensors<f32>, target: &TargetTensors<f32>, config: &LossConfig) -> Result<LossBreakdown> {
    let a = max_iou_map(&target.y_iou);
    let l = total_loss(pred, target, &a, config)?;
    Ok(LossBreakdown {
        iou: l.iou as f64,
        dw: l.dw as f64,
        dl: l.dl as f64,
        dphi: l.dphi as f64,
        total: l.total as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub detections: FrameDetections,
    pub loss: LossBreakdown,
    pub degenerate: usize,
}

/// Encode, oracle, loss and decode for a single frame.
pub fn process_frame(
    meta: &GridMeta,
    labels: &FrameLabels,
    anchor_set: &AnchorSet,
    oracle: &OraclePredictorConfig,
    loss: &LossConfig,
    decode: &DecodeConfig,
) -> Result<FrameOutcome> {
    let target = encode_frame(meta, labels, anchor_set)?;
    let pred = predict_frame(&target, labels, oracle)?;
    let loss = frame_loss(&pred, &target, loss)?;
    let (detections, degenerate) = decode_frame(&pred, labels.t, decode)?;
    Ok(FrameOutcome {
        detections,
        loss,
        degenerate,
    })
}

/// Upper bound on frames in flight; each holds a few full-grid tensors.
const MAX_WORKERS: usize = 4;

/// [`process_frame`] over all frames, in parallel, results in frame order.
pub fn process_frames(
    meta: &GridMeta,
    labels: &[FrameLabels],
    anchor_set: &AnchorSet,
    oracle: &OraclePredictorConfig,
    loss: &LossConfig,
    decode: &DecodeConfig,
) -> Result<Vec<FrameOutcome>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .clamp(1, MAX_WORKERS)
        .min(labels.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<FrameOutcome>>> = Vec::new();
    slots.resize_with(labels.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= labels.len() {
                    break;
                }
                let r = process_frame(meta, &labels[i], anchor_set, oracle, loss, decode);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every frame was processed"))
        .collect()
}

/// `t,iou,dw,dl,dphi,total` rows.
pub fn loss_csv(frames: &[FrameDetections], losses: &[LossBreakdown]) -> String {
    let mut s = String::from("t,iou,dw,dl,dphi,total\n");
    for (f, l) in frames.iter().zip(losses) {
        s.push_str(&format!("{},{},{},{},{},{}\n", f.t, l.iou, l.dw, l.dl, l.dphi, l.total));
    }
    s
}

pub fn label_boxes(labels: &[FrameLabels]) -> Vec<Vec<OrientedBox>> {
    labels.iter().map(FrameLabels::boxes).collect()
}

/// Labels scored as detections with confidence 1.
pub fn labels_as_detections(labels: &[FrameLabels]) -> Vec<Vec<ScoredBox>> {
    labels
        .iter()
        .map(|f| f.boxes().into_iter().map(|bbox| ScoredBox { bbox, score: 1.0 }).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub frames: Vec<DogmaFrame>,
    pub ground_truth: Vec<FrameLabels>,
    pub labels: LabelOutput,
    pub anchor_set: AnchorSet,
    pub detections: Vec<FrameDetections>,
    pub losses: Vec<LossBreakdown>,
    pub degenerate: usize,
    /// Detections against the automatic labels they were predicted from.
    pub report: EvalReport,
    /// Automatic labels against the simulator's ground truth.
    pub label_report: EvalReport,
}

impl PipelineOutput {
    pub fn loss_csv(&self) -> String {
        loss_csv(&self.detections, &self.losses)
    }

    pub fn summary(&self) -> String {
        let fmt = |v: f64| if v.is_nan() { "n/a".to_string() } else { format!("{v:.4}") };
        let mut s = format!(
            "frames {}, trajectories accepted {}, rejected {}, anchors {}x{}\n",
            self.frames.len(),
            self.labels.accepted().count(),
            self.labels.rejections.len(),
            self.anchor_set.c_shapes(),
            self.anchor_set.c_orientations()
        );
        for (name, r) in [("detections", &self.report), ("labels vs truth", &self.label_report)] {
            s.push_str(&format!(
                "{name}: AP {}, at gamma {}: tp {} fp {} fn {}",
                fmt(r.ap),
                r.reference_gamma,
                r.tp,
                r.fp,
                r.fn_
            ));
            if let Some(e) = &r.rmse {
                s.push_str(&format!(
                    ", rmse position {} m width {} m length {} m orientation {} deg",
                    fmt(e.position),
                    fmt(e.width),
                    fmt(e.length),
                    fmt(e.orientation)
                ));
            }
            s.push('\n');
        }
        s
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let (frames, gt) = simulate(&config.seeded_scenario())?;
    let ground_truth = gt.to_labels();
    let labels = label_sequence(&frames, &config.labeler)?;
    let anchor_set = fit_anchors(&labels.labels, &config.anchors)?;
    let oracle = config.seeded_oracle();
    let meta = &frames[0].meta;
    let outcomes = process_frames(meta, &labels.labels, &anchor_set, &oracle, &config.loss, &config.decode)?;

    let mut detections = Vec::with_capacity(outcomes.len());
    let mut losses = Vec::with_capacity(outcomes.len());
    let mut degenerate = 0;
    for o in outcomes {
        detections.push(o.detections);
        losses.push(o.loss);
        degenerate += o.degenerate;
    }
    let report = evaluate(&scored_frames(&detections), &label_boxes(&labels.labels), &config.eval)?;
    let label_report = evaluate(
        &labels_as_detections(&labels.labels),
        &label_boxes(&ground_truth),
        &config.eval,
    )?;
    Ok(PipelineOutput {
        frames,
        ground_truth,
        labels,
        anchor_set,
        detections,
        losses,
        degenerate,
        report,
        label_report,
    })
}
