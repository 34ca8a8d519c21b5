use std::path::{Path, PathBuf};

use clap::Args;

use dogma_core::anchors::AnchorSet;
use dogma_core::auto_label::label_sequence;
use dogma_core::eval::{evaluate, scored_frames, EvalReport};
use dogma_core::grid::GridMeta;
use dogma_core::io::frame::{list_frame_files, load_frame, load_frames_dir, store_frames_dir};
use dogma_core::io::labels::{read_detections, read_labels, write_detections, write_labels, FrameLabels};
use dogma_core::io::mask::read_pgm_mask;
use dogma_core::io::tensor::{load_tensors, store_a_map, store_tensors};
use dogma_core::loss::weighted_iou_histogram;
use dogma_core::pipeline::{
    decode_frame, encode_frame, fit_anchors, frame_loss, label_boxes, predict_frame, run_pipeline,
};
use dogma_core::rng::{stage, stage_seed};
use dogma_core::simulator;
use dogma_core::targets::{max_iou_map, TargetTensors};
use dogma_core::{Error, Result};

use crate::config::{io_error, require, set, CliConfig};
use crate::Common;

const GRID_SIDECAR: &str = "grid.json";

fn targets_name(t: u64) -> String {
    format!("targets_{t:06}.dgt")
}

fn a_map_name(t: u64) -> String {
    format!("a_map_{t:06}.dga")
}

fn prediction_name(t: u64) -> String {
    format!("pred_{t:06}.dgt")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_grid(dir: &Path, meta: &GridMeta) -> Result<()> {
    let mut meta = meta.clone();
    meta.timestamp_us = 0;
    write_text(&dir.join(GRID_SIDECAR), &(serde_json::to_string_pretty(&meta)? + "\n"))
}

fn read_grid(path: &Path) -> Result<GridMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let meta: GridMeta = serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    meta.validate()?;
    Ok(meta)
}

/// Grid of the first frame in `dir`.
fn grid_of_frames(dir: &Path) -> Result<GridMeta> {
    let files = list_frame_files(dir)?;
    let first = files
        .first()
        .ok_or_else(|| Error::Empty(format!("no .dgf frames in {}", dir.display())))?;
    let mut meta = load_frame(first)?.meta;
    meta.timestamp_us = 0;
    Ok(meta)
}

fn load_tensor_file(path: &Path, meta: &GridMeta, anchors: &AnchorSet) -> Result<TargetTensors<f32>> {
    load_tensors(path)?.attach(meta, &anchors.cast::<f32>())
}

/// Frame index from the trailing digits of a file stem.
fn frame_of(path: &Path) -> Result<u64> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let digits: String = stem.chars().rev().take_while(char::is_ascii_digit).collect::<Vec<_>>().into_iter().rev().collect();
    digits
        .parse()
        .map_err(|_| Error::Malformed(format!("{}: no frame index in the file name", path.display())))
}

fn seed_of(common: &Common, cfg: &CliConfig) -> u64 {
    common.seed.unwrap_or(cfg.seed)
}

fn print_report(r: &EvalReport) {
    let fmt = |v: f64| if v.is_nan() { "n/a".to_string() } else { format!("{v:.4}") };
    println!(
        "AP {}; at gamma {}: tp {} fp {} fn {}",
        fmt(r.ap),
        r.reference_gamma,
        r.tp,
        r.fp,
        r.fn_
    );
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for DGF1 frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Output JSON-lines file for ground-truth labels.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Number of frames, overriding scenario.duration_frames.
    #[arg(long)]
    duration_frames: Option<usize>,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let frames_dir = require(&a.frames, &cfg.paths.frames, "frames")?;
    let gt_path = require(&a.ground_truth, &cfg.paths.ground_truth, "ground-truth")?;
    let mut pc = cfg.pipeline()?;
    pc.seed = seed_of(&a.common, &cfg);
    set(&mut pc.scenario.duration_frames, &a.duration_frames);
    let (frames, gt) = simulator::simulate(&pc.seeded_scenario())?;
    store_frames_dir(&frames_dir, &frames)?;
    ensure_parent(&gt_path)?;
    write_labels(&gt_path, &gt.to_labels())?;
    println!("{} frames written to {}", frames.len(), frames_dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[command(flatten)]
    common: Common,
    /// Input directory of DGF1 frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Output JSON-lines label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output CSV of rejected trajectories.
    #[arg(long)]
    rejections: Option<PathBuf>,
    /// Binary PGM mask of cells excluded from labeling.
    #[arg(long)]
    static_mask: Option<PathBuf>,
    /// Smoothed occupancy probability needed to start a track.
    #[arg(long)]
    p_init: Option<f64>,
    /// Minimum speed (m/s) of a track seed.
    #[arg(long)]
    v_min: Option<f64>,
}

pub fn label(a: &LabelArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let frames_dir = require(&a.frames, &cfg.paths.frames, "frames")?;
    let labels_path = require(&a.labels, &cfg.paths.labels, "labels")?;
    let mut lc = cfg.labeler.clone();
    set(&mut lc.p_init, &a.p_init);
    set(&mut lc.v_min, &a.v_min);
    let frames = load_frames_dir(&frames_dir)?;
    if let Some(mask) = &a.static_mask {
        lc.static_mask = Some(read_pgm_mask(mask, &frames[0].meta)?);
    }
    let out = label_sequence(&frames, &lc)?;
    ensure_parent(&labels_path)?;
    write_labels(&labels_path, &out.labels)?;
    if let Some(p) = a.rejections.as_ref().or(cfg.paths.rejections.as_ref()) {
        write_text(p, &out.rejection_csv())?;
    }
    println!(
        "{} trajectories accepted, {} rejected",
        out.accepted().count(),
        out.rejections.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct AnchorsArgs {
    #[command(flatten)]
    common: Common,
    /// Input JSON-lines label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output anchor-set JSON.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Maximum number of anchor shapes.
    #[arg(long)]
    c_shapes: Option<usize>,
    /// Number of anchor orientations.
    #[arg(long)]
    c_orientations: Option<usize>,
    /// Relative shape tolerance.
    #[arg(long)]
    delta: Option<f64>,
}

pub fn anchors(a: &AnchorsArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let labels_path = require(&a.labels, &cfg.paths.labels, "labels")?;
    let out_path = require(&a.anchors, &cfg.paths.anchors, "anchors")?;
    let mut ac = cfg.anchors.clone();
    set(&mut ac.c_shapes, &a.c_shapes);
    set(&mut ac.c_orientations, &a.c_orientations);
    set(&mut ac.delta, &a.delta);
    let set = fit_anchors(&read_labels(&labels_path)?, &ac)?;
    ensure_parent(&out_path)?;
    set.save(&out_path)?;
    println!("{} shapes x {} orientations", set.c_shapes(), set.c_orientations());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    common: Common,
    /// Input JSON-lines label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Input anchor-set JSON.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Frame directory whose first frame defines the grid.
    #[arg(long, conflicts_with = "grid")]
    frames: Option<PathBuf>,
    /// Grid JSON file, instead of --frames.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory for targets and max-IoU maps.
    #[arg(long)]
    targets: Option<PathBuf>,
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let labels = read_labels(&require(&a.labels, &cfg.paths.labels, "labels")?)?;
    let anchors = AnchorSet::load(&require(&a.anchors, &cfg.paths.anchors, "anchors")?)?;
    let out = require(&a.targets, &cfg.paths.targets, "targets")?;
    let meta = match &a.grid {
        Some(g) => read_grid(g)?,
        None => grid_of_frames(&require(&a.frames, &cfg.paths.frames, "frames")?)?,
    };
    ensure_dir(&out)?;
    write_grid(&out, &meta)?;
    for f in &labels {
        let t = encode_frame(&meta, f, &anchors)?;
        store_tensors(&out.join(targets_name(f.t)), &t)?;
        store_a_map(&out.join(a_map_name(f.t)), &max_iou_map(&t.y_iou))?;
    }
    println!("{} frames encoded to {}", labels.len(), out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[command(flatten)]
    common: Common,
    /// Target DGT1 file.
    #[arg(long)]
    targets: PathBuf,
    /// Prediction DGT1 file.
    #[arg(long)]
    predictions: PathBuf,
    /// Anchor-set JSON the tensors were encoded with.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Grid JSON; defaults to the grid.json beside the target file.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output CSV of the per-term loss; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output CSV of the raw and weighted max-IoU histogram of the targets.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Histogram bins.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Object weight.
    #[arg(long)]
    lambda_i: Option<f64>,
    /// Exponent for the score term.
    #[arg(long)]
    f_iou: Option<f64>,
    /// Exponent for the offset terms.
    #[arg(long)]
    f_offsets: Option<f64>,
}

pub fn loss(a: &LossArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let anchors = AnchorSet::load(&require(&a.anchors, &cfg.paths.anchors, "anchors")?)?;
    let grid = a
        .grid
        .clone()
        .unwrap_or_else(|| a.targets.with_file_name(GRID_SIDECAR));
    let meta = read_grid(&grid)?;
    let mut lc = cfg.loss.clone();
    set(&mut lc.lambda_i, &a.lambda_i);
    set(&mut lc.f_iou, &a.f_iou);
    set(&mut lc.f_offsets, &a.f_offsets);
    let target = load_tensor_file(&a.targets, &meta, &anchors)?;
    let pred = load_tensor_file(&a.predictions, &meta, &anchors)?;
    let csv = frame_loss(&pred, &target, &lc)?.to_csv();
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.histogram {
        let h = weighted_iou_histogram(&[max_iou_map(&target.y_iou)], lc.lambda_i, lc.f_iou, a.bins)?;
        write_text(p, &h.to_csv())?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Directory written by `encode`.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// JSON-lines labels the targets were encoded from.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Anchor-set JSON.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Output directory for prediction tensors.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Standard deviation of the score noise.
    #[arg(long)]
    iou_noise_sigma: Option<f64>,
    /// Standard deviation of the offset noise.
    #[arg(long)]
    offset_noise_sigma: Option<f64>,
    /// Mean number of false-positive blobs per frame.
    #[arg(long)]
    false_positive_rate: Option<f64>,
    /// Probability of erasing an object.
    #[arg(long)]
    drop_rate: Option<f64>,
}

pub fn predict_oracle(a: &PredictArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let dir = require(&a.targets, &cfg.paths.targets, "targets")?;
    let labels = read_labels(&require(&a.labels, &cfg.paths.labels, "labels")?)?;
    let anchors = AnchorSet::load(&require(&a.anchors, &cfg.paths.anchors, "anchors")?)?;
    let out = require(&a.predictions, &cfg.paths.predictions, "predictions")?;
    let mut oc = cfg.oracle.clone();
    set(&mut oc.iou_noise_sigma, &a.iou_noise_sigma);
    set(&mut oc.offset_noise_sigma, &a.offset_noise_sigma);
    set(&mut oc.false_positive_rate, &a.false_positive_rate);
    set(&mut oc.drop_rate, &a.drop_rate);
    oc.seed = stage_seed(seed_of(&a.common, &cfg), stage::ORACLE);
    let meta = read_grid(&dir.join(GRID_SIDECAR))?;
    ensure_dir(&out)?;
    write_grid(&out, &meta)?;
    for f in &labels {
        let target = load_tensor_file(&dir.join(targets_name(f.t)), &meta, &anchors)?;
        store_tensors(&out.join(prediction_name(f.t)), &predict_frame(&target, f, &oc)?)?;
    }
    println!("{} frames predicted to {}", labels.len(), out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of prediction tensors.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Anchor-set JSON.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Output JSON-lines detection file.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Minimum score of a detection.
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Anchors averaged per cell for the winning box.
    #[arg(long)]
    top_k_anchors: Option<usize>,
    /// Side length (cells) of the local-maximum window.
    #[arg(long)]
    local_max_neighborhood: Option<usize>,
}

pub fn decode(a: &DecodeArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let dir = require(&a.predictions, &cfg.paths.predictions, "predictions")?;
    let anchors = AnchorSet::load(&require(&a.anchors, &cfg.paths.anchors, "anchors")?)?;
    let out = require(&a.detections, &cfg.paths.detections, "detections")?;
    let mut dc = cfg.decode.clone();
    set(&mut dc.score_threshold, &a.score_threshold);
    set(&mut dc.top_k_anchors, &a.top_k_anchors);
    set(&mut dc.local_max_neighborhood, &a.local_max_neighborhood);
    let meta = read_grid(&dir.join(GRID_SIDECAR))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| io_error(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dgt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no .dgt files in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut degenerate = 0;
    for p in &files {
        let pred = load_tensor_file(p, &meta, &anchors)?;
        let (dets, d) = decode_frame(&pred, frame_of(p)?, &dc)?;
        frames.push(dets);
        degenerate += d;
    }
    ensure_parent(&out)?;
    write_detections(&out, &frames)?;
    let n: usize = frames.iter().map(|f| f.detections.len()).sum();
    println!("{n} detections in {} frames ({degenerate} degenerate boxes skipped)", frames.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// JSON-lines detection file.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// JSON-lines label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output CSV with one row per gamma.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    /// Output CSV of box errors at the reference gamma.
    #[arg(long)]
    rmse_csv: Option<PathBuf>,
    /// Gamma for the counts and box errors.
    #[arg(long)]
    reference_gamma: Option<f64>,
}

/// Pairs detection and label frames by frame index; frames missing on one
/// side count as empty.
fn align(dets: Vec<dogma_core::io::labels::FrameDetections>, labels: &[FrameLabels]) -> Result<Vec<dogma_core::io::labels::FrameDetections>> {
    let mut by_t = std::collections::BTreeMap::new();
    for d in dets {
        let t = d.t;
        if by_t.insert(t, d).is_some() {
            return Err(Error::Invariant(format!("frame {t} appears twice in the detections")));
        }
    }
    let out: Vec<_> = labels
        .iter()
        .map(|l| {
            by_t.remove(&l.t).unwrap_or(dogma_core::io::labels::FrameDetections {
                t: l.t,
                detections: Vec::new(),
            })
        })
        .collect();
    if let Some(t) = by_t.keys().next() {
        return Err(Error::Dimension(format!("detections for frame {t} have no label frame")));
    }
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let labels = read_labels(&require(&a.labels, &cfg.paths.labels, "labels")?)?;
    let dets = read_detections(&require(&a.detections, &cfg.paths.detections, "detections")?)?;
    let report_path = require(&a.report, &cfg.paths.report, "report")?;
    let mut ec = cfg.eval.clone();
    set(&mut ec.reference_gamma, &a.reference_gamma);
    let dets = align(dets, &labels)?;
    let report = evaluate(&scored_frames(&dets), &label_boxes(&labels), &ec)?;
    write_text(&report_path, &(report.to_json()? + "\n"))?;
    if let Some(p) = &a.pr_csv {
        write_text(p, &report.pr_csv())?;
    }
    if let Some(p) = &a.rmse_csv {
        write_text(p, &report.rmse_csv())?;
    }
    print_report(&report);
    Ok(())
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for every artifact.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also store the simulated DGF1 frames under <out>/frames.
    #[arg(long)]
    write_frames: bool,
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = CliConfig::load(a.common.config.as_deref())?;
    let out = require(&a.out, &cfg.paths.out, "out")?;
    let mut pc = cfg.pipeline()?;
    pc.seed = seed_of(&a.common, &cfg);
    let run = run_pipeline(&pc)?;
    ensure_dir(&out)?;
    write_labels(&out.join("ground_truth.jsonl"), &run.ground_truth)?;
    write_labels(&out.join("labels.jsonl"), &run.labels.labels)?;
    write_text(&out.join("rejections.csv"), &run.labels.rejection_csv())?;
    run.anchor_set.save(&out.join("anchors.json"))?;
    write_grid(&out, &run.frames[0].meta)?;
    write_detections(&out.join("detections.jsonl"), &run.detections)?;
    write_text(&out.join("loss.csv"), &run.loss_csv())?;
    write_text(&out.join("report.json"), &(run.report.to_json()? + "\n"))?;
    write_text(&out.join("pr.csv"), &run.report.pr_csv())?;
    write_text(&out.join("rmse.csv"), &run.report.rmse_csv())?;
    write_text(&out.join("label_report.json"), &(run.label_report.to_json()? + "\n"))?;
    if a.write_frames {
        store_frames_dir(&out.join("frames"), &run.frames)?;
    }
    print!("{}", run.summary());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_index_comes_from_the_file_name() {
        assert_eq!(frame_of(Path::new("x/pred_000042.dgt")).unwrap(), 42);
        assert!(frame_of(Path::new("x/pred.dgt")).is_err());
    }

    #[test]
    fn alignment_fills_missing_frames() {
        let labels: Vec<FrameLabels> = (0..3).map(|t| FrameLabels { t, objects: vec![] }).collect();
        let dets = vec![dogma_core::io::labels::FrameDetections { t: 1, detections: vec![] }];
        let out = align(dets, &labels).unwrap();
        assert_eq!(out.iter().map(|d| d.t).collect::<Vec<_>>(), vec![0, 1, 2]);
        let stray = vec![dogma_core::io::labels::FrameDetections { t: 7, detections: vec![] }];
        assert!(matches!(align(stray, &labels), Err(Error::Dimension(_))));
    }
}
