use super::*;
use crate::geometry::{cells_in_box, rotated_iou, Shape};
use crate::grid::{CellState, GridMeta};
use crate::simulator::{simulate, NoiseConfig, ObjectSpec, ScenarioConfig, Waypoint};

fn moving(v_e: f64, v_n: f64) -> CellState {
    CellState {
        m_occ: 0.95,
        v_e,
        v_n,
        var_ve: 0.04,
        var_vn: 0.04,
        ..Default::default()
    }
}

fn frame_with(meta: &GridMeta, cells: &[(usize, usize, CellState)]) -> DogmaFrame {
    let mut f = DogmaFrame::unknown(meta.clone());
    for (c, r, s) in cells {
        f.set_cell(*c, *r, s);
    }
    f
}

fn single_context(frame: &DogmaFrame, config: &LabelerConfig) -> FrameContext {
    prepare(std::slice::from_ref(frame), config).unwrap().remove(0)
}

fn block(c0: usize, r0: usize, w: usize, h: usize, s: CellState) -> Vec<(usize, usize, CellState)> {
    let mut v = Vec::new();
    for r in r0..r0 + h {
        for c in c0..c0 + w {
            v.push((c, r, s));
        }
    }
    v
}

fn car(e0: f64, n0: f64, ve: f64, vn: f64, seconds: f64) -> ObjectSpec {
    ObjectSpec {
        shape: Shape::from_dims(2.0, 4.5),
        waypoints: vec![
            Waypoint { e: e0, n: n0, time: 0.0 },
            Waypoint {
                e: e0 + ve * seconds,
                n: n0 + vn * seconds,
                time: seconds,
            },
        ],
        class_tag: "car".into(),
    }
}

#[test]
fn unknown_frame_has_no_seeds() {
    let meta = GridMeta::new(20, 20, 0.15);
    let f = DogmaFrame::unknown(meta);
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    assert!(detect_initializations(&ctx.smoothed, &f, &[], &cfg).is_empty());
}

#[test]
fn high_variance_cells_do_not_seed() {
    let meta = GridMeta::new(30, 30, 0.15);
    let mut noisy = moving(5.0, 0.0);
    noisy.var_ve = 2.0;
    let f = frame_with(&meta, &block(5, 5, 20, 20, noisy));
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    assert!(detect_initializations(&ctx.smoothed, &f, &[], &cfg).is_empty());
    let f = frame_with(&meta, &block(5, 5, 20, 20, moving(5.0, 0.0)));
    let ctx = single_context(&f, &cfg);
    assert!(!detect_initializations(&ctx.smoothed, &f, &[], &cfg).is_empty());
}

#[test]
fn simulated_car_seeds_lie_in_its_box() {
    let meta = GridMeta::new(96, 96, 0.15);
    let mut sc = ScenarioConfig::new(meta.clone(), 3);
    sc.noise = NoiseConfig::off();
    sc.surface_depth = 1.5;
    sc.objects.push(car(2.0, 3.0, 5.0, 0.0, 1.0));
    let (frames, gt) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let ctx = prepare(&frames, &cfg).unwrap();
    let seeds = detect_initializations(&ctx[1].smoothed, &frames[1], &[], &cfg);
    assert!(!seeds.is_empty());
    let inside = cells_in_box(&gt.frames[1][0].bbox, &meta);
    assert!(seeds.iter().all(|s| inside.binary_search(s).is_ok()));
}

#[test]
fn isolated_seed_stays_alone() {
    let meta = GridMeta::new(20, 20, 0.15);
    let f = frame_with(&meta, &[(10, 10, moving(5.0, 0.0))]);
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    let seed = meta.index(10, 10);
    let s = segment_cluster(&f, &ctx, &[seed], None, &[], 0, &cfg);
    assert_eq!(s.cells, vec![seed]);
}

#[test]
fn uniform_blob_is_taken_whole() {
    let meta = GridMeta::new(40, 40, 0.15);
    let f = frame_with(&meta, &block(10, 12, 12, 8, moving(3.0, 1.0)));
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    let s = segment_cluster(&f, &ctx, &[meta.index(16, 16)], None, &[], 0, &cfg);
    assert_eq!(s.cells.len(), 96);
    assert!((s.stats.mean_v.0 - 3.0).abs() < 1e-6);
}

#[test]
fn separated_objects_never_merge() {
    let meta = GridMeta::new(48, 24, 0.15);
    let mut cells = block(4, 6, 12, 10, moving(4.0, 0.0));
    cells.extend(block(18, 6, 12, 10, moving(4.0, 0.0)));
    let f = frame_with(&meta, &cells);
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    let a = segment_cluster(&f, &ctx, &[meta.index(8, 10)], None, &[], 0, &cfg);
    let b = segment_cluster(&f, &ctx, &[meta.index(24, 10)], None, &[], 0, &cfg);
    assert_eq!(a.cells.len(), 120);
    assert_eq!(b.cells.len(), 120);
    assert!(a.cells.iter().all(|c| b.cells.binary_search(c).is_err()));
}

#[test]
fn masked_cells_never_join() {
    let meta = GridMeta::new(30, 30, 0.15);
    let f = frame_with(&meta, &block(5, 5, 10, 10, moving(3.0, 0.0)));
    let mut mask = Array2::from_elem((30, 30), false);
    for c in 5..15 {
        mask[[9, c]] = true;
    }
    let cfg = LabelerConfig {
        static_mask: Some(mask.clone()),
        ..Default::default()
    };
    let ctx = single_context(&f, &cfg);
    let s = segment_cluster(&f, &ctx, &[meta.index(7, 6)], None, &[], 0, &cfg);
    assert_eq!(s.cells.len(), 40);
    assert!(s.cells.iter().all(|&i| {
        let (c, r) = meta.col_row(i);
        !mask[[r, c]]
    }));
}

fn silhouette_of(cells: Vec<usize>) -> Silhouette {
    Silhouette {
        stats: ClusterStats {
            mean_v: (0.0, 0.0),
            cov_v: [[0.0; 2]; 2],
            n_inliers: cells.len(),
        },
        cells,
        frame_index: 0,
    }
}

#[test]
fn identical_velocities_have_no_outliers() {
    let meta = GridMeta::new(10, 10, 0.15);
    let exact = CellState {
        m_occ: 0.9,
        v_e: 2.0,
        ..Default::default()
    };
    let f = frame_with(&meta, &block(2, 2, 4, 4, exact));
    let sil = silhouette_of(cells_of(&meta, 2, 2, 4, 4));
    let (stats, outliers) = robust_stats(&sil, &f, 5);
    assert!(outliers.is_empty());
    assert_eq!(stats.cov_v, [[0.0; 2]; 2]);
    assert_eq!(stats.mean_v, (2.0, 0.0));
}

fn cells_of(meta: &GridMeta, c0: usize, r0: usize, w: usize, h: usize) -> Vec<usize> {
    let mut v: Vec<usize> = block(c0, r0, w, h, CellState::default())
        .iter()
        .map(|(c, r, _)| meta.index(*c, *r))
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn contrarian_cell_is_an_outlier() {
    let meta = GridMeta::new(30, 3, 0.15);
    let mut cells = Vec::new();
    for k in 0..20 {
        let jitter = if k % 2 == 0 { 0.1 } else { -0.1 };
        let s = CellState {
            m_occ: 0.9,
            v_e: 5.0 + jitter,
            v_n: -jitter,
            ..Default::default()
        };
        cells.push((k, 1, s));
    }
    let contrarian = CellState {
        m_occ: 0.9,
        v_e: -5.0,
        var_ve: 0.01,
        var_vn: 0.01,
        ..Default::default()
    };
    cells.push((25, 1, contrarian));
    let f = frame_with(&meta, &cells);
    let sil = silhouette_of(cells_of(&meta, 0, 1, 20, 1).into_iter().chain([meta.index(25, 1)]).collect());
    let (stats, outliers) = robust_stats(&sil, &f, 20);
    assert_eq!(outliers, vec![meta.index(25, 1)]);
    // Oracle: sample covariance of the twenty inliers (cells store f32).
    let var = 20.0 * 0.01 / 19.0;
    assert!((stats.cov_v[0][0] - var).abs() < 1e-6);
    assert!((stats.cov_v[0][1] + var).abs() < 1e-6);
    let d = (-10.0f64).abs() / var.sqrt();
    assert!(d > 2.0);
}

#[test]
fn inlier_count_is_clamped() {
    let meta = GridMeta::new(10, 10, 0.15);
    let f = frame_with(&meta, &block(0, 0, 3, 3, moving(1.0, 1.0)));
    let sil = silhouette_of(cells_of(&meta, 0, 0, 3, 3));
    let (stats, outliers) = robust_stats(&sil, &f, 1000);
    assert_eq!(stats.n_inliers, 9);
    assert!(outliers.is_empty());
}

#[test]
fn prediction_shifts_and_counts_seeds() {
    let meta = GridMeta::new(40, 40, 0.15);
    let f = frame_with(&meta, &block(0, 0, 40, 40, moving(1.5, 0.0)));
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    let cells = cells_of(&meta, 5, 5, 8, 5);
    assert_eq!(cells.len(), 40);
    let mut sil = silhouette_of(cells.clone());
    let still = predict_silhouette(&sil, &sil.stats, 0.1, &f, &ctx.raw, &[], &cfg);
    assert_eq!(still.cells, cells);
    // 40 cells · 0.0225 m² = 0.9 m² at one seed per 0.5 m².
    assert_eq!(still.seeds.len(), 2);

    sil.stats.mean_v = (1.5, 0.0);
    let moved = predict_silhouette(&sil, &sil.stats, 0.1, &f, &ctx.raw, &[], &cfg);
    assert_eq!(moved.cells, cells_of(&meta, 6, 5, 8, 5));
}

#[test]
fn prediction_off_grid_is_empty() {
    let meta = GridMeta::new(10, 10, 0.15);
    let f = DogmaFrame::unknown(meta.clone());
    let cfg = LabelerConfig::default();
    let ctx = single_context(&f, &cfg);
    let mut sil = silhouette_of(cells_of(&meta, 0, 0, 2, 2));
    sil.stats.mean_v = (-100.0, 0.0);
    let p = predict_silhouette(&sil, &sil.stats, 0.1, &f, &ctx.raw, &[], &cfg);
    assert!(p.cells.is_empty() && p.seeds.is_empty());
}

#[test]
fn reference_point_is_nearest_visible_corner() {
    let meta = GridMeta::new(80, 80, 0.15);
    let field = ScalarField::from_fn(meta.clone(), |_, _| 0.5);
    let (se, sn) = (meta.sensor_origin_e, meta.sensor_origin_n);
    let bx = OrientedBox::new(se + 3.0, sn + 2.0, 1.0, 2.0, 0.0);
    let nearest = (0..4)
        .min_by(|&a, &b| {
            let d = |i: usize| {
                let p = bx.corner(i);
                (p.0 - se).hypot(p.1 - sn)
            };
            d(a).total_cmp(&d(b))
        })
        .unwrap();
    assert_eq!(select_reference_point(&bx, &field, 0.7), nearest);
    assert_eq!(nearest, 2);
}

#[test]
fn reference_point_avoids_blocked_corners() {
    let meta = GridMeta::new(80, 80, 0.15);
    let (se, sn) = (meta.sensor_origin_e, meta.sensor_origin_n);
    let bx = OrientedBox::new(se + 3.0, sn + 2.0, 1.0, 2.0, 0.0);
    // A wall patch crossing the lines of sight to corners 0, 2 and 3 but not 1.
    let wall = |e: f64, n: f64| (1.0..=1.6).contains(&(e - se)) && (0.3..=0.9).contains(&(n - sn));
    let field = ScalarField::from_fn(meta.clone(), |c, r| {
        let (e, n) = meta.cell_center(c, r);
        if wall(e, n) {
            0.95
        } else {
            0.5
        }
    });
    // Oracle: the n coordinate of each ray where it crosses e = se + 1.0.
    let corners = bx.corners();
    let crossing: Vec<f64> = corners.iter().map(|p| (p.1 - sn) * 1.0 / (p.0 - se)).collect();
    assert!(crossing[1] > 0.9 && [0, 2, 3].iter().all(|&i| crossing[i] < 0.9));
    assert_eq!(select_reference_point(&bx, &field, 0.7), 1);

    let everywhere = ScalarField::from_fn(meta.clone(), |c, r| {
        let (e, n) = meta.cell_center(c, r);
        if (e - se).hypot(n - sn) > 0.5 && (e - se).hypot(n - sn) < 1.5 {
            0.95
        } else {
            0.5
        }
    });
    assert_eq!(select_reference_point(&bx, &everywhere, 0.7), 2);
}

#[test]
fn full_rectangle_gives_its_cover() {
    let meta = GridMeta::new(40, 40, 0.25);
    let cells = cells_of(&meta, 10, 12, 16, 8);
    let mut sil = silhouette_of(cells);
    sil.stats.mean_v = (3.0, 0.0);
    let field = ScalarField::from_fn(meta.clone(), |_, _| 0.5);
    let fit = fit_box(&sil, &sil.stats, &field, None, None, &LabelerConfig::default());
    let b = fit.bbox;
    assert!((b.length - 4.0).abs() < 1e-9 && (b.width - 2.0).abs() < 1e-9);
    assert!((b.center_e - 4.5).abs() < 1e-9 && (b.center_n - 4.0).abs() < 1e-9);
    assert_eq!(b.orientation, 0.0);
}

#[test]
fn single_cell_with_prior_is_anchored_at_that_cell() {
    let meta = GridMeta::new(40, 40, 0.25);
    let cell = meta.index(30, 30);
    let mut sil = silhouette_of(vec![cell]);
    sil.stats.mean_v = (0.0, 2.0);
    let field = ScalarField::from_fn(meta.clone(), |_, _| 0.5);
    let prior = Shape::from_dims(2.0, 4.5);
    let fit = fit_box(&sil, &sil.stats, &field, Some(prior), None, &LabelerConfig::default());
    assert!((fit.bbox.width - 2.0).abs() < 1e-12 && (fit.bbox.length - 4.5).abs() < 1e-12);
    let corner = fit.bbox.corner(fit.reference_corner);
    assert_eq!(corner, fit.cover.corner(fit.reference_corner));
    let (e, n) = meta.index_center(cell);
    assert!((corner.0 - e).abs() <= 0.125 + 1e-12 && (corner.1 - n).abs() <= 0.125 + 1e-12);
}

#[test]
fn reanchor_keeps_the_corner() {
    let b = OrientedBox::new(1.0, 2.0, 1.0, 2.0, 0.7);
    for k in 0..4 {
        let r = reanchor(&b, k, 3.0, 5.0);
        let (p, q) = (b.corner(k), r.corner(k));
        assert!((p.0 - q.0).abs() < 1e-12 && (p.1 - q.1).abs() < 1e-12);
        assert_eq!((r.width, r.length), (3.0, 5.0));
    }
}

fn scenario(meta: GridMeta, frames: usize) -> ScenarioConfig {
    let mut sc = ScenarioConfig::new(meta, frames);
    sc.noise = NoiseConfig {
        velocity_sigma: 0.1,
        occupancy_beta: (9.0, 1.0),
        spurious_border_prob: 0.0,
        appearance_ramp_frames: 0,
    };
    sc.surface_depth = 1.2;
    sc.seed = 5;
    sc
}

#[test]
fn static_scene_has_no_trajectories() {
    let meta = GridMeta::new(64, 64, 0.15);
    let mut sc = scenario(meta, 5);
    sc.static_walls.push(OrientedBox::new(3.0, 3.0, 0.6, 4.0, 0.0));
    let (frames, _) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let ctx = prepare(&frames, &cfg).unwrap();
    assert!(forward_pass(&frames, &ctx, &cfg).is_empty());
}

#[test]
fn single_car_is_one_long_track() {
    let meta = GridMeta::new(200, 120, 0.15);
    let mut sc = scenario(meta, 50);
    sc.objects.push(car(3.0, 5.0, 4.0, 0.0, 4.9));
    let (frames, gt) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let ctx = prepare(&frames, &cfg).unwrap();
    let raw = forward_pass(&frames, &ctx, &cfg);
    assert_eq!(raw.len(), 1, "{:?}", raw.iter().map(|t| (t.id, t.entries.len())).collect::<Vec<_>>());
    assert!(raw[0].entries.len() >= 45);
    // Forward boxes only cover what was seen, so compare the anchored corner.
    for e in &raw[0].entries {
        let truth = gt.frames[e.frame][0].bbox.corners();
        let p = e.bbox.corner(e.reference_corner);
        let d = truth.iter().map(|q| (p.0 - q.0).hypot(p.1 - q.1)).fold(f64::INFINITY, f64::min);
        assert!(d < 0.5, "frame {}: reference corner {d} m from the nearest true corner", e.frame);
    }
}

#[test]
fn crossing_cars_keep_their_ids() {
    let meta = GridMeta::new(200, 200, 0.15);
    let mut sc = scenario(meta, 40);
    sc.objects.push(car(3.0, 12.0, 5.0, 0.0, 3.9));
    sc.objects.push(car(18.0, 3.0, 0.0, 5.0, 3.9));
    let (frames, gt) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let ctx = prepare(&frames, &cfg).unwrap();
    let raw = forward_pass(&frames, &ctx, &cfg);
    assert!(raw.len() >= 2);
    for traj in &raw {
        // Each track follows one object throughout.
        let owner = |e: &TrajectoryEntry| {
            gt.frames[e.frame]
                .iter()
                .map(|o| (o.bbox.center_e - e.bbox.center_e).hypot(o.bbox.center_n - e.bbox.center_n))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
        };
        let first = owner(&traj.entries[0]).0;
        for e in &traj.entries {
            let (who, _) = owner(e);
            assert_eq!(who, first, "id switch in track {}", traj.id);
            let truth = gt.frames[e.frame][who].bbox.corners();
            let p = e.bbox.corner(e.reference_corner);
            let d = truth.iter().map(|q| (p.0 - q.0).hypot(p.1 - q.1)).fold(f64::INFINITY, f64::min);
            assert!(d < 0.5, "track {} corner is {d} m off at frame {}", traj.id, e.frame);
        }
    }
}

#[test]
fn backward_pass_recovers_the_ramp() {
    let meta = GridMeta::new(220, 120, 0.15);
    let mut sc = scenario(meta, 50);
    sc.noise.appearance_ramp_frames = 15;
    sc.objects.push(car(3.0, 5.0, 4.0, 0.0, 4.9));
    let (frames, gt) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let ctx = prepare(&frames, &cfg).unwrap();
    let raw = forward_pass(&frames, &ctx, &cfg);
    let start = raw[0].forward_start;
    assert!(start > 5, "forward pass started at {start}");
    let refined = backward_pass(&frames, &ctx, raw, &cfg);
    let first = refined[0].first_frame().unwrap();
    assert!(first <= 5, "refined track starts at {first}");
    let (w, l) = (refined[0].entries[0].bbox.width, refined[0].entries[0].bbox.length);
    assert!(refined[0].entries.iter().all(|e| e.bbox.width == w && e.bbox.length == l));
    assert!((w - 2.0).abs() <= 0.3 && (l - 4.5).abs() <= 0.3, "{w} x {l}");
    for e in &refined[0].entries {
        assert!(rotated_iou(&e.bbox, &gt.frames[e.frame][0].bbox) > 0.5);
    }
}

fn hand_trajectory(id: u64, points: &[(f64, f64)]) -> Trajectory {
    let entries = points
        .iter()
        .enumerate()
        .map(|(t, &(e, n))| TrajectoryEntry {
            frame: t,
            bbox: OrientedBox::new(e, n, 1.8, 4.4, 0.0),
            silhouette: silhouette_of(vec![0]),
            reference_corner: 0,
        })
        .collect();
    Trajectory {
        id,
        entries,
        status: TrajectoryStatus::Refined,
        forward_start: 0,
    }
}

fn timeline(n: usize) -> Vec<FrameContext> {
    let meta = GridMeta::new(4, 4, 1.0);
    let f = DogmaFrame::unknown(meta);
    let cfg = LabelerConfig::default();
    let one = single_context(&f, &cfg);
    (0..n)
        .map(|t| FrameContext {
            time: 0.1 * t as f64,
            ..one.clone()
        })
        .collect()
}

#[test]
fn flicker_is_rejected_for_min_displacement() {
    let ctx = timeline(10);
    let pts: Vec<(f64, f64)> = (0..10).map(|t| (5.0 + 0.03 * (t % 2) as f64, 5.0)).collect();
    let out = postprocess(vec![hand_trajectory(1, &pts)], &ctx, &GridMeta::new(100, 100, 0.15), &LabelerConfig::default()).unwrap();
    assert_eq!(out.rejections, vec![Rejection { id: 1, reason: RejectReason::MinDisplacement }]);
    assert!(out.labels.iter().all(|f| f.objects.is_empty()));
    assert_eq!(out.rejection_csv(), "id,reason\n1,min-displacement\n");
}

#[test]
fn straight_track_passes_through_unchanged() {
    let ctx = timeline(20);
    let pts: Vec<(f64, f64)> = (0..20).map(|t| (2.0 + 0.4 * t as f64, 3.0 + 0.1 * t as f64)).collect();
    let out = postprocess(vec![hand_trajectory(7, &pts)], &ctx, &GridMeta::new(100, 100, 0.15), &LabelerConfig::default()).unwrap();
    assert!(out.rejections.is_empty());
    for (t, &(e, n)) in pts.iter().enumerate() {
        let o = &out.labels[t].objects[0];
        assert!((o.e - e).abs() < 1e-6 && (o.n - n).abs() < 1e-6);
        assert!((o.ve - 4.0).abs() < 1e-6 && (o.vn - 1.0).abs() < 1e-6);
    }
}

#[test]
fn smoothing_reduces_jitter() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let ctx = timeline(60);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let truth = |t: usize| (1.0 + 0.5 * t as f64, 2.0);
    let pts: Vec<(f64, f64)> = (0..60)
        .map(|t| {
            let (e, n) = truth(t);
            (e + jitter.sample(&mut rng), n + jitter.sample(&mut rng))
        })
        .collect();
    let cfg = LabelerConfig {
        a_max: 1e9,
        ..Default::default()
    };
    let out = postprocess(vec![hand_trajectory(1, &pts)], &ctx, &GridMeta::new(100, 100, 0.15), &cfg).unwrap();
    let rms = |f: &dyn Fn(usize) -> (f64, f64)| {
        ((0..60)
            .map(|t| {
                let (e, n) = f(t);
                let (te, tn) = truth(t);
                (e - te).powi(2) + (n - tn).powi(2)
            })
            .sum::<f64>()
            / 60.0)
            .sqrt()
    };
    let raw = rms(&|t| pts[t]);
    let smooth = rms(&|t| (out.labels[t].objects[0].e, out.labels[t].objects[0].n));
    assert!(smooth < raw, "{smooth} vs {raw}");
}

#[test]
fn overlapping_trajectories_keep_the_longest() {
    let ctx = timeline(20);
    let long: Vec<(f64, f64)> = (0..20).map(|t| (2.0 + 0.4 * t as f64, 3.0)).collect();
    let mut short = hand_trajectory(2, &long[..8]);
    for e in short.entries.iter_mut() {
        e.bbox.center_n += 0.1;
    }
    let out = postprocess(vec![short, hand_trajectory(1, &long)], &ctx, &GridMeta::new(100, 100, 0.15), &LabelerConfig::default()).unwrap();
    assert_eq!(out.rejections, vec![Rejection { id: 2, reason: RejectReason::Duplicate }]);
}

#[test]
fn labeler_is_deterministic() {
    let meta = GridMeta::new(120, 80, 0.15);
    let mut sc = scenario(meta, 20);
    sc.objects.push(car(2.0, 4.0, 4.0, 0.5, 1.9));
    let (frames, _) = simulate(&sc).unwrap();
    let cfg = LabelerConfig::default();
    let a = label_sequence(&frames, &cfg).unwrap();
    let b = label_sequence(&frames, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.labels.len(), 20);
    assert!(a.accepted().count() >= 1);
}

#[test]
fn config_rejects_bad_values() {
    let cfg = LabelerConfig {
        connectivity: 6,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
    let cfg = LabelerConfig {
        p_init: 0.0,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
    assert!(label_sequence(&[], &LabelerConfig::default()).is_err());
}
