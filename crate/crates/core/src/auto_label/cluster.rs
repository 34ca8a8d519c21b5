//! Seeds, region growing, inlier statistics and silhouette prediction.

use std::collections::VecDeque;

use super::{ClusterStats, FrameContext, LabelerConfig, Silhouette};
use crate::grid::{DogmaFrame, GridMeta, ScalarField};

/// Cells fit to start a track: confidently occupied, clearly moving, with a
/// precise velocity, not masked and not excluded.
pub fn detect_initializations(
    smoothed: &ScalarField,
    frame: &DogmaFrame,
    excluded: &[bool],
    config: &LabelerConfig,
) -> Vec<usize> {
    let meta = &frame.meta;
    (0..meta.n_cells())
        .filter(|&i| {
            if excluded.get(i).copied().unwrap_or(false) || config.masked(meta, i) {
                return false;
            }
            let s = frame.cell_at(i);
            smoothed.at(i) >= config.p_init && s.speed() >= config.v_min && s.var_ve.max(s.var_vn) <= config.var_init_max
        })
        .collect()
}

fn neighbors(meta: &GridMeta, index: usize, connectivity: u8) -> impl Iterator<Item = usize> + '_ {
    let (c, r) = meta.col_row(index);
    meta.neighbors8(index).filter(move |&j| {
        let (nc, nr) = meta.col_row(j);
        connectivity == 8 || nc == c || nr == r
    })
}

fn mean_velocity(frame: &DogmaFrame, cells: &[usize]) -> (f64, f64) {
    let n = cells.len().max(1) as f64;
    let (se, sn) = cells.iter().fold((0.0, 0.0), |(e, n), &i| {
        let s = frame.cell_at(i);
        (e + s.v_e, n + s.v_n)
    });
    (se / n, sn / n)
}

fn plain_stats(frame: &DogmaFrame, cells: &[usize]) -> ClusterStats {
    ClusterStats {
        mean_v: mean_velocity(frame, cells),
        cov_v: [[0.0; 2]; 2],
        n_inliers: cells.len(),
    }
}

/// Grows a silhouette from `seeds` over neighboring cells of similar
/// occupancy and velocity. Growth stops one cell past the inflection mask.
pub fn segment_cluster(
    frame: &DogmaFrame,
    ctx: &FrameContext,
    seeds: &[usize],
    prior: Option<&ClusterStats>,
    excluded: &[bool],
    frame_index: usize,
    config: &LabelerConfig,
) -> Silhouette {
    let meta = &frame.meta;
    let blocked = |i: usize| excluded.get(i).copied().unwrap_or(false) || config.masked(meta, i);
    // 0: outside, 1: joined but not grown from, 2: grown from.
    let mut state = vec![0u8; meta.n_cells()];
    let mut queue = VecDeque::new();
    let mut seed_cells = Vec::new();
    for &s in seeds {
        if !blocked(s) && state[s] == 0 {
            state[s] = 2;
            queue.push_back(s);
            seed_cells.push(s);
        }
    }
    let mean_v = prior.map_or_else(|| mean_velocity(frame, &seed_cells), |p| p.mean_v);
    let inflection = |i: usize| ctx.derivatives.is_inflection(i);
    while let Some(c) = queue.pop_front() {
        if state[c] != 2 {
            continue;
        }
        // Slope cells reach one step further.
        let edge = inflection(c) && !seed_cells.contains(&c);
        let pc = ctx.raw.at(c);
        for nb in neighbors(meta, c, config.connectivity) {
            let target = if edge { 1 } else { 2 };
            if state[nb] >= target || blocked(nb) || ctx.raw.at(nb) <= config.p_member {
                continue;
            }
            if (ctx.raw.at(nb) - pc).abs() > config.similarity_p {
                continue;
            }
            let s = frame.cell_at(nb);
            if (s.v_e - mean_v.0).abs() > config.similarity_v || (s.v_n - mean_v.1).abs() > config.similarity_v {
                continue;
            }
            state[nb] = target;
            queue.push_back(nb);
        }
    }
    let cells: Vec<usize> = (0..state.len()).filter(|&i| state[i] > 0).collect();
    Silhouette {
        stats: plain_stats(frame, &cells),
        cells,
        frame_index,
    }
}

fn mahalanobis(diff: (f64, f64), cov: &[[f64; 2]; 2]) -> f64 {
    if diff == (0.0, 0.0) {
        return 0.0;
    }
    let ridge = 1e-12 * (1.0 + cov[0][0] + cov[1][1]);
    let (a, b, d) = (cov[0][0] + ridge, cov[0][1], cov[1][1] + ridge);
    let det = a * d - b * b;
    let q = (d * diff.0 * diff.0 - 2.0 * b * diff.0 * diff.1 + a * diff.1 * diff.1) / det;
    q.max(0.0).sqrt()
}

/// Inlier statistics from the `n` most reliable cells (lowest velocity
/// variance, then highest P_O). The covariance is the inlier sample
/// covariance plus the mean per-cell covariance. Remaining cells further than
/// 2 in Mahalanobis distance from the inlier mean are returned as outliers.
pub fn robust_stats(silhouette: &Silhouette, frame: &DogmaFrame, n: usize) -> (ClusterStats, Vec<usize>) {
    let mut ranked: Vec<(f64, f64, usize)> = silhouette
        .cells
        .iter()
        .map(|&i| {
            let s = frame.cell_at(i);
            (s.var_ve + s.var_vn, s.occupancy_probability(), i)
        })
        .collect();
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(&y.2)));
    let k = n.max(1).min(ranked.len());
    let inliers: Vec<usize> = ranked[..k].iter().map(|r| r.2).collect();
    let states: Vec<_> = inliers.iter().map(|&i| frame.cell_at(i)).collect();
    let kf = k as f64;
    let mean = states.iter().fold((0.0, 0.0), |m, s| (m.0 + s.v_e / kf, m.1 + s.v_n / kf));
    let mut cov = [[0.0; 2]; 2];
    if k > 1 {
        for s in &states {
            let d = [s.v_e - mean.0, s.v_n - mean.1];
            for (a, row) in cov.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v += d[a] * d[b] / (kf - 1.0);
                }
            }
        }
    }
    for s in &states {
        cov[0][0] += s.var_ve / kf;
        cov[1][1] += s.var_vn / kf;
        cov[0][1] += s.cov_ven / kf;
        cov[1][0] += s.cov_ven / kf;
    }
    let stats = ClusterStats {
        mean_v: mean,
        cov_v: cov,
        n_inliers: k,
    };
    let outliers = ranked[k..]
        .iter()
        .map(|r| r.2)
        .filter(|&i| {
            let s = frame.cell_at(i);
            mahalanobis((s.v_e - mean.0, s.v_n - mean.1), &cov) > 2.0
        })
        .collect::<Vec<_>>();
    let mut outliers = outliers;
    outliers.sort_unstable();
    (stats, outliers)
}

/// The silhouette without `cells` (both sorted).
pub fn remove_cells(silhouette: &Silhouette, cells: &[usize], stats: ClusterStats) -> Silhouette {
    Silhouette {
        cells: silhouette
            .cells
            .iter()
            .copied()
            .filter(|c| cells.binary_search(c).is_err())
            .collect(),
        stats,
        frame_index: silhouette.frame_index,
    }
}

/// Outlier removal followed by re-estimating the mean velocity over every
/// remaining cell; the covariance stays that of the inliers.
pub(crate) fn clean(grown: &Silhouette, frame: &DogmaFrame, n: usize) -> Silhouette {
    let (stats, outliers) = robust_stats(grown, frame, n);
    let mut sil = remove_cells(grown, &outliers, stats);
    if !sil.cells.is_empty() {
        sil.stats.mean_v = mean_velocity(frame, &sil.cells);
    }
    sil
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Sorted, deduplicated.
    pub cells: Vec<usize>,
    pub seeds: Vec<usize>,
}

/// Shifts every cell by `shift_v·dt` and picks seeds among the shifted cells
/// whose velocity in `next` is closest to `match_v`.
pub(crate) fn predict_shifted(
    silhouette: &Silhouette,
    shift_v: (f64, f64),
    match_v: (f64, f64),
    dt: f64,
    next: &DogmaFrame,
    raw_next: &ScalarField,
    excluded: &[bool],
    config: &LabelerConfig,
) -> Prediction {
    let meta = &next.meta;
    let mut cells: Vec<usize> = silhouette
        .cells
        .iter()
        .filter_map(|&i| {
            let (e, n) = meta.index_center(i);
            meta.cell_of(e + shift_v.0 * dt, n + shift_v.1 * dt)
                .map(|(c, r)| meta.index(c, r))
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let n_seeds = (cells.len() as f64 * meta.cell_area() * config.seed_density - 1e-9).ceil().max(0.0) as usize;
    let mut candidates: Vec<(f64, usize)> = cells
        .iter()
        .copied()
        .filter(|&i| {
            !excluded.get(i).copied().unwrap_or(false) && !config.masked(meta, i) && raw_next.at(i) > config.p_member
        })
        .map(|i| {
            let s = next.cell_at(i);
            ((s.v_e - match_v.0).hypot(s.v_n - match_v.1), i)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seeds: Vec<usize> = candidates.iter().take(n_seeds).map(|c| c.1).collect();
    seeds.sort_unstable();
    Prediction { cells, seeds }
}

/// Moves the silhouette by its mean velocity over `dt` seconds.
pub fn predict_silhouette(
    silhouette: &Silhouette,
    stats: &ClusterStats,
    dt: f64,
    next: &DogmaFrame,
    raw_next: &ScalarField,
    excluded: &[bool],
    config: &LabelerConfig,
) -> Prediction {
    predict_shifted(silhouette, stats.mean_v, stats.mean_v, dt, next, raw_next, excluded, config)
}
