//! Synthetic DOGMa sequences with ground truth.
//!
//! Objects follow piecewise-linear waypoint paths and face along their motion.
//! A cell center inside an object box is observed only when the ray from the
//! sensor reaches it without crossing another obstacle and after travelling
//! at most `surface_depth` through the object itself, which yields the
//! partial, L-shaped silhouettes of a real scanner. Walls are static and
//! always observed. Free space is observed between the sensor and the first
//! obstacle along each ray. Every random draw is keyed by `(seed, frame, cell)`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Shape};
use crate::grid::{CellState, DogmaFrame, GridMeta};
use crate::io::labels::{FrameLabels, LabelObject};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub e: f64,
    pub n: f64,
    /// Seconds from the first frame.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub class_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub velocity_sigma: f64,
    pub occupancy_beta: (f64, f64),
    pub spurious_border_prob: f64,
    pub appearance_ramp_frames: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            velocity_sigma: 0.2,
            occupancy_beta: (9.0, 1.0),
            spurious_border_prob: 0.05,
            appearance_ramp_frames: 0,
        }
    }
}

impl NoiseConfig {
    /// Deterministic rendering: occupancy 1, exact velocities, no artifacts.
    pub fn off() -> Self {
        NoiseConfig {
            velocity_sigma: 0.0,
            occupancy_beta: (1.0, 0.0),
            spurious_border_prob: 0.0,
            appearance_ramp_frames: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.occupancy_beta;
        let beta_ok = a > 0.0 && b >= 0.0 && a.is_finite() && b.is_finite();
        if !(self.velocity_sigma >= 0.0) || !beta_ok || !(0.0..=1.0).contains(&self.spurious_border_prob) {
            return Err(Error::Config(format!("invalid noise config {self:?}")));
        }
        Ok(())
    }
}

fn default_frame_period() -> f64 {
    0.1
}

fn default_surface_depth() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub meta: GridMeta,
    pub duration_frames: usize,
    #[serde(default = "default_frame_period")]
    pub frame_period: f64,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub static_walls: Vec<OrientedBox>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
    /// How far (m) into an object box the sensor sees.
    #[serde(default = "default_surface_depth")]
    pub surface_depth: f64,
}

impl ScenarioConfig {
    pub fn new(meta: GridMeta, duration_frames: usize) -> Self {
        ScenarioConfig {
            meta,
            duration_frames,
            frame_period: default_frame_period(),
            objects: Vec::new(),
            static_walls: Vec::new(),
            noise: NoiseConfig::default(),
            seed: 0,
            surface_depth: default_surface_depth(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.duration_frames == 0 {
            return Err(Error::Config("duration_frames must be at least 1".into()));
        }
        if !(self.frame_period > 0.0) || !(self.surface_depth > 0.0) {
            return Err(Error::Config("frame_period and surface_depth must be positive".into()));
        }
        self.noise.validate()?;
        for (i, o) in self.objects.iter().enumerate() {
            if !o.shape.is_valid() {
                return Err(Error::Config(format!("object {i}: invalid shape {:?}", o.shape)));
            }
            if o.waypoints.len() < 2 {
                return Err(Error::Config(format!("object {i}: needs at least two waypoints")));
            }
            if o.waypoints.windows(2).any(|w| !(w[1].time > w[0].time)) {
                return Err(Error::Config(format!("object {i}: waypoint times must increase")));
            }
        }
        if let Some(w) = self.static_walls.iter().position(|w| !w.is_valid()) {
            return Err(Error::Config(format!("wall {w} is not a valid box")));
        }
        Ok(())
    }
}

/// Pose of one object at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPose {
    pub bbox: OrientedBox,
    pub v_e: f64,
    pub v_n: f64,
}

impl ObjectSpec {
    /// Pose at time `t`, or `None` outside the waypoint span.
    pub fn pose_at(&self, t: f64) -> Option<ObjectPose> {
        let wp = &self.waypoints;
        let (first, last) = (wp[0].time, wp[wp.len() - 1].time);
        if t < first || t > last {
            return None;
        }
        let seg = wp.windows(2).position(|w| t < w[1].time).unwrap_or(wp.len() - 2);
        let (a, b) = (wp[seg], wp[seg + 1]);
        let span = b.time - a.time;
        let s = (t - a.time) / span;
        let (v_e, v_n) = ((b.e - a.e) / span, (b.n - a.n) / span);
        let heading = self.heading(seg);
        Some(ObjectPose {
            bbox: OrientedBox::from_shape(self.shape, a.e + s * (b.e - a.e), a.n + s * (b.n - a.n), heading),
            v_e,
            v_n,
        })
    }

    /// Direction of segment `seg`, borrowed from the nearest moving segment
    /// when it is stationary.
    fn heading(&self, seg: usize) -> f64 {
        let dir = |i: usize| {
            let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
            let (de, dn) = (b.e - a.e, b.n - a.n);
            (de != 0.0 || dn != 0.0).then(|| dn.atan2(de))
        };
        let n = self.waypoints.len() - 1;
        (0..n)
            .flat_map(|k| [seg.checked_sub(k), Some(seg + k)])
            .flatten()
            .filter(|&i| i < n)
            .find_map(dir)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub id: u64,
    pub bbox: OrientedBox,
    pub v_e: f64,
    pub v_n: f64,
    /// Observed silhouette cells in this frame.
    pub visible_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub frames: Vec<Vec<GroundTruthObject>>,
}

impl GroundTruth {
    pub fn to_labels(&self) -> Vec<FrameLabels> {
        self.frames
            .iter()
            .enumerate()
            .map(|(t, objs)| FrameLabels {
                t: t as u64,
                objects: objs
                    .iter()
                    .map(|o| LabelObject {
                        id: o.id,
                        e: o.bbox.center_e,
                        n: o.bbox.center_n,
                        w: o.bbox.width,
                        l: o.bbox.length,
                        phi: o.bbox.orientation,
                        ve: o.v_e,
                        vn: o.v_n,
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn boxes(&self, t: usize) -> Vec<OrientedBox> {
        self.frames[t].iter().map(|o| o.bbox).collect()
    }
}

/// Entry parameter in `[0, 1]` of the segment `p0 → p1` into `bx`, if the
/// segment meets it.
pub fn segment_entry(p0: (f64, f64), p1: (f64, f64), bx: &OrientedBox) -> Option<f64> {
    let (u0, w0) = bx.to_local(p0.0, p0.1);
    let (u1, w1) = bx.to_local(p1.0, p1.1);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (a, b, half) in [(u0, u1, 0.5 * bx.length), (w0, w1, 0.5 * bx.width)] {
        let d = b - a;
        if d == 0.0 {
            if a.abs() > half {
                return None;
            }
            continue;
        }
        let (t1, t2) = ((-half - a) / d, (half - a) / d);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
        if lo > hi {
            return None;
        }
    }
    Some(lo)
}

/// What occupies a cell center.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Occupant {
    Wall(usize),
    Object(usize),
    Empty,
}

struct Obstacle {
    bbox: OrientedBox,
    reach: f64,
}

impl Obstacle {
    fn new(bbox: OrientedBox) -> Self {
        Obstacle {
            reach: bbox.circumradius(),
            bbox,
        }
    }

    /// Whether the segment from `s` to `p` passes through this obstacle
    /// before reaching `p`.
    fn blocks(&self, s: (f64, f64), p: (f64, f64)) -> bool {
        let (dx, dy) = (p.0 - s.0, p.1 - s.1);
        let len2 = dx * dx + dy * dy;
        let (cx, cy) = (self.bbox.center_e - s.0, self.bbox.center_n - s.1);
        let t = if len2 > 0.0 { ((cx * dx + cy * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let (qx, qy) = (cx - t * dx, cy - t * dy);
        if qx * qx + qy * qy > self.reach * self.reach {
            return false;
        }
        segment_entry(s, p, &self.bbox).is_some_and(|t| t < 1.0)
    }
}

struct Scene<'a> {
    config: &'a ScenarioConfig,
    walls: Vec<Obstacle>,
    objects: Vec<(usize, ObjectPose, Obstacle)>,
    sensor: (f64, f64),
}

impl Scene<'_> {
    fn occupant(&self, e: f64, n: f64) -> Occupant {
        let slack = 1e-9 * self.config.meta.cell_size;
        if let Some(i) = self.walls.iter().position(|w| w.bbox.contains(e, n, slack)) {
            return Occupant::Wall(i);
        }
        match self.objects.iter().position(|(_, _, o)| o.bbox.contains(e, n, slack)) {
            Some(k) => Occupant::Object(k),
            None => Occupant::Empty,
        }
    }

    fn blocked(&self, p: (f64, f64), skip_object: Option<usize>) -> bool {
        self.walls.iter().any(|w| w.blocks(self.sensor, p))
            || self
                .objects
                .iter()
                .enumerate()
                .any(|(k, (_, _, o))| Some(k) != skip_object && o.blocks(self.sensor, p))
    }

    /// Free space is seen only along rays that end on an obstacle beyond `p`.
    fn observed_free(&self, p: (f64, f64)) -> bool {
        let (dx, dy) = (p.0 - self.sensor.0, p.1 - self.sensor.1);
        let dist = dx.hypot(dy);
        if dist == 0.0 {
            return false;
        }
        let m = &self.config.meta;
        let reach = 2.0 * m.cell_size * (m.width_cells + m.height_cells) as f64 + dist;
        let far = (self.sensor.0 + dx / dist * reach, self.sensor.1 + dy / dist * reach);
        let nearest = self
            .walls
            .iter()
            .chain(self.objects.iter().map(|(_, _, o)| o))
            .filter_map(|o| segment_entry(self.sensor, far, &o.bbox))
            .fold(f64::INFINITY, f64::min);
        nearest.is_finite() && nearest * reach > dist
    }

    /// Observed when the ray reaches `p` through at most `surface_depth` of
    /// the object's own box.
    fn object_cell_visible(&self, k: usize, p: (f64, f64)) -> bool {
        if self.blocked(p, Some(k)) {
            return false;
        }
        let own = &self.objects[k].2.bbox;
        let depth = match segment_entry(self.sensor, p, own) {
            Some(t) => (1.0 - t) * (p.0 - self.sensor.0).hypot(p.1 - self.sensor.1),
            None => 0.0,
        };
        depth <= self.config.surface_depth
    }

    fn is_wall_border(&self, wall: usize, col: usize, row: usize) -> bool {
        let m = &self.config.meta;
        let (c, r) = (col as i64, row as i64);
        [(c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)].iter().any(|&(nc, nr)| {
            if nc < 0 || nr < 0 || nc >= m.width_cells as i64 || nr >= m.height_cells as i64 {
                return true;
            }
            let (e, n) = m.cell_center(nc as usize, nr as usize);
            self.occupant(e, n) != Occupant::Wall(wall)
        })
    }
}

fn render_frame(config: &ScenarioConfig, t: usize) -> Result<(DogmaFrame, Vec<GroundTruthObject>)> {
    let time = t as f64 * config.frame_period;
    let mut meta = config.meta.clone();
    meta.timestamp_us = (time * 1e6).round() as u64;
    let scene = Scene {
        config,
        walls: config.static_walls.iter().map(|w| Obstacle::new(*w)).collect(),
        objects: config
            .objects
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.pose_at(time).map(|p| (i, p, Obstacle::new(p.bbox))))
            .collect(),
        sensor: (meta.sensor_origin_e, meta.sensor_origin_n),
    };
    let noise = &config.noise;
    let sigma = noise.velocity_sigma;
    let var = sigma * sigma;
    let velocity_noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (alpha, beta) = noise.occupancy_beta;
    let occupancy = if beta > 0.0 {
        Some(Beta::new(alpha, beta).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let ramp = |obj: usize| -> f64 {
        if noise.appearance_ramp_frames == 0 {
            return 1.0;
        }
        let start = config.objects[obj].waypoints[0].time;
        let age = ((time - start) / config.frame_period + 1e-9).floor() + 1.0;
        (age / noise.appearance_ramp_frames as f64).min(1.0)
    };

    let mut frame = DogmaFrame::unknown(meta.clone());
    let mut visible = vec![0usize; scene.objects.len()];
    for row in 0..meta.height_cells {
        for col in 0..meta.width_cells {
            let p = meta.cell_center(col, row);
            let index = meta.index(col, row) as u64;
            let mut rng = rng_for(config.seed, &[t as u64, index]);
            let state = match scene.occupant(p.0, p.1) {
                Occupant::Wall(w) => {
                    let m_occ = rng.random_range(0.9..=1.0);
                    let mut s = CellState {
                        m_occ,
                        var_ve: var,
                        var_vn: var,
                        ..Default::default()
                    };
                    if noise.spurious_border_prob > 0.0
                        && rng.random_bool(noise.spurious_border_prob)
                        && scene.is_wall_border(w, col, row)
                    {
                        let speed: f64 = rng.random_range(0.5..=2.0);
                        let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                        s.v_e = speed * dir.cos();
                        s.v_n = speed * dir.sin();
                        s.var_ve = var + speed * speed;
                        s.var_vn = var + speed * speed;
                    }
                    s
                }
                Occupant::Object(k) if scene.object_cell_visible(k, p) => {
                    visible[k] += 1;
                    let (obj, pose, _) = &scene.objects[k];
                    let draw = occupancy.as_ref().map_or(1.0, |d| d.sample(&mut rng));
                    let (ne, nn) = if sigma > 0.0 {
                        (velocity_noise.sample(&mut rng), velocity_noise.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    CellState {
                        m_occ: draw * ramp(*obj),
                        m_free: 0.0,
                        v_e: pose.v_e + ne,
                        v_n: pose.v_n + nn,
                        var_ve: var,
                        var_vn: var,
                        cov_ven: 0.0,
                    }
                }
                Occupant::Object(_) => CellState::default(),
                Occupant::Empty if scene.observed_free(p) => CellState {
                    m_free: rng.random_range(0.8..=1.0),
                    var_ve: var,
                    var_vn: var,
                    ..Default::default()
                },
                Occupant::Empty => CellState::default(),
            };
            frame.set_cell(col, row, &state);
        }
    }
    frame.validate()?;
    let truth = scene
        .objects
        .iter()
        .zip(visible)
        .map(|((i, pose, _), visible_cells)| GroundTruthObject {
            id: *i as u64 + 1,
            bbox: pose.bbox,
            v_e: pose.v_e,
            v_n: pose.v_n,
            visible_cells,
        })
        .collect();
    Ok((frame, truth))
}

/// Renders every frame of the scenario. Frames are rendered on all available
/// cores; the output does not depend on the schedule.
pub fn simulate(config: &ScenarioConfig) -> Result<(Vec<DogmaFrame>, GroundTruth)> {
    config.validate()?;
    let n = config.duration_frames;
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
    let mut slots: Vec<Option<Result<(DogmaFrame, Vec<GroundTruthObject>)>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = n.div_ceil(workers);
        for (w, out) in slots.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = Some(render_frame(config, w * chunk + k));
                }
            });
        }
    });
    let mut frames = Vec::with_capacity(n);
    let mut truth = GroundTruth::default();
    for slot in slots {
        let (f, g) = slot.expect("every frame rendered")?;
        frames.push(f);
        truth.frames.push(g);
    }
    Ok((frames, truth))
}
