//! DOGMa data model: grid geometry, per-cell evidential masses and velocity
//! statistics, the occupancy probability and its smoothed derivatives.
//!
//! Storage is row-major with east varying fastest; row 0 is the southmost
//! row. Every 2D array in this module is shaped `(height, width)` and indexed
//! `[row, col]`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gradient floor for inflection detection, in 1/cell.
pub const DEFAULT_GRADIENT_FLOOR: f64 = 0.01;

/// Second derivatives smaller than this are treated as zero when looking for
/// sign changes.
const CURVATURE_EPS: f64 = 1e-9;

const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub width_cells: usize,
    pub height_cells: usize,
    pub cell_size: f64,
    pub origin_e: f64,
    pub origin_n: f64,
    #[serde(default)]
    pub timestamp_us: u64,
    #[serde(default)]
    pub sensor_origin_e: f64,
    #[serde(default)]
    pub sensor_origin_n: f64,
}

impl GridMeta {
    /// A grid whose south-west corner is at the origin with the sensor in the
    /// middle.
    pub fn new(width_cells: usize, height_cells: usize, cell_size: f64) -> Self {
        GridMeta {
            width_cells,
            height_cells,
            cell_size,
            origin_e: 0.0,
            origin_n: 0.0,
            timestamp_us: 0,
            sensor_origin_e: 0.5 * width_cells as f64 * cell_size,
            sensor_origin_n: 0.5 * height_cells as f64 * cell_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_cells == 0 || self.height_cells == 0 {
            return Err(Error::Config(format!(
                "grid must be non-empty, got {}x{}",
                self.width_cells, self.height_cells
            )));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::Config(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        Ok(())
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.width_cells * self.height_cells
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height_cells, self.width_cells)
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width_cells + col
    }

    #[inline]
    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.width_cells, index / self.width_cells)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// World coordinates of the center of cell `(col, row)`.
    #[inline]
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_e + (col as f64 + 0.5) * self.cell_size,
            self.origin_n + (row as f64 + 0.5) * self.cell_size,
        )
    }

    #[inline]
    pub fn index_center(&self, index: usize) -> (f64, f64) {
        let (c, r) = self.col_row(index);
        self.cell_center(c, r)
    }

    /// Continuous cell coordinates of a world point (cell centers sit at
    /// half-integers).
    #[inline]
    pub fn to_cell_coords(&self, e: f64, n: f64) -> (f64, f64) {
        ((e - self.origin_e) / self.cell_size, (n - self.origin_n) / self.cell_size)
    }

    /// The cell containing a world point, if inside the grid.
    pub fn cell_of(&self, e: f64, n: f64) -> Option<(usize, usize)> {
        let (x, y) = self.to_cell_coords(e, n);
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        (c < self.width_cells && r < self.height_cells).then_some((c, r))
    }

    /// Same raster geometry; timestamps may differ.
    pub fn same_grid(&self, other: &GridMeta) -> bool {
        self.width_cells == other.width_cells
            && self.height_cells == other.height_cells
            && self.cell_size == other.cell_size
            && self.origin_e == other.origin_e
            && self.origin_n == other.origin_n
    }

    /// Indices of the (up to) 8 neighbors of a cell.
    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.col_row(index);
        let (w, h) = (self.width_cells as isize, self.height_cells as isize);
        const OFFSETS: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        OFFSETS.iter().filter_map(move |&(dc, dr)| {
            let (nc, nr) = (c as isize + dc, r as isize + dr);
            (nc >= 0 && nr >= 0 && nc < w && nr < h)
                .then(|| self.index(nc as usize, nr as usize))
        })
    }
}

/// The seven DOGMa channels in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    MassOccupied = 0,
    MassFree = 1,
    VelocityE = 2,
    VelocityN = 3,
    VarianceE = 4,
    VarianceN = 5,
    CovarianceEN = 6,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::MassOccupied,
        Channel::MassFree,
        Channel::VelocityE,
        Channel::VelocityN,
        Channel::VarianceE,
        Channel::VarianceN,
        Channel::CovarianceEN,
    ];
}

/// One cell of a frame, widened to `f64`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellState {
    pub m_occ: f64,
    pub m_free: f64,
    pub v_e: f64,
    pub v_n: f64,
    pub var_ve: f64,
    pub var_vn: f64,
    pub cov_ven: f64,
}

impl CellState {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let tol = MASS_TOLERANCE;
        let fields = [
            self.m_occ,
            self.m_free,
            self.v_e,
            self.v_n,
            self.var_ve,
            self.var_vn,
            self.cov_ven,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite channel value".into());
        }
        if !(-tol..=1.0 + tol).contains(&self.m_occ) || !(-tol..=1.0 + tol).contains(&self.m_free) {
            return Err(format!("masses out of [0,1]: m_occ={}, m_free={}", self.m_occ, self.m_free));
        }
        if self.m_occ + self.m_free > 1.0 + tol {
            return Err(format!(
                "mass sum {} > 1 (m_occ={}, m_free={})",
                self.m_occ + self.m_free,
                self.m_occ,
                self.m_free
            ));
        }
        if self.var_ve < 0.0 || self.var_vn < 0.0 {
            return Err(format!("negative velocity variance ({}, {})", self.var_ve, self.var_vn));
        }
        let det = self.var_ve * self.var_vn - self.cov_ven * self.cov_ven;
        if det < -tol * (1.0 + self.var_ve * self.var_vn) {
            return Err(format!("velocity covariance not positive-semidefinite (det={det})"));
        }
        Ok(())
    }

    #[inline]
    pub fn occupancy_probability(&self) -> f64 {
        occupancy_probability_of(self.m_occ, self.m_free)
    }

    #[inline]
    pub fn speed(&self) -> f64 {
        self.v_e.hypot(self.v_n)
    }
}

#[inline]
pub fn occupancy_probability_of(m_occ: f64, m_free: f64) -> f64 {
    0.5 * m_occ + 0.5 * (1.0 - m_free)
}

/// One time step of the grid. Channels are kept in `f32`, the on-disk
/// precision, so a store/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DogmaFrame {
    pub meta: GridMeta,
    planes: [Array2<f32>; 7],
}

impl DogmaFrame {
    /// All cells unknown (`m_occ = m_free = 0`), at rest.
    pub fn unknown(meta: GridMeta) -> Self {
        let shape = meta.shape();
        DogmaFrame {
            meta,
            planes: std::array::from_fn(|_| Array2::zeros(shape)),
        }
    }

    pub fn from_planes(meta: GridMeta, planes: [Array2<f32>; 7]) -> Result<Self> {
        meta.validate()?;
        for (ch, p) in Channel::ALL.iter().zip(&planes) {
            if p.dim() != meta.shape() {
                return Err(Error::Dimension(format!(
                    "channel {ch:?} is {:?}, grid is {:?}",
                    p.dim(),
                    meta.shape()
                )));
            }
        }
        Ok(DogmaFrame { meta, planes })
    }

    #[inline]
    pub fn plane(&self, channel: Channel) -> &Array2<f32> {
        &self.planes[channel as usize]
    }

    #[inline]
    pub fn plane_mut(&mut self, channel: Channel) -> &mut Array2<f32> {
        &mut self.planes[channel as usize]
    }

    pub fn planes(&self) -> &[Array2<f32>; 7] {
        &self.planes
    }

    pub fn cell(&self, col: usize, row: usize) -> CellState {
        let g = |c: Channel| self.planes[c as usize][[row, col]] as f64;
        CellState {
            m_occ: g(Channel::MassOccupied),
            m_free: g(Channel::MassFree),
            v_e: g(Channel::VelocityE),
            v_n: g(Channel::VelocityN),
            var_ve: g(Channel::VarianceE),
            var_vn: g(Channel::VarianceN),
            cov_ven: g(Channel::CovarianceEN),
        }
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> CellState {
        let (c, r) = self.meta.col_row(index);
        self.cell(c, r)
    }

    pub fn set_cell(&mut self, col: usize, row: usize, s: &CellState) {
        let values = [s.m_occ, s.m_free, s.v_e, s.v_n, s.var_ve, s.var_vn, s.cov_ven];
        for (plane, v) in self.planes.iter_mut().zip(values) {
            plane[[row, col]] = v as f32;
        }
    }

    /// Checks every cell against the mass and covariance invariants.
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        for row in 0..self.meta.height_cells {
            for col in 0..self.meta.width_cells {
                self.cell(col, row)
                    .validate()
                    .map_err(|e| Error::Invariant(format!("cell (col {col}, row {row}): {e}")))?;
            }
        }
        Ok(())
    }
}

/// A real-valued raster over a grid, e.g. P_O or one of its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub meta: GridMeta,
    pub values: Array2<f64>,
}

impl ScalarField {
    pub fn new(meta: GridMeta, values: Array2<f64>) -> Result<Self> {
        if values.dim() != meta.shape() {
            return Err(Error::Dimension(format!(
                "field is {:?}, grid is {:?}",
                values.dim(),
                meta.shape()
            )));
        }
        Ok(ScalarField { meta, values })
    }

    pub fn zeros(meta: GridMeta) -> Self {
        let values = Array2::zeros(meta.shape());
        ScalarField { meta, values }
    }

    pub fn from_fn(meta: GridMeta, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = Array2::from_shape_fn(meta.shape(), |(r, c)| f(c, r));
        ScalarField { meta, values }
    }

    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        let (c, r) = self.meta.col_row(index);
        self.values[[r, c]]
    }
}

/// P_O = 0.5·M_O + 0.5·(1 − M_F), cell by cell.
pub fn occupancy_probability(frame: &DogmaFrame) -> ScalarField {
    let occ = frame.plane(Channel::MassOccupied);
    let free = frame.plane(Channel::MassFree);
    let mut values = Array2::zeros(frame.meta.shape());
    ndarray::Zip::from(&mut values)
        .and(occ)
        .and(free)
        .for_each(|p, &o, &f| *p = occupancy_probability_of(o as f64, f as f64));
    ScalarField {
        meta: frame.meta.clone(),
        values,
    }
}

/// Sampled Gaussian truncated at 3σ and renormalized; `sigma == 0` is the
/// identity kernel.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis(values: &Array2<f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    if kernel.len() == 1 {
        return values.clone();
    }
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(values.dim());
    for (src, mut dst) in values.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len();
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &w) in kernel.iter().enumerate() {
                acc += w * src[reflect(i as isize + j as isize - radius, n)];
            }
            dst[i] = acc;
        }
    }
    out
}

/// Separable Gaussian smoothing over (E, N, t) with reflective boundaries.
pub fn gaussian_smooth(
    fields: &[ScalarField],
    sigma_spatial: f64,
    sigma_temporal: f64,
) -> Result<Vec<ScalarField>> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Empty("gaussian_smooth needs at least one field".into()))?;
    if let Some(bad) = fields.iter().find(|f| !f.meta.same_grid(&first.meta)) {
        return Err(Error::Dimension(format!(
            "field grid {}x{} differs from {}x{}",
            bad.meta.width_cells, bad.meta.height_cells, first.meta.width_cells, first.meta.height_cells
        )));
    }
    if sigma_spatial < 0.0 || sigma_temporal < 0.0 {
        return Err(Error::Config("smoothing sigmas must be >= 0".into()));
    }

    let ks = gaussian_kernel(sigma_spatial);
    let spatial: Vec<Array2<f64>> = fields
        .iter()
        .map(|f| {
            let e = convolve_axis(&f.values, &ks, Axis(1));
            convolve_axis(&e, &ks, Axis(0))
        })
        .collect();

    let kt = gaussian_kernel(sigma_temporal);
    let radius = (kt.len() / 2) as isize;
    let n = spatial.len();
    Ok((0..n)
        .map(|t| {
            let values = if kt.len() == 1 {
                spatial[t].clone()
            } else {
                let mut acc = Array2::zeros(first.meta.shape());
                for (j, &w) in kt.iter().enumerate() {
                    acc.scaled_add(w, &spatial[reflect(t as isize + j as isize - radius, n)]);
                }
                acc
            };
            ScalarField {
                meta: fields[t].meta.clone(),
                values,
            }
        })
        .collect())
}

/// First and second spatial derivatives of a field plus the inflection mask.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub grad_e: ScalarField,
    pub grad_n: ScalarField,
    pub second_e: ScalarField,
    pub second_n: ScalarField,
    pub inflection: Array2<bool>,
}

impl Derivatives {
    #[inline]
    pub fn is_inflection(&self, index: usize) -> bool {
        let (c, r) = self.grad_e.meta.col_row(index);
        self.inflection[[r, c]]
    }
}

pub fn spatial_derivatives(field: &ScalarField) -> Result<Derivatives> {
    spatial_derivatives_with_floor(field, DEFAULT_GRADIENT_FLOOR)
}

/// Central differences (per cell) with reflective borders.
///
/// A cell is an inflection cell when its gradient magnitude is at least
/// `gradient_floor` and the second derivative taken along the local gradient
/// direction changes sign towards a 4-neighbor, or is zero between two
/// opposite neighbors of opposite sign.
pub fn spatial_derivatives_with_floor(field: &ScalarField, gradient_floor: f64) -> Result<Derivatives> {
    let (h, w) = field.values.dim();
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!("derivatives need at least 3x3 cells, got {w}x{h}")));
    }
    let f = &field.values;
    let at = |r: isize, c: isize| f[[reflect(r, h), reflect(c, w)]];

    let mut ge = Array2::zeros((h, w));
    let mut gn = Array2::zeros((h, w));
    let mut see = Array2::zeros((h, w));
    let mut snn = Array2::zeros((h, w));
    let mut directional = Array2::from_elem((h, w), f64::NAN);

    for r in 0..h as isize {
        for c in 0..w as isize {
            let center = at(r, c);
            let dx = 0.5 * (at(r, c + 1) - at(r, c - 1));
            let dy = 0.5 * (at(r + 1, c) - at(r - 1, c));
            let dxx = at(r, c + 1) - 2.0 * center + at(r, c - 1);
            let dyy = at(r + 1, c) - 2.0 * center + at(r - 1, c);
            let idx = [r as usize, c as usize];
            ge[idx] = dx;
            gn[idx] = dy;
            see[idx] = dxx;
            snn[idx] = dyy;

            let g2 = dx * dx + dy * dy;
            if g2.sqrt() >= gradient_floor && g2 > 0.0 {
                let dxy = 0.25
                    * (at(r + 1, c + 1) - at(r - 1, c + 1) - at(r + 1, c - 1) + at(r - 1, c - 1));
                directional[idx] = (dx * dx * dxx + 2.0 * dx * dy * dxy + dy * dy * dyy) / g2;
            }
        }
    }

    let sign = |v: f64| -> Option<i8> {
        if v.is_nan() {
            None
        } else if v > CURVATURE_EPS {
            Some(1)
        } else if v < -CURVATURE_EPS {
            Some(-1)
        } else {
            Some(0)
        }
    };
    let mut inflection = Array2::from_elem((h, w), false);
    for r in 0..h {
        for c in 0..w {
            let Some(s) = sign(directional[[r, c]]) else { continue };
            let nb = |dr: isize, dc: isize| -> Option<i8> {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    None
                } else {
                    sign(directional[[nr as usize, nc as usize]])
                }
            };
            let flips = |a: Option<i8>, b: Option<i8>| matches!((a, b), (Some(x), Some(y)) if x * y < 0);
            let marked = if s != 0 {
                [(0, 1), (0, -1), (1, 0), (-1, 0)]
                    .iter()
                    .any(|&(dr, dc)| flips(Some(s), nb(dr, dc)))
            } else {
                flips(nb(0, -1), nb(0, 1)) || flips(nb(-1, 0), nb(1, 0))
            };
            inflection[[r, c]] = marked;
        }
    }

    let wrap = |values| ScalarField {
        meta: field.meta.clone(),
        values,
    };
    Ok(Derivatives {
        grad_e: wrap(ge),
        grad_n: wrap(gn),
        second_e: wrap(see),
        second_n: wrap(snn),
        inflection,
    })
}
