//! `DGT1` target/prediction tensors and `DGA1` max-IoU maps.
//!
//! `DGT1`: magic, u32 version (1), u32 W, H, C_s, C_φ, then f32 arrays
//! `y_iou` (C_s·C_φ channels, channel `s·C_φ + k`), `y_dw` (C_s), `y_dl`
//! (C_s), `y_dphi` (C_φ); each channel row-major, east fastest.
//!
//! `DGA1`: magic, u32 version (1), u32 W, H, then one f32 plane.
//!
//! Neither file carries the grid placement or anchor shapes; those come from
//! the grid sidecar and the anchor-set file.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::bytes::{put_f32s, Reader};
use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::grid::GridMeta;
use crate::scalar::Real;
use crate::targets::{MaxIoUMap, TargetTensors};

pub const TENSOR_MAGIC: [u8; 4] = *b"DGT1";
pub const A_MAP_MAGIC: [u8; 4] = *b"DGA1";
pub const VERSION: u32 = 1;

/// The four arrays of a `DGT1` file without grid or anchor context.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensors {
    pub width: usize,
    pub height: usize,
    pub c_shapes: usize,
    pub c_orientations: usize,
    pub y_iou: Array3<f32>,
    pub y_dw: Array3<f32>,
    pub y_dl: Array3<f32>,
    pub y_dphi: Array3<f32>,
}

impl RawTensors {
    /// Attaches grid and anchors, checking that the layouts agree.
    pub fn attach<T: Real>(self, meta: &GridMeta, anchor_set: &AnchorSet<T>) -> Result<TargetTensors<T>> {
        if (self.width, self.height) != (meta.width_cells, meta.height_cells) {
            return Err(Error::Dimension(format!(
                "tensor grid {}x{} vs {}x{}",
                self.width, self.height, meta.width_cells, meta.height_cells
            )));
        }
        if (self.c_shapes, self.c_orientations) != (anchor_set.c_shapes(), anchor_set.c_orientations()) {
            return Err(Error::Dimension(format!(
                "tensor has {}x{} anchors, anchor set has {}x{}",
                self.c_shapes,
                self.c_orientations,
                anchor_set.c_shapes(),
                anchor_set.c_orientations()
            )));
        }
        let conv = |a: Array3<f32>| a.mapv(|v| T::of(v as f64));
        let t = TargetTensors {
            meta: meta.clone(),
            anchor_set: anchor_set.clone(),
            y_iou: conv(self.y_iou),
            y_dw: conv(self.y_dw),
            y_dl: conv(self.y_dl),
            y_dphi: conv(self.y_dphi),
        };
        t.check_shapes()?;
        Ok(t)
    }
}

pub fn encode_tensors<T: Real>(t: &TargetTensors<T>) -> Vec<u8> {
    let (cs, co) = (t.anchor_set.c_shapes(), t.anchor_set.c_orientations());
    let mut out = Vec::new();
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [t.meta.width_cells, t.meta.height_cells, cs, co] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for arr in [&t.y_iou, &t.y_dw, &t.y_dl, &t.y_dphi] {
        let f: Vec<f32> = arr.iter().map(|v| v.as_f64() as f32).collect();
        put_f32s(&mut out, f.iter());
    }
    out
}

pub fn decode_tensors(buf: &[u8]) -> Result<RawTensors> {
    let mut r = Reader::new(buf, "DGT1 tensors");
    r.magic(TENSOR_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: "DGT1 tensors",
            expected: VERSION,
            found: version,
        });
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let cs = r.u32()? as usize;
    let co = r.u32()? as usize;
    if w == 0 || h == 0 || cs == 0 || co == 0 {
        return Err(Error::Malformed(format!("DGT1 with empty dimension ({w}, {h}, {cs}, {co})")));
    }
    let mut read = |c: usize| -> Result<Array3<f32>> {
        let data = r.f32_plane(c * h * w)?;
        Ok(Array3::from_shape_vec((c, h, w), data).expect("length checked"))
    };
    let y_iou = read(cs * co)?;
    let y_dw = read(cs)?;
    let y_dl = read(cs)?;
    let y_dphi = read(co)?;
    r.finish()?;
    if y_iou.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant("non-finite IoU value".into()));
    }
    Ok(RawTensors {
        width: w,
        height: h,
        c_shapes: cs,
        c_orientations: co,
        y_iou,
        y_dw,
        y_dl,
        y_dphi,
    })
}

pub fn store_tensors<T: Real>(path: &Path, t: &TargetTensors<T>) -> Result<()> {
    std::fs::write(path, encode_tensors(t)).map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: &Path) -> Result<RawTensors> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&buf)
}

pub fn encode_a_map<T: Real>(a: &MaxIoUMap<T>) -> Vec<u8> {
    let (h, w) = a.a_map.dim();
    let mut out = Vec::new();
    out.extend_from_slice(&A_MAP_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    let f: Vec<f32> = a.a_map.iter().map(|v| v.as_f64() as f32).collect();
    put_f32s(&mut out, f.iter());
    out
}

pub fn decode_a_map(buf: &[u8]) -> Result<MaxIoUMap<f32>> {
    let mut r = Reader::new(buf, "DGA1 map");
    r.magic(A_MAP_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: "DGA1 map",
            expected: VERSION,
            found: version,
        });
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let data = r.f32_plane(w * h)?;
    r.finish()?;
    if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Invariant("A map value outside [0, 1]".into()));
    }
    Ok(MaxIoUMap {
        a_map: Array2::from_shape_vec((h, w), data).expect("length checked"),
    })
}

pub fn store_a_map<T: Real>(path: &Path, a: &MaxIoUMap<T>) -> Result<()> {
    std::fs::write(path, encode_a_map(a)).map_err(|e| Error::io(path, e))
}

pub fn load_a_map(path: &Path) -> Result<MaxIoUMap<f32>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_a_map(&buf)
}
