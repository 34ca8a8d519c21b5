//! `DGF1` frame files.
//!
//! Layout: magic `DGF1`, u32 version (1), u32 W, u32 H, f32 cell size (m),
//! f64 origin E/N, f64 sensor origin E/N, u64 timestamp (µs), u32 channel
//! count (7), then seven `W·H` f32 planes in channel order, row-major with
//! east fastest and row 0 southmost.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::bytes::{put_f32s, widen_decimal, Reader};
use crate::error::{Error, Result};
use crate::grid::{DogmaFrame, GridMeta};

pub const MAGIC: [u8; 4] = *b"DGF1";
pub const VERSION: u32 = 1;
const N_CHANNELS: u32 = 7;

pub fn encode_frame(frame: &DogmaFrame) -> Vec<u8> {
    let m = &frame.meta;
    let mut out = Vec::with_capacity(64 + 7 * 4 * m.n_cells());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.width_cells as u32).to_le_bytes());
    out.extend_from_slice(&(m.height_cells as u32).to_le_bytes());
    out.extend_from_slice(&(m.cell_size as f32).to_le_bytes());
    for v in [m.origin_e, m.origin_n, m.sensor_origin_e, m.sensor_origin_n] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&m.timestamp_us.to_le_bytes());
    out.extend_from_slice(&N_CHANNELS.to_le_bytes());
    for plane in frame.planes() {
        put_f32s(&mut out, plane.iter());
    }
    out
}

pub fn decode_frame(buf: &[u8]) -> Result<DogmaFrame> {
    let mut r = Reader::new(buf, "DGF1 frame");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: "DGF1 frame",
            expected: VERSION,
            found: version,
        });
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let cell_size = widen_decimal(r.f32()?);
    let origin_e = r.f64()?;
    let origin_n = r.f64()?;
    let sensor_origin_e = r.f64()?;
    let sensor_origin_n = r.f64()?;
    let timestamp_us = r.u64()?;
    let channels = r.u32()?;
    if channels != N_CHANNELS {
        return Err(Error::Malformed(format!("DGF1 frame has {channels} channels, expected 7")));
    }
    let meta = GridMeta {
        width_cells: width,
        height_cells: height,
        cell_size,
        origin_e,
        origin_n,
        timestamp_us,
        sensor_origin_e,
        sensor_origin_n,
    };
    meta.validate().map_err(|e| Error::Invariant(e.to_string()))?;
    let n = width * height;
    let mut planes = Vec::with_capacity(7);
    for _ in 0..7 {
        let data = r.f32_plane(n)?;
        planes.push(Array2::from_shape_vec((height, width), data).expect("plane length checked"));
    }
    r.finish()?;
    let planes: [Array2<f32>; 7] = planes.try_into().expect("seven planes");
    let frame = DogmaFrame::from_planes(meta, planes)?;
    frame.validate()?;
    Ok(frame)
}

pub fn store_frame(path: &Path, frame: &DogmaFrame) -> Result<()> {
    frame.validate()?;
    std::fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

pub fn load_frame(path: &Path) -> Result<DogmaFrame> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&buf)
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:06}.dgf")
}

/// `.dgf` files in lexicographic (= time) order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "dgf") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_frames_dir(dir: &Path) -> Result<Vec<DogmaFrame>> {
    let files = list_frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!("no .dgf frames in {}", dir.display())));
    }
    files.iter().map(|p| load_frame(p)).collect()
}

pub fn store_frames_dir(dir: &Path, frames: &[DogmaFrame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, f) in frames.iter().enumerate() {
        store_frame(&dir.join(frame_file_name(t)), f)?;
    }
    Ok(())
}
