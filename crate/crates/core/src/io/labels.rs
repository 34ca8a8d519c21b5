//! Label and detection JSON-lines.
//!
//! Labels: one frame per line,
//! `{"t": int, "objects": [{"id","e","n","w","l","phi","ve","vn"}]}`.
//! Detections: `{"t": int, "detections": [{"e","n","w","l","phi","score"}]}`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelObject {
    pub id: u64,
    pub e: f64,
    pub n: f64,
    pub w: f64,
    pub l: f64,
    pub phi: f64,
    pub ve: f64,
    pub vn: f64,
}

impl LabelObject {
    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(self.e, self.n, self.w, self.l, self.phi)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.e, self.n, self.w, self.l, self.phi, self.ve, self.vn];
        if vals.iter().any(|v| !v.is_finite()) || !(self.w > 0.0) || !(self.l > 0.0) {
            return Err(Error::Invariant(format!("invalid label object {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub t: u64,
    pub objects: Vec<LabelObject>,
}

impl FrameLabels {
    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.objects.iter().map(LabelObject::bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub e: f64,
    pub n: f64,
    pub w: f64,
    pub l: f64,
    pub phi: f64,
    pub score: f64,
}

impl DetectionRecord {
    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(self.e, self.n, self.w, self.l, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub t: u64,
    pub detections: Vec<DetectionRecord>,
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_labels(path: &Path, frames: &[FrameLabels]) -> Result<()> {
    write_lines(path, frames)
}

pub fn read_labels(path: &Path) -> Result<Vec<FrameLabels>> {
    let frames: Vec<FrameLabels> = read_lines(path)?;
    for f in &frames {
        for o in &f.objects {
            o.validate()?;
        }
    }
    Ok(frames)
}

pub fn write_detections(path: &Path, frames: &[FrameDetections]) -> Result<()> {
    write_lines(path, frames)
}

pub fn read_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    read_lines(path)
}
