//! Static masks as 8-bit PGM (`P5` binary or `P2` ASCII).
//!
//! 0 means free, 255 masked; values above 127 count as masked. The first
//! image row is the northmost grid row.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::GridMeta;

fn parse_pgm(buf: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let malformed = |m: &str| Error::Malformed(format!("PGM: {m}"));
    let mut pos = 0;
    let mut token = |buf: &[u8]| -> Result<String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    let magic = token(buf)?;
    let num = |s: String| s.parse::<usize>().map_err(|_| malformed("bad header number"));
    let w = num(token(buf)?)?;
    let h = num(token(buf)?)?;
    let maxval = num(token(buf)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(malformed("only 8-bit PGM is supported"));
    }
    let data = match magic.as_str() {
        "P5" => {
            let start = pos + 1;
            let body = buf.get(start..start + w * h).ok_or_else(|| Error::Truncated {
                what: "PGM mask",
                detail: format!("expected {} pixels", w * h),
            })?;
            body.to_vec()
        }
        "P2" => {
            let mut v = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                v.push(num(token(buf)?)? as u8);
            }
            v
        }
        _ => {
            let mut found = [0u8; 4];
            for (d, s) in found.iter_mut().zip(magic.bytes()) {
                *d = s;
            }
            return Err(Error::BadMagic {
                what: "PGM mask",
                expected: *b"P5\0\0",
                found,
            });
        }
    };
    Ok((w, h, data))
}

/// Reads a mask shaped `(rows, cols)` with row 0 southmost.
pub fn read_pgm_mask(path: &Path, meta: &GridMeta) -> Result<Array2<bool>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, data) = parse_pgm(&buf)?;
    if (w, h) != (meta.width_cells, meta.height_cells) {
        return Err(Error::Dimension(format!(
            "mask is {w}x{h}, grid is {}x{}",
            meta.width_cells, meta.height_cells
        )));
    }
    Ok(Array2::from_shape_fn((h, w), |(r, c)| data[(h - 1 - r) * w + c] > 127))
}

pub fn write_pgm_mask(path: &Path, mask: &Array2<bool>) -> Result<()> {
    let (h, w) = mask.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in (0..h).rev() {
        for c in 0..w {
            out.push(if mask[[r, c]] { 255 } else { 0 });
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
