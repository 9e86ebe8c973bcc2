//! Grayscale PFM (`Pf`, little-endian, rows stored bottom to top) for entropy
//! maps, plus an 8-bit PGM preview scaled to the map maximum.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::entropy::EntropyMap;
use crate::error::{Error, Result};

pub fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Returns `(width, height, row-major values top to bottom)`.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |msg: &str| Error::format(path, msg);
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    // four whitespace-separated header tokens, the last one followed by a single newline
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("only grayscale PFM (Pf) is supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad image size"));
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian PFM is not supported"));
    }
    let n = w.checked_mul(h).ok_or_else(|| bad("image size overflows"))?;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != n * 4 {
        return Err(bad(&format!("expected {} data bytes, found {}", n * 4, body.len())));
    }
    let mut values = vec![0f32; n];
    for (i, c) in body.chunks_exact(4).enumerate() {
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = f32::from_le_bytes(c.try_into().unwrap());
    }
    Ok((w, h, values))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    decode_pfm(&read_bytes(path)?, path)
}

pub fn encode_pgm_preview(map: &EntropyMap) -> Vec<u8> {
    let max = map.max();
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(map.values.iter().map(|&v| if max > 0.0 { (v / max * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 }));
    out
}

/// Writes `path` as PFM and a `.pgm` preview beside it.
pub fn write_entropy_map(path: &Path, map: &EntropyMap) -> Result<()> {
    write_bytes(path, &encode_pfm(map.width, map.height, &map.values))?;
    write_bytes(&path.with_extension("pgm"), &encode_pgm_preview(map))
}
