//! Binary field checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic "KNRF" | u32 version | u32 l_pos | u32 l_dir | u32 n_layers
//! n_layers × (u32 inputs, u32 outputs) | f32 × n_params
//! ```

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams};
use crate::real::Real;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KNRF";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(params: &FieldParams<T>) -> Vec<u8> {
    let cfg = params.config();
    let sizes = cfg.layer_sizes();
    let mut out = Vec::with_capacity(20 + 8 * sizes.len() + 4 * params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, cfg.l_pos as u32, cfg.l_dir as u32, sizes.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (i, o) in sizes {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
    for v in &params.data {
        out.extend_from_slice(&v.to_f32_le());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<FieldParams<f32>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a field checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let (l_pos, l_dir, n_layers) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if n_layers > 1024 {
        return Err(Error::format(path, format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        sizes.push((r.u32()? as usize, r.u32()? as usize));
    }
    let cfg = FieldConfig::from_layer_sizes(&sizes, l_pos, l_dir).map_err(|e| Error::format(path, e.to_string()))?;
    let n = cfg.n_params();
    let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::format(path, "parameter count overflows"))?)?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if r.pos != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    FieldParams::from_data(cfg, data)
}

/// Parameters are stored as `f32` whatever the in-memory precision.
pub fn write_checkpoint<T: Real>(path: &Path, params: &FieldParams<T>) -> Result<()> {
    write_bytes(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<FieldParams<f32>> {
    decode_checkpoint(&read_bytes(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FieldConfig {
        FieldConfig { l_pos: 0, l_dir: 0, trunk_depth: 1, trunk_width: 1, head_width: 1 }
    }

    /// Hand-assembled bytes for the smallest field with parameters 0.5, -1, 2, ...
    #[test]
    fn golden_bytes() {
        let cfg = tiny();
        let n = cfg.n_params();
        let data: Vec<f32> = (0..n).map(|i| [0.5, -1.0, 2.0][i % 3]).collect();
        let p = FieldParams::from_data(cfg, data).unwrap();
        let bytes = encode_checkpoint(&p);
        let mut expected = b"KNRF".to_vec();
        for v in [1u32, 0, 0, 4, 3, 1, 1, 2, 4, 1, 1, 3] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..n {
            expected.extend_from_slice(&[[0x00, 0x00, 0x00, 0x3f], [0x00, 0x00, 0x80, 0xbf], [0x00, 0x00, 0x00, 0x40]][i % 3]);
        }
        assert_eq!(n, 4 + 4 + 5 + 6);
        assert_eq!(bytes, expected);
        assert_eq!(decode_checkpoint(&bytes, Path::new("mem")).unwrap(), p);
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ckpt");
        let p = FieldParams::<f32>::init(FieldConfig { l_pos: 3, l_dir: 2, trunk_depth: 2, trunk_width: 12, head_width: 7 }, 4).unwrap();
        write_checkpoint(&path, &p).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.config(), p.config());
    }

    #[test]
    fn corrupt_files_are_errors() {
        let p = FieldParams::<f32>::init(tiny(), 1).unwrap();
        let bytes = encode_checkpoint(&p);
        let path = Path::new("mem");
        for cut in [0, 3, 10, 30, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut], path), Err(Error::Format { .. })));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad, path).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_checkpoint(&bad, path).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint(&long, path).is_err());
    }
}
