//! Little-endian float32 matrix files with a 4-byte magic and two u32 header
//! fields, plus the JSON row index used by per-sentence files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn write_f32_matrix(
    path: impl AsRef<Path>,
    magic: &[u8; 4],
    header: [u32; 2],
    values: impl IntoIterator<Item = f32>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_f32_matrix`]; the payload must hold
/// exactly `header[0] * header[1]` values.
pub fn read_f32_matrix(path: impl AsRef<Path>, magic: &[u8; 4], kind: &'static str) -> Result<([u32; 2], Vec<f32>)> {
    let bytes = fs::read(path)?;
    parse_f32_matrix(&bytes, magic, kind)
}

pub fn parse_f32_matrix(bytes: &[u8], magic: &[u8; 4], kind: &'static str) -> Result<([u32; 2], Vec<f32>)> {
    if bytes.len() < 12 {
        return Err(Error::format(kind, "file shorter than its header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            kind,
            format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..4])
            ),
        ));
    }
    let a = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let b = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = a as usize * b as usize * 4;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(Error::format(
            kind,
            format!("header {a}x{b} needs {expected} payload bytes, found {}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(([a, b], values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRange {
    pub offset: usize,
    pub count: usize,
}

/// Sentence id → contiguous row range.
pub type RowIndex = BTreeMap<String, RowRange>;

/// `<file>.index.json` next to a row file.
pub fn index_path(path: impl AsRef<Path>) -> PathBuf {
    let mut p = path.as_ref().as_os_str().to_owned();
    p.push(".index.json");
    PathBuf::from(p)
}

pub fn write_index(path: impl AsRef<Path>, index: &RowIndex) -> Result<()> {
    fs::write(index_path(path), serde_json::to_string(index)?)?;
    Ok(())
}

pub fn read_index(path: impl AsRef<Path>) -> Result<RowIndex> {
    Ok(serde_json::from_str(&fs::read_to_string(index_path(path))?)?)
}

/// Checks that ranges tile `[0, rows)` without gaps or overlaps.
pub fn check_index(index: &RowIndex, rows: usize, kind: &'static str) -> Result<()> {
    let mut ranges: Vec<RowRange> = index.values().copied().collect();
    ranges.sort_by_key(|r| r.offset);
    let mut at = 0;
    for r in ranges {
        if r.offset != at {
            return Err(Error::format(kind, format!("index has a gap or overlap at row {at}")));
        }
        at += r.count;
    }
    if at != rows {
        return Err(Error::format(kind, format!("index covers {at} rows, file has {rows}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        write_f32_matrix(&p, b"TEST", [2, 3], [1.0, 2.0, 3.0, 4.0, 5.0, -6.5]).unwrap();
        let (h, v) = read_f32_matrix(&p, b"TEST", "test").unwrap();
        assert_eq!(h, [2, 3]);
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, -6.5]);
        assert_eq!(fs::read(&p).unwrap().len(), 12 + 24);
    }

    #[test]
    fn wrong_magic_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        write_f32_matrix(&p, b"TEST", [2, 2], [0.0; 4]).unwrap();
        assert!(matches!(read_f32_matrix(&p, b"ELSE", "x"), Err(Error::Format { .. })));
        let bytes = fs::read(&p).unwrap();
        assert!(parse_f32_matrix(&bytes[..bytes.len() - 1], b"TEST", "x").is_err());
        assert!(parse_f32_matrix(&bytes[..5], b"TEST", "x").is_err());
    }

    #[test]
    fn index_must_tile_rows() {
        let mut idx = RowIndex::new();
        idx.insert("a".into(), RowRange { offset: 0, count: 2 });
        idx.insert("b".into(), RowRange { offset: 2, count: 3 });
        assert!(check_index(&idx, 5, "x").is_ok());
        assert!(check_index(&idx, 6, "x").is_err());
        idx.insert("c".into(), RowRange { offset: 4, count: 1 });
        assert!(check_index(&idx, 6, "x").is_err());
    }
}
