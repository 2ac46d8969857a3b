//! Columnar binary container shared by reference tables and grid posteriors.
//!
//! Layout (little-endian): 8-byte magic, `u64` row count, `u64` width of
//! block A, `u64` width of block B, then block A and block B as row-major
//! `f64`. A sidecar text file `<path>.meta` holds `key = value` lines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{AbfError, Result};

const MAGIC: &[u8; 8] = b"ABFCOL01";

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub rows: usize,
    pub width_a: usize,
    pub width_b: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub meta: Vec<(String, String)>,
}

impl Container {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| AbfError::Format(format!("sidecar is missing `{key}`")))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    if c.a.len() != c.rows * c.width_a || c.b.len() != c.rows * c.width_b {
        return Err(AbfError::Format("block sizes disagree with the row count".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [c.rows, c.width_a, c.width_b] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for x in c.a.iter().chain(&c.b) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    for (k, v) in &c.meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(AbfError::Format(format!("metadata entry `{k}` cannot be encoded")));
        }
        writeln!(side, "{k} = {v}")?;
    }
    side.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AbfError::Format(format!("{} is not a columnar container", path.display())));
    }
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| AbfError::Format("header value overflows usize".into()))?;
    }
    let [rows, width_a, width_b] = header;
    let total = rows
        .checked_mul(width_a + width_b)
        .ok_or_else(|| AbfError::Format("container too large".into()))?;
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        r.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(AbfError::Format("trailing bytes after the data blocks".into()));
    }
    let b = values.split_off(rows * width_a);
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let mut meta = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| AbfError::Format(format!("sidecar line {}: expected `key = value`", i + 1)))?;
        meta.push((k.to_string(), v.to_string()));
    }
    Ok(Container {
        rows,
        width_a,
        width_b,
        a: values,
        b,
        meta,
    })
}

pub(crate) fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| AbfError::Format(format!("bad number `{x}`: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let c = Container {
            rows: 2,
            width_a: 2,
            width_b: 1,
            a: vec![0.1, -2.5, f64::MIN_POSITIVE, 3.0],
            b: vec![1e300, -0.0],
            meta: vec![("seed".into(), "7".into()), ("names".into(), "rho,lambda".into())],
        };
        write_container(&path, &c).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), c.a.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.b[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.meta, c.meta);
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"not a table at all").unwrap();
        assert!(matches!(read_container(&path), Err(AbfError::Format(_))));
    }

    #[test]
    fn float_lists_round_trip() {
        let v = vec![0.1, 1e-17, -3.25];
        assert_eq!(parse_f64_list(&join_f64(&v)).unwrap(), v);
    }
}
