//! Field containers on disk.
//!
//! Binary layout (all little-endian): magic `FRLB1`, `u32 n`, `u32 nx`,
//! `u32 ny`, `f64 L`, `f64 Y`, `f64 gamma`, `u8 periodic`, `u64 count`, then
//! `count` doubles in field storage order (level outermost, `x_1` fastest).
//! A trace is stored with the same header and `count = nx^n`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{HalfSpaceGrid, ScalarField, TraceField};

pub const MAGIC: &[u8; 5] = b"FRLB1";

fn header(grid: &HalfSpaceGrid, count: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * count);
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    b.extend_from_slice(&(grid.nx() as u32).to_le_bytes());
    b.extend_from_slice(&(grid.ny() as u32).to_le_bytes());
    b.extend_from_slice(&grid.l().to_le_bytes());
    b.extend_from_slice(&grid.y_max().to_le_bytes());
    b.extend_from_slice(&grid.gamma().to_le_bytes());
    b.push(grid.periodic() as u8);
    b.extend_from_slice(&(count as u64).to_le_bytes());
    b
}

pub fn encode(grid: &HalfSpaceGrid, values: &[f64]) -> Vec<u8> {
    let mut b = header(grid, values.len());
    for v in values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.buf.len() {
            return Err(Error::Data("truncated FRLB1 container".into()));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a container into its grid and raw values.
pub fn decode(buf: &[u8]) -> Result<(HalfSpaceGrid, Vec<f64>)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5)? != MAGIC {
        return Err(Error::Data("missing FRLB1 magic".into()));
    }
    let n = r.u32()? as usize;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let l = r.f64()?;
    let y = r.f64()?;
    let gamma = r.f64()?;
    let periodic = r.take(1)?[0] != 0;
    let count = r.u64()? as usize;
    let grid = HalfSpaceGrid::new(n, l, nx, y, ny, gamma, periodic)?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(r.f64()?);
    }
    if r.pos != buf.len() {
        return Err(Error::Data("trailing bytes after FRLB1 payload".into()));
    }
    Ok((grid, values))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, &encode(f.grid(), f.values()))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let (grid, values) = decode(&fs::read(path)?)?;
    ScalarField::new(Arc::new(grid), values)
}

pub fn write_trace(path: &Path, t: &TraceField) -> Result<()> {
    write_atomic(path, &encode(t.grid(), t.values()))
}

/// CSV with columns `i1[, i2], y, value`.
pub fn field_csv(f: &ScalarField) -> Result<Vec<u8>> {
    let g = f.grid();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["i1".to_string()];
    if g.n() == 2 {
        head.push("i2".into());
    }
    head.push("y".into());
    head.push("value".into());
    w.write_record(&head)?;
    for j in 0..g.levels() {
        for p in 0..g.plane_len() {
            let ix = g.split(p);
            let mut rec = vec![ix[0].to_string()];
            if g.n() == 2 {
                rec.push(ix[1].to_string());
            }
            rec.push(g.y()[j].to_string());
            rec.push(f.at(p, j).to_string());
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// CSV with columns `i1[, i2], x1[, x2], value`.
pub fn trace_csv(t: &TraceField) -> Result<Vec<u8>> {
    let g = t.grid();
    let mut w = csv::Writer::from_writer(Vec::new());
    if g.n() == 1 {
        w.write_record(["i1", "x1", "value"])?;
    } else {
        w.write_record(["i1", "i2", "x1", "x2", "value"])?;
    }
    for p in 0..g.plane_len() {
        let ix = g.split(p);
        let c = g.coords(p);
        let v = t.values()[p].to_string();
        if g.n() == 1 {
            w.write_record([ix[0].to_string(), c[0].to_string(), v])?;
        } else {
            w.write_record([ix[0].to_string(), ix[1].to_string(), c[0].to_string(), c[1].to_string(), v])?;
        }
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Reads a trace CSV (last column is the value, rows in plane order).
pub fn read_trace_csv(path: &Path, grid: Arc<HalfSpaceGrid>) -> Result<TraceField> {
    let mut r = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let last = rec.get(rec.len().saturating_sub(1)).unwrap_or("");
        let v: f64 = last
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad value `{last}` in {}", path.display())))?;
        values.push(v);
    }
    TraceField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip() {
        let g = Arc::new(HalfSpaceGrid::new(2, 1.5, 5, 2.0, 3, 1.5, false).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x, y| x[0] - 2.0 * x[1] + y * y).unwrap();
        let bytes = encode(f.grid(), f.values());
        assert_eq!(&bytes[..5], MAGIC);
        let (g2, v2) = decode(&bytes).unwrap();
        assert_eq!(&g2, f.grid());
        assert_eq!(v2, f.values());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let g = Arc::new(HalfSpaceGrid::new(1, 1.0, 4, 1.0, 2, 1.0, true).unwrap());
        let f = ScalarField::zeros(g);
        let text = String::from_utf8(field_csv(&f).unwrap()).unwrap();
        assert!(text.starts_with("i1,y,value\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 3);
    }
}
