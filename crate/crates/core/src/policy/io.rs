//! Binary weight files.
//!
//! Layout (all integers and floats little-endian):
//! `"HPMW"`, version u32, history u32, hidden u32, n_mlp u32, widths u32 x n_mlp,
//! head u8 (0 deterministic, 1 mixture), components u32, mode u8,
//! scaler dim u32, means f64 x dim, stds f64 x dim, section count u32, then per
//! section: name length u16, name bytes, rows u32, cols u32, values f64 x
//! rows*cols. A CRC-32 of everything before it closes the file.

use std::path::Path;

use super::arch::{HeadKind, PolicyArchitecture};
use super::model::ModelWeights;
use crate::domain::{AblationMode, FeatureScaler};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HPMW";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(w: &ModelWeights) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * (w.params.len() + 2 * w.scaler.dim()));
    b.extend_from_slice(MAGIC);
    put_u32(&mut b, FORMAT_VERSION);
    put_u32(&mut b, w.arch.history as u32);
    put_u32(&mut b, w.arch.hidden as u32);
    put_u32(&mut b, w.arch.mlp.len() as u32);
    for &m in &w.arch.mlp {
        put_u32(&mut b, m as u32);
    }
    match w.arch.head {
        HeadKind::Deterministic => {
            b.push(0);
            put_u32(&mut b, 0);
        }
        HeadKind::Mixture { components } => {
            b.push(1);
            put_u32(&mut b, components as u32);
        }
    }
    b.push(w.mode.code());
    put_u32(&mut b, w.scaler.dim() as u32);
    for x in w.scaler.mean.iter().chain(&w.scaler.std) {
        b.extend_from_slice(&x.to_le_bytes());
    }
    let layout = w.layout();
    put_u32(&mut b, layout.sections.len() as u32);
    for sec in &layout.sections {
        b.extend_from_slice(&(sec.name.len() as u16).to_le_bytes());
        b.extend_from_slice(sec.name.as_bytes());
        put_u32(&mut b, sec.rows as u32);
        put_u32(&mut b, sec.cols as u32);
        for x in &w.params[sec.range()] {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&b);
    put_u32(&mut b, crc);
    b
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<ModelWeights, String> {
    if bytes.len() < 8 {
        return Err("file too short".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err("checksum mismatch".into());
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a weight file (bad magic)".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(format!("unsupported format version {version}"));
    }
    let history = r.u32()?;
    let hidden = r.u32()?;
    let n_mlp = r.u32()?;
    let mlp = (0..n_mlp).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    let head = match (r.u8()?, r.u32()?) {
        (0, _) => HeadKind::Deterministic,
        (1, components) => HeadKind::Mixture { components },
        (k, _) => return Err(format!("unknown head kind {k}")),
    };
    let mode = AblationMode::from_code(r.u8()?).map_err(|e| e.to_string())?;
    let arch = PolicyArchitecture {
        history,
        hidden,
        mlp,
        head,
    };
    arch.validate().map_err(|e| e.to_string())?;
    let dim = r.u32()?;
    let mean = (0..dim).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
    let std = (0..dim).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
    let scaler = FeatureScaler::new(mean, std).map_err(|e| e.to_string())?;

    let layout = arch.layout();
    let count = r.u32()?;
    if count != layout.sections.len() {
        return Err(format!("expected {} sections, found {count}", layout.sections.len()));
    }
    let mut params = vec![0.0; layout.total];
    for sec in &layout.sections {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "section name is not UTF-8")?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        if name != sec.name || rows != sec.rows || cols != sec.cols {
            return Err(format!(
                "section {name} {rows}x{cols} does not match expected {} {}x{}",
                sec.name, sec.rows, sec.cols
            ));
        }
        for p in &mut params[sec.range()] {
            *p = r.f64()?;
        }
    }
    if r.pos != body.len() {
        return Err("trailing bytes after the last section".into());
    }
    ModelWeights::new(arch, mode, scaler, params).map_err(|e| e.to_string())
}

pub fn write_weights(path: &Path, w: &ModelWeights) -> Result<()> {
    std::fs::write(path, to_bytes(w)).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: &Path) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|d| Error::format(path, d))
}
