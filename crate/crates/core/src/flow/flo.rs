//! Middlebury `.flo` container.
//!
//! Layout: the 4-byte tag `PIEH`, little-endian `i32` width and height, then
//! `width·height` interleaved little-endian `f32` pairs `(u, v)` row-major.
//! Vectors with a component above [`UNKNOWN_FLOW_THRESHOLD`] in magnitude
//! mark unknown flow.

use std::io::{Read, Write};
use std::path::Path;

use super::FlowField;
use crate::{CoreError, Result};

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";
/// Components with `|x| > 1e9` are read as unknown.
pub const UNKNOWN_FLOW_THRESHOLD: f64 = 1e9;
/// Value written for both components of invalid pixels.
pub const UNKNOWN_FLOW: f32 = 1e10;

pub fn read_flo<R: Read>(mut input: R) -> Result<FlowField> {
    let mut header = [0u8; 12];
    let got = read_fully(&mut input, &mut header)?;
    if got < 4 || &header[..4] != FLO_MAGIC {
        return Err(CoreError::Format("missing PIEH tag".into()));
    }
    if got < 12 {
        return Err(CoreError::Length { expected: 12, got });
    }
    let width = i32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    let height = i32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if width < 0 || height < 0 {
        return Err(CoreError::Format(format!("negative dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    let mut body = vec![0u8; n * 8];
    let got = read_fully(&mut input, &mut body)?;
    if got < body.len() {
        return Err(CoreError::Length {
            expected: 12 + body.len(),
            got: 12 + got,
        });
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for px in body.chunks_exact(8) {
        let a = f32::from_le_bytes(px[..4].try_into().expect("4 bytes")) as f64;
        let b = f32::from_le_bytes(px[4..].try_into().expect("4 bytes")) as f64;
        let known = a.abs() <= UNKNOWN_FLOW_THRESHOLD && b.abs() <= UNKNOWN_FLOW_THRESHOLD && a.is_finite() && b.is_finite();
        valid.push(known);
        u.push(if known { a } else { 0.0 });
        v.push(if known { b } else { 0.0 });
    }
    FlowField::from_parts(width, height, u, v, valid)
}

/// Writes the field; vectors are stored as `f32`.
pub fn write_flo<W: Write>(mut out: W, flow: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + flow.len() * 8);
    buf.extend_from_slice(FLO_MAGIC);
    buf.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for i in 0..flow.len() {
        let (a, b) = if flow.valid()[i] {
            (flow.u()[i] as f32, flow.v()[i] as f32)
        } else {
            (UNKNOWN_FLOW, UNKNOWN_FLOW)
        };
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_flo_file(path: impl AsRef<Path>) -> Result<FlowField> {
    read_flo(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_flo_file(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    write_flo(std::fs::File::create(path)?, flow)
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}
