//! Checkpoint container.
//!
//! Layout: a UTF-8 text header of `key=value` lines terminated by an empty
//! line, followed by binary records, each
//! `u32 name_len | name bytes | u32 ndim | u32 dims[ndim] | f32 data[numel]`,
//! all little-endian. The first header line is the magic [`MAGIC`].

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{ParamSet, Scalar, Tensor, TensorError};

pub const MAGIC: &str = "flownet-checkpoint v1";

/// Header metadata plus parameters (stored as `f32`).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(meta: Vec<(String, String)>, params: &ParamSet<T>) -> Self {
        Self {
            meta,
            params: params.cast(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), TensorError> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(TensorError::Checkpoint(format!("invalid header entry {k:?}")));
            }
            header.push_str(&format!("{k}={v}\n"));
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        for (name, t) in self.params.iter() {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&4u32.to_le_bytes())?;
            for d in t.shape() {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.numel() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, TensorError> {
        let mut r = BufReader::new(input);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(TensorError::Checkpoint("bad magic".into()));
        }
        let mut meta = Vec::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(TensorError::Checkpoint("header not terminated".into()));
            }
            let l = line.trim_end_matches('\n');
            if l.is_empty() {
                break;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| TensorError::Checkpoint(format!("malformed header line {l:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let mut params = ParamSet::new();
        loop {
            let mut word = [0u8; 4];
            match read_exact_or_eof(&mut r, &mut word)? {
                false => break,
                true => {}
            }
            let name_len = u32::from_le_bytes(word) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            if ndim != 4 {
                return Err(TensorError::Checkpoint(format!("{name}: expected 4 dims, got {ndim}")));
            }
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = read_u32(&mut r)? as usize;
            }
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 4];
            r.read_exact(&mut bytes).map_err(truncated)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.insert(name, Tensor::from_vec(shape, data)?);
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn truncated(_: std::io::Error) -> TensorError {
    TensorError::Checkpoint("truncated record".into())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean EOF before the
/// first byte.
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, TensorError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return if filled == 0 { Ok(false) } else { Err(truncated(std::io::ErrorKind::UnexpectedEof.into())) };
        }
        filled += n;
    }
    Ok(true)
}
