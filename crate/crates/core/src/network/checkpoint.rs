//! `GCKP` parameter checkpoints.
//!
//! Layout: magic `"GCKP"`, version `u16`, architecture tag `u8` (1 = CNN1,
//! 2 = CNN2, 0 = custom shape recovered from the tensors), then for each
//! parameter tensor in layer order: rank `u8`, that many `u32` extents, and
//! the values as `f64`. Little-endian throughout.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Arch, ArchShape, NetworkSpec, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CKPT_MAGIC: [u8; 4] = *b"GCKP";
pub const CKPT_VERSION: u16 = 1;
const PARAM_TENSORS: usize = 6;

pub fn write_checkpoint<W: Write>(
    spec: &NetworkSpec,
    params: &Parameters,
    mut out: W,
) -> Result<()> {
    params.check_against(spec)?;
    out.write_all(&CKPT_MAGIC)?;
    out.write_all(&CKPT_VERSION.to_le_bytes())?;
    out.write_all(&[spec.arch.map_or(0, Arch::tag)])?;
    for t in &params.tensors {
        out.write_all(&[t.rank() as u8])?;
        for &e in t.shape() {
            out.write_all(&(e as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(
    spec: &NetworkSpec,
    params: &Parameters,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_checkpoint(spec, params, BufWriter::new(File::create(path)?))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end as u64,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(NetworkSpec, Parameters)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || bytes[..4] != CKPT_MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            expected: CKPT_MAGIC,
            found,
        });
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 4,
    };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
    if version != CKPT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: CKPT_VERSION,
        });
    }
    let tag = cur.take(1)?[0];

    let mut tensors = Vec::with_capacity(PARAM_TENSORS);
    for _ in 0..PARAM_TENSORS {
        let rank = cur.take(1)?[0] as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = cur
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(&shape, data).map_err(|e| Error::Malformed(e.to_string()))?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }

    let spec = match tag {
        0 => NetworkSpec::from_shape(None, infer_shape(&tensors)?)?,
        t => {
            let arch = Arch::from_tag(t)
                .ok_or_else(|| Error::Malformed(format!("unknown architecture tag {t}")))?;
            NetworkSpec::from_shape(Some(arch), arch.shape())?
        }
    };
    let params = Parameters { tensors };
    params
        .check_against(&spec)
        .map_err(|e| Error::Malformed(e.to_string()))?;
    Ok((spec, params))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkSpec, Parameters)> {
    read_checkpoint(File::open(path)?)
}

fn infer_shape(tensors: &[Tensor]) -> Result<ArchShape> {
    let malformed = || Error::Malformed("cannot infer architecture from tensor shapes".into());
    let (k1, c1) = match *tensors[0].shape() {
        [k, k2, 1, c] if k == k2 => (k, c),
        _ => return Err(malformed()),
    };
    let (k2, c2) = match *tensors[2].shape() {
        [k, kk, _, c] if k == kk => (k, c),
        _ => return Err(malformed()),
    };
    let (flat, classes) = match *tensors[4].shape() {
        [f, c] => (f, c),
        _ => return Err(malformed()),
    };
    // Recover the input side from the flattened fc width: flat = s4² · c2.
    let s4 = ((flat / c2) as f64).sqrt().round() as usize;
    for side in 1..=1024usize {
        let Some(s1) = (side + 1).checked_sub(k1) else {
            continue;
        };
        let Some(s3) = (s1 / 2 + 1).checked_sub(k2) else {
            continue;
        };
        if s3 / 2 == s4 && s3 >= 2 && s1 >= 2 {
            return Ok(ArchShape {
                input_side: side,
                conv1_kernel: k1,
                conv1_filters: c1,
                conv2_kernel: k2,
                conv2_filters: c2,
                classes,
            });
        }
    }
    Err(malformed())
}
