//! Binary basis checkpoint.
//!
//! Layout, little-endian: magic `MORQ`, u32 version, u64 M, u64 d, u64 number
//! of singular values, u64 number of sources, f64 discarded energy, f64 total
//! energy, Q column-major (M·d f64), singular values, then (scenario, step)
//! pairs as u64.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::basis::ReducedBasis;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MORQ";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(basis: &ReducedBasis, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(48 + 8 * (basis.q.len() + basis.sigma.len() + 2 * basis.sources.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for n in [basis.m(), basis.d(), basis.sigma.len(), basis.sources.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&basis.sigma_discarded_sq_sum.to_le_bytes());
    out.extend_from_slice(&basis.total_energy.to_le_bytes());
    for x in basis.q.iter().chain(&basis.sigma) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &(s, n) in &basis.sources {
        out.extend_from_slice(&(s as u64).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ReducedBasis> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Cursor { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let m = r.u64()? as usize;
    let d = r.u64()? as usize;
    let ns = r.u64()? as usize;
    let nsrc = r.u64()? as usize;
    let discarded = r.f64()?;
    let total = r.f64()?;
    let q: Vec<f64> = (0..m * d).map(|_| r.f64()).collect::<Result<_>>()?;
    let sigma: Vec<f64> = (0..ns).map(|_| r.f64()).collect::<Result<_>>()?;
    let sources = (0..nsrc)
        .map(|_| Ok((r.u64()? as usize, r.u64()? as usize)))
        .collect::<Result<_>>()?;
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(ReducedBasis {
        q: DMatrix::from_vec(m, d, q),
        sigma,
        sigma_discarded_sq_sum: discarded,
        total_energy: total,
        sources,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
