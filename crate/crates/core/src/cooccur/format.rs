//! Little-endian layout: `u16 M, u16 kstar, u16 nslots`, then per slot a
//! member-count byte and that many `u16` addresses, then per vector a length
//! byte and that many `u16` addresses until end of input.

use std::io::{ErrorKind, Read, Write};

use super::{CacheLayout, ReencodedCluster, ReencodedVector};
use crate::error::{Error, Result};

pub fn write_cluster<W: Write>(cluster: &ReencodedCluster, mut w: W) -> Result<()> {
    let l = &cluster.layout;
    for v in [l.m_dims(), l.kstar(), l.nslots()] {
        let v = u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("header value {v} exceeds u16")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for s in 0..l.nslots() {
        let mem = l.members(s);
        w.write_all(&[mem.len() as u8])?;
        for a in mem {
            w.write_all(&a.to_le_bytes())?;
        }
    }
    for v in &cluster.vectors {
        let len = u8::try_from(v.len()).map_err(|_| Error::InvalidArgument(format!("vector length {} exceeds a byte", v.len())))?;
        w.write_all(&[len])?;
        for a in &v.addrs {
            w.write_all(&a.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cluster<R: Read>(r: R) -> Result<ReencodedCluster> {
    let mut r = Reader { inner: r, offset: 0 };
    let m = r.u16()? as usize;
    let kstar = r.u16()? as usize;
    let nslots = r.u16()? as usize;
    if m == 0 || kstar == 0 || kstar > 256 {
        return Err(Error::CorruptEncoding(format!("bad header M={m} kstar={kstar}")));
    }
    let mut members = Vec::with_capacity(nslots);
    for _ in 0..nslots {
        let n = r.u8()?.ok_or_else(|| r.truncated("slot table"))? as usize;
        members.push((0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?);
    }
    let layout = CacheLayout::from_members(m, kstar, members)?;
    let mut vectors = Vec::new();
    while let Some(len) = r.u8()? {
        let addrs = (0..len).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        if let Some(a) = addrs.iter().find(|&&a| a as usize >= layout.address_space()) {
            return Err(Error::CorruptEncoding(format!("vector {} has address {a} out of range", vectors.len())));
        }
        vectors.push(ReencodedVector { addrs });
    }
    Ok(ReencodedCluster { layout, vectors })
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn truncated(&self, what: &str) -> Error {
        Error::CorruptEncoding(format!("truncated {what} at byte {}", self.offset))
    }

    fn u8(&mut self) -> Result<Option<u8>> {
        let mut b = [0u8; 1];
        match self.inner.read_exact(&mut b) {
            Ok(()) => {
                self.offset += 1;
                Ok(Some(b[0]))
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        match self.inner.read_exact(&mut b) {
            Ok(()) => {
                self.offset += 2;
                Ok(u16::from_le_bytes(b))
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => Err(self.truncated("address")),
            Err(e) => Err(e.into()),
        }
    }
}
