//! `.fvecs` / `.bvecs` / `.ivecs`: each record is a little-endian `i32`
//! dimension followed by that many components.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::index::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecsKind {
    F32,
    U8,
    I32,
}

impl VecsKind {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("fvecs") => Ok(VecsKind::F32),
            Some("bvecs") => Ok(VecsKind::U8),
            Some("ivecs") => Ok(VecsKind::I32),
            _ => Err(Error::InvalidArgument(format!("{} is not a .fvecs/.bvecs/.ivecs file", path.display()))),
        }
    }

    pub fn component_bytes(self) -> usize {
        match self {
            VecsKind::U8 => 1,
            _ => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VecsData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

/// Rows of one vecs file in their stored element type.
#[derive(Clone, Debug, PartialEq)]
pub struct Vecs {
    pub dim: usize,
    pub rows: usize,
    pub data: VecsData,
}

impl Vecs {
    pub fn kind(&self) -> VecsKind {
        match self.data {
            VecsData::F32(_) => VecsKind::F32,
            VecsData::U8(_) => VecsKind::U8,
            VecsData::I32(_) => VecsKind::I32,
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        let data = match &self.data {
            VecsData::F32(v) => v.clone(),
            VecsData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VecsData::I32(v) => v.iter().map(|&x| x as f32).collect(),
        };
        Dataset::new(self.dim, data)
    }

    /// Rows as non-negative integers, e.g. ground-truth neighbor ids.
    pub fn to_ids(&self) -> Result<Vec<Vec<u32>>> {
        let VecsData::I32(v) = &self.data else {
            return Err(Error::InvalidData("ids must come from an .ivecs file".into()));
        };
        v.chunks(self.dim.max(1))
            .map(|r| {
                r.iter()
                    .map(|&x| u32::try_from(x).map_err(|_| Error::InvalidData(format!("negative id {x}"))))
                    .collect()
            })
            .collect()
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            dim: d.dim(),
            rows: d.len(),
            data: VecsData::F32(d.as_slice().to_vec()),
        }
    }

    pub fn from_ids(rows: &[Vec<u32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("id rows differ in length".into()));
        }
        Ok(Self {
            dim,
            rows: rows.len(),
            data: VecsData::I32(rows.iter().flatten().map(|&x| x as i32).collect()),
        })
    }
}

/// Streams up to `max_rows` records (all when `None`).
pub fn read_vecs(path: &Path, kind: VecsKind, max_rows: Option<usize>) -> Result<Vecs> {
    let file = File::open(path)?;
    read_vecs_from(BufReader::new(file), path, kind, max_rows)
}

pub fn read_vecs_from<R: Read>(mut r: R, path: &Path, kind: VecsKind, max_rows: Option<usize>) -> Result<Vecs> {
    let fmt = |offset: u64, record: usize, reason: String| Error::Format {
        path: PathBuf::from(path),
        offset,
        record,
        reason,
    };
    let width = kind.component_bytes();
    let mut data = match kind {
        VecsKind::F32 => VecsData::F32(Vec::new()),
        VecsKind::U8 => VecsData::U8(Vec::new()),
        VecsKind::I32 => VecsData::I32(Vec::new()),
    };
    let mut dim: Option<usize> = None;
    let mut offset = 0u64;
    let mut rows = 0usize;
    let mut buf = Vec::new();
    while max_rows.is_none_or(|m| rows < m) {
        let mut head = [0u8; 4];
        match read_full(&mut r, &mut head)? {
            0 => break,
            4 => {}
            _ => return Err(fmt(offset, rows, "truncated dimension header".into())),
        }
        let d = i32::from_le_bytes(head);
        if d <= 0 {
            return Err(fmt(offset, rows, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(fmt(offset, rows, format!("dimension {d} differs from {prev} of record 0")));
            }
            _ => {}
        }
        buf.resize(d * width, 0);
        if read_full(&mut r, &mut buf)? != buf.len() {
            return Err(fmt(offset + 4, rows, format!("truncated record, expected {} bytes", buf.len())));
        }
        match &mut data {
            VecsData::F32(v) => v.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()))),
            VecsData::U8(v) => v.extend_from_slice(&buf),
            VecsData::I32(v) => v.extend(buf.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()))),
        }
        offset += 4 + buf.len() as u64;
        rows += 1;
    }
    Ok(Vecs {
        dim: dim.unwrap_or(0),
        rows,
        data,
    })
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}

pub fn write_vecs(path: &Path, v: &Vecs) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vecs_to(&mut w, v)?;
    w.flush()?;
    Ok(())
}

pub fn write_vecs_to<W: Write>(w: &mut W, v: &Vecs) -> Result<()> {
    let head = (v.dim as i32).to_le_bytes();
    for i in 0..v.rows {
        w.write_all(&head)?;
        let (a, b) = (i * v.dim, (i + 1) * v.dim);
        match &v.data {
            VecsData::F32(d) => d[a..b].iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            VecsData::U8(d) => w.write_all(&d[a..b])?,
            VecsData::I32(d) => d[a..b].iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dim: i32, comps: &[u8]) -> Vec<u8> {
        let mut v = dim.to_le_bytes().to_vec();
        v.extend_from_slice(comps);
        v
    }

    #[test]
    fn one_record() {
        let mut bytes = 4i32.to_le_bytes().to_vec();
        for x in [1.0f32, 2.0, 3.0, 4.5] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let v = read_vecs_from(bytes.as_slice(), Path::new("a.fvecs"), VecsKind::F32, None).unwrap();
        assert_eq!((v.rows, v.dim), (1, 4));
        let d = v.to_dataset().unwrap();
        assert_eq!(d.row(0), &[1.0, 2.0, 3.0, 4.5]);
    }

    #[test]
    fn differing_dims_name_record() {
        let mut bytes = record(2, &[1, 2]);
        bytes.extend(record(2, &[3, 4]));
        bytes.extend(record(3, &[5, 6, 7]));
        match read_vecs_from(bytes.as_slice(), Path::new("x.bvecs"), VecsKind::U8, None) {
            Err(Error::Format { record, offset, .. }) => {
                assert_eq!(record, 2);
                assert_eq!(offset, 12);
            }
            other => panic!("{other:?}"),
        }
        let v = read_vecs_from(bytes.as_slice(), Path::new("x.bvecs"), VecsKind::U8, Some(2)).unwrap();
        assert_eq!(v.rows, 2);
    }

    #[test]
    fn truncated_record() {
        let mut bytes = record(4, &[1, 2, 3, 4]);
        bytes.extend(record(4, &[1, 2]));
        assert!(matches!(
            read_vecs_from(bytes.as_slice(), Path::new("x.bvecs"), VecsKind::U8, None),
            Err(Error::Format { record: 1, .. })
        ));
        let short = vec![4u8, 0];
        assert!(read_vecs_from(short.as_slice(), Path::new("x.bvecs"), VecsKind::U8, None).is_err());
    }

    #[test]
    fn round_trip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for i in 0..5i32 {
            bytes.extend(3i32.to_le_bytes());
            for j in 0..3 {
                bytes.extend((i * 10 - j).to_le_bytes());
            }
        }
        let p = dir.path().join("g.ivecs");
        std::fs::write(&p, &bytes).unwrap();
        let v = read_vecs(&p, VecsKind::from_path(&p).unwrap(), None).unwrap();
        let q = dir.path().join("h.ivecs");
        write_vecs(&q, &v).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), bytes);

        let f = Vecs::from_dataset(&Dataset::new(2, vec![0.5, -1.25, 3.0, 1e-7]).unwrap());
        let p = dir.path().join("f.fvecs");
        write_vecs(&p, &f).unwrap();
        assert_eq!(read_vecs(&p, VecsKind::F32, None).unwrap(), f);
    }
}
