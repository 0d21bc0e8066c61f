//! Binary feature file format.
//!
//! Layout (little-endian): magic "FCF1" | version u16 = 1 | flags u16 = 0 |
//! d u32 | C u32 | n u64 | n records of (d x f32 features, u16 label).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::datasets::FeatureDataset;
use crate::error::{Error, Result};

pub const FORMAT_MAGIC: &[u8; 4] = b"FCF1";
const FORMAT_VERSION: u16 = 1;

fn format_err(offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

/// Write a dataset. Features are truncated to f32 on the wire.
pub fn write_features(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FORMAT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(ds.dim() as u32).to_le_bytes())?;
    w.write_all(&(ds.num_classes() as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for i in 0..ds.len() {
        for &v in ds.feature(i) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.write_all(&ds.label(i).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(format_err(start, format!("truncated while reading {what}")))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Read a dataset written by [`write_features`]. Errors carry the byte
/// offset of the first inconsistency.
pub fn read_features(path: &Path) -> Result<FeatureDataset> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };

    let mut magic = [0u8; 4];
    r.read_exact_at(&mut magic, "magic")?;
    if &magic != FORMAT_MAGIC {
        return Err(format_err(
            0,
            format!("bad magic {:?}, expected \"FCF1\"", String::from_utf8_lossy(&magic)),
        ));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact_at(&mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    r.read_exact_at(&mut u16buf, "flags")?;
    let flags = u16::from_le_bytes(u16buf);
    if flags != 0 {
        return Err(format_err(6, format!("unsupported flags {flags:#06x}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact_at(&mut u32buf, "feature dimension")?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    if dim == 0 {
        return Err(format_err(8, "feature dimension is zero"));
    }
    r.read_exact_at(&mut u32buf, "class count")?;
    let num_classes = u32::from_le_bytes(u32buf) as usize;
    let mut u64buf = [0u8; 8];
    r.read_exact_at(&mut u64buf, "sample count")?;
    let n = u64::from_le_bytes(u64buf) as usize;

    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut record = vec![0u8; dim * 4 + 2];
    for i in 0..n {
        let label_offset = r.offset + (dim as u64) * 4;
        r.read_exact_at(&mut record, &format!("record {i}"))?;
        for chunk in record[..dim * 4].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(format_err(label_offset - (dim as u64) * 4, format!("non-finite feature in record {i}")));
            }
            features.push(v as f64);
        }
        let label = u16::from_le_bytes(record[dim * 4..].try_into().unwrap());
        if label as usize >= num_classes {
            return Err(format_err(
                label_offset,
                format!("label {label} >= class count {num_classes} in record {i}"),
            ));
        }
        labels.push(label);
    }
    // A trailing byte means the header undercounted.
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(format_err(r.offset, "trailing bytes after last record"));
    }
    FeatureDataset::from_parts(dim, num_classes, features, labels)
}
