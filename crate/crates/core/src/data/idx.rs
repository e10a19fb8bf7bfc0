use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        Ok(Self {
            path,
            bytes: fs::read(path)?,
            pos: 0,
        })
    }

    fn fail(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let word = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.fail(self.pos, "truncated header"))?;
        let v = u32::from_be_bytes(word.try_into().expect("4-byte slice"));
        self.pos = end;
        Ok(v)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32()?;
        if got != expected {
            return Err(self.fail(0, format!("bad magic 0x{got:08x}, expected 0x{expected:08x}")));
        }
        Ok(())
    }

    fn payload(&self, len: usize) -> Result<&[u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(self.fail(self.bytes.len(), format!("truncated payload: need {len} bytes, found {available}")));
        }
        if available > len {
            return Err(self.fail(self.pos + len, format!("{} trailing bytes", available - len)));
        }
        Ok(&self.bytes[self.pos..])
    }
}

/// Reads an IDX image/label pair. Pixels are scaled into `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let mut images = Reader::open(images_path.as_ref())?;
    images.magic(IDX_IMAGE_MAGIC)?;
    let count = images.u32()? as usize;
    let rows = images.u32()? as usize;
    let cols = images.u32()? as usize;
    let dim = rows * cols;
    let pixels = images.payload(count * dim)?;

    let mut labels = Reader::open(labels_path.as_ref())?;
    labels.magic(IDX_LABEL_MAGIC)?;
    let label_count = labels.u32()? as usize;
    if label_count != count {
        return Err(labels.fail(4, format!("label count {label_count} does not match image count {count}")));
    }
    let raw_labels = labels.payload(count)?;

    let values: Vec<f64> = pixels.iter().map(|p| f64::from(*p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| usize::from(*l)).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(DenseMatrix::new(count, dim, values)?, labels, num_classes)
}

/// Writes a dataset as an IDX pair. Features must be multiples of 1/255 in `[0, 1]`.
pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != ds.feature_dim() {
        return Err(Error::Dimension {
            expected: ds.feature_dim(),
            actual: rows * cols,
        });
    }
    let count = u32::try_from(ds.len()).map_err(|_| Error::param("too many samples for IDX"))?;
    let mut img = Vec::with_capacity(16 + ds.len() * ds.feature_dim());
    img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&count.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for v in ds.features().values() {
        let scaled = (v * 255.0).round();
        if !(0.0..=255.0).contains(&scaled) {
            return Err(Error::param(format!("feature {v} outside [0, 1]")));
        }
        img.push(scaled as u8);
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&count.to_be_bytes());
    for l in ds.labels() {
        lab.push(u8::try_from(*l).map_err(|_| Error::param(format!("label {l} does not fit a byte")))?);
    }
    fs::File::create(images_path)?.write_all(&img)?;
    fs::File::create(labels_path)?.write_all(&lab)?;
    Ok(())
}
