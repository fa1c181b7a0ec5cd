//! Reader for the big-endian IDX image/label container format.

use std::path::Path;

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> IdxReader<'a> {
    fn read_u32(&mut self) -> Result<u32> {
        if self.offset + 4 > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: truncated header at byte offset {}",
                self.path, self.offset
            )));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..self.offset + 4].try_into().unwrap());
        self.offset += 4;
        Ok(v)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: truncated payload at byte offset {} (needed {} more bytes, file has {})",
                self.path,
                self.offset,
                n - (self.bytes.len() - self.offset),
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }
}

/// Load an IDX image/label pair into a feature matrix with pixels scaled
/// to `[0, 1]`. Image and label counts must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<TabularDataset> {
    let image_bytes = std::fs::read(images_path)?;
    let mut images = IdxReader {
        bytes: &image_bytes,
        offset: 0,
        path: images_path.display().to_string(),
    };
    let magic = images.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad image magic {magic:#010x} at byte offset 0 (expected {IMAGE_MAGIC:#010x})",
            images.path
        )));
    }
    let count = images.read_u32()? as usize;
    let rows = images.read_u32()? as usize;
    let cols = images.read_u32()? as usize;
    let pixels = images.take(count * rows * cols)?;
    if images.offset != image_bytes.len() {
        return Err(Error::Parse(format!(
            "{}: {} trailing bytes at byte offset {}",
            images.path,
            image_bytes.len() - images.offset,
            images.offset
        )));
    }

    let label_bytes = std::fs::read(labels_path)?;
    let mut labels = IdxReader {
        bytes: &label_bytes,
        offset: 0,
        path: labels_path.display().to_string(),
    };
    let magic = labels.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad label magic {magic:#010x} at byte offset 0 (expected {LABEL_MAGIC:#010x})",
            labels.path
        )));
    }
    let label_count = labels.read_u32()? as usize;
    if label_count != count {
        return Err(Error::Parse(format!(
            "{} images but {} labels",
            count, label_count
        )));
    }
    let label_values = labels.take(label_count)?;
    if labels.offset != label_bytes.len() {
        return Err(Error::Parse(format!(
            "{}: {} trailing bytes at byte offset {}",
            labels.path,
            label_bytes.len() - labels.offset,
            labels.offset
        )));
    }

    let dim = rows * cols;
    let mut features = DenseMatrix::zeros(count, dim);
    for (r, chunk) in pixels.chunks(dim).enumerate() {
        let row = features.row_mut(r);
        for (v, &b) in row.iter_mut().zip(chunk) {
            *v = b as f64 / 255.0;
        }
    }
    let label_vec: Vec<usize> = label_values.iter().map(|&b| b as usize).collect();
    let class_count = label_vec.iter().max().map(|&m| m + 1).unwrap_or(0).max(2);
    TabularDataset::new(features, label_vec, class_count)
}
