//! Big-endian IDX files as used by MNIST.
//!
//! Images: magic `0x00000803`, u32 count, u32 rows, u32 cols, then
//! row-major u8 pixels. Labels: magic `0x00000801`, u32 count, then u8
//! labels. Pixels are scaled to `[0, 1]` by dividing by 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Targets};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Length { expected: at + 4, found: bytes.len() })
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    Ok((count, rows, cols, &bytes[16..expected]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    Ok(&bytes[8..expected])
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let image_bytes = fs::read(images.as_ref())?;
    let label_bytes = fs::read(labels.as_ref())?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let raw_labels = parse_idx_labels(&label_bytes)?;
    if raw_labels.len() != count {
        return Err(Error::Consistency(format!(
            "{count} images but {} labels",
            raw_labels.len()
        )));
    }
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<u32> = raw_labels.iter().map(|&l| u32::from(l)).collect();
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1).max(10);
    let name = images
        .as_ref()
        .file_name()
        .map_or_else(|| "idx".to_string(), |n| n.to_string_lossy().into_owned());
    Dataset::new(name, features, rows * cols, Targets::Classes { labels, classes })
}

pub fn write_idx_images<W: Write>(mut w: W, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::InvalidParameter(format!(
            "{} pixels do not form {rows}x{cols} images",
            pixels.len()
        )));
    }
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&((pixels.len() / per) as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    w.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}
