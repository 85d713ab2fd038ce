//! IDX files as used by MNIST: a big-endian `u32` magic number, big-endian
//! `u32` dimensions, then an unsigned-byte payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::{Error, Real, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image payload of an IDX3 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(field, "file truncated inside the header"))
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, "images.magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(
            "images.magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, "images.count")? as usize;
    let rows = read_u32(bytes, 8, "images.rows")? as usize;
    let cols = read_u32(bytes, 12, "images.cols")? as usize;
    let expected = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::parse(
            "images.payload",
            format!(
                "{count} x {rows} x {cols} needs {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

/// Labels of an IDX1 file; every byte must be below `num_classes`.
pub fn read_idx_labels(bytes: &[u8], num_classes: usize) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels.magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(
            "labels.magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, "labels.count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::parse(
            "labels.payload",
            format!("header announces {count} labels, found {}", payload.len()),
        ));
    }
    if let Some(pos) = payload.iter().position(|&b| b as usize >= num_classes) {
        return Err(Error::parse(
            "labels.payload",
            format!(
                "label {} at index {pos} out of range for {num_classes} classes",
                payload[pos]
            ),
        ));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn write_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label pair as a 10-class dataset with pixels scaled to `[0, 1]`.
pub fn load_idx<T: Real>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = read_idx_images(&fs::read(images_path)?)?;
    let labels = read_idx_labels(&fs::read(labels_path)?, 10)?;
    if images.count != labels.len() {
        return Err(Error::parse(
            "count",
            format!(
                "images file holds {} samples, labels file {}",
                images.count,
                labels.len()
            ),
        ));
    }
    let d = images.rows * images.cols;
    let scale = T::lit(255.0);
    let inputs = Array2::from_shape_vec(
        (images.count, d),
        images
            .pixels
            .iter()
            .map(|&p| T::lit(p as f64) / scale)
            .collect(),
    )
    .map_err(|e| Error::shape(e.to_string()))?;
    Dataset::new(inputs, labels, 10)
}
