//! MNIST IDX files (big-endian). Pixels are scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], offset: usize, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(name, format!("offset {offset}"), "truncated header"))
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format("images", "offset 0", format!("bad magic {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format("labels", "offset 0", format!("bad magic {magic:#010x}")));
    }
    let n_images = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n_images != n_labels {
        return Err(Error::format(
            "labels",
            "offset 4",
            format!("{n_labels} labels for {n_images} images"),
        ));
    }
    let pixels = rows * cols;
    if pixels == 0 {
        return Err(Error::format("images", "offset 8", "zero-sized images"));
    }
    let body = &images[16..];
    if body.len() != n_images * pixels {
        return Err(Error::format(
            "images",
            "offset 16",
            format!("expected {} pixel bytes, found {}", n_images * pixels, body.len()),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n_labels {
        return Err(Error::format(
            "labels",
            "offset 8",
            format!("expected {n_labels} label bytes, found {}", label_bytes.len()),
        ));
    }
    if let Some(i) = label_bytes.iter().position(|&y| y as usize >= IDX_CLASSES) {
        return Err(Error::format(
            "labels",
            format!("offset {}", 8 + i),
            format!("label {} out of range", label_bytes[i]),
        ));
    }
    let features = body
        .chunks_exact(pixels)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    let labels = label_bytes.iter().map(|&y| y as usize).collect();
    Dataset::new(features, labels, IDX_CLASSES, format!("idx({n_images} images, {rows}x{cols})"))
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    parse_idx(&fs::read(images)?, &fs::read(labels)?)
}
