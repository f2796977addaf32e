//! IDX image container: big-endian, magic 2051 for image tensors and 2049
//! for label vectors. Pixels are unsigned bytes, scaled here to [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed image set; each image flattened row-major, values in [0, 1].
#[derive(Clone, Debug)]
pub struct IdxImages<S> {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<S>>,
}

impl<S: Scalar> IdxImages<S> {
    pub fn count(&self) -> usize {
        self.pixels.len()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            expected: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse an image file from memory.
pub fn parse_idx_images<S: Scalar>(bytes: &[u8]) -> Result<IdxImages<S>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxMagic {
            expected: IMAGE_MAGIC,
            got: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            got: bytes.len(),
        });
    }
    let scale = S::from_f64(1.0 / 255.0);
    let pixels = (0..count)
        .map(|i| {
            let start = 16 + i * rows * cols;
            bytes[start..start + rows * cols]
                .iter()
                .map(|&b| S::from_f64(b as f64) * scale)
                .collect()
        })
        .collect();
    Ok(IdxImages { rows, cols, pixels })
}

/// Parse a label file from memory.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::IdxMagic {
            expected: LABEL_MAGIC,
            got: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Serialize images back to IDX bytes. Pixel values are mapped to bytes by
/// rounding `v * 255`, which recovers the original bytes of a parsed file.
pub fn write_idx_images<S: Scalar>(images: &IdxImages<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.count() * images.rows * images.cols);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    for img in &images.pixels {
        for &v in img {
            out.push((v.as_f64() * 255.0).round() as u8);
        }
    }
    out
}

/// Downscale every image to `d x d` by non-overlapping block averaging.
/// `d` must divide both sides.
pub fn downscale_images<S: Scalar>(images: &IdxImages<S>, d: usize) -> Result<IdxImages<S>> {
    if d == 0 || images.rows % d != 0 {
        return Err(Error::IdxDownscale {
            side: images.rows,
            target: d,
        });
    }
    if images.cols % d != 0 {
        return Err(Error::IdxDownscale {
            side: images.cols,
            target: d,
        });
    }
    let br = images.rows / d;
    let bc = images.cols / d;
    let block = S::from_f64((br * bc) as f64);
    let pixels = images
        .pixels
        .iter()
        .map(|img| {
            let mut out = Vec::with_capacity(d * d);
            for by in 0..d {
                for bx in 0..d {
                    let mut acc = S::zero();
                    for y in 0..br {
                        for x in 0..bc {
                            acc += img[(by * br + y) * images.cols + (bx * bc + x)];
                        }
                    }
                    out.push(acc / block);
                }
            }
            out
        })
        .collect();
    Ok(IdxImages {
        rows: d,
        cols: d,
        pixels,
    })
}

/// Load an image file from disk, optionally downscaling.
pub fn load_idx<S: Scalar>(path: &Path, downscale: Option<usize>) -> Result<IdxImages<S>> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Config(format!("cannot read IDX file {}: {e}", path.display()))
    })?;
    let images = parse_idx_images(&bytes)?;
    match downscale {
        Some(d) => downscale_images(&images, d),
        None => Ok(images),
    }
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Config(format!("cannot read IDX file {}: {e}", path.display()))
    })?;
    parse_idx_labels(&bytes)
}
