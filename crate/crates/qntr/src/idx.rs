//! IDX container parsing for image/label datasets.
//!
//! Big-endian 32-bit header fields, magic 0x00000803 for 3-D image files
//! and 0x00000801 for 1-D label files. Pixels arrive as bytes and are
//! rescaled to [0, 1]; labels become one-hot targets against the number of
//! classes observed.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic { got: u32, expected: u32 },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A parsed dataset: pixels in [0, 1] flattened row-major per image,
/// integer labels, and one-hot targets.
#[derive(Debug, Clone)]
pub struct IdxDataset {
    pub images: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u8>,
    pub one_hot: Vec<f64>,
    pub classes: usize,
    pub count: usize,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    if bytes.len() < offset + 4 {
        return Err(IdxError::TruncatedFile { needed: offset + 4, found: bytes.len() });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parses an image file and a label file, optionally truncating to the
/// first `limit` samples.
pub fn read_idx(
    image_path: &Path,
    label_path: &Path,
    limit: Option<usize>,
) -> Result<IdxDataset, IdxError> {
    let img_bytes = fs::read(image_path)?;
    let lbl_bytes = fs::read(label_path)?;
    parse_idx(&img_bytes, &lbl_bytes, limit)
}

/// Parses the two raw IDX payloads.
pub fn parse_idx(img_bytes: &[u8], lbl_bytes: &[u8], limit: Option<usize>) -> Result<IdxDataset, IdxError> {
    let magic = read_u32(img_bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic { got: magic, expected: IMAGE_MAGIC });
    }
    let n_img = read_u32(img_bytes, 4)? as usize;
    let rows = read_u32(img_bytes, 8)? as usize;
    let cols = read_u32(img_bytes, 12)? as usize;
    let pixel_count = n_img * rows * cols;
    if img_bytes.len() < 16 + pixel_count {
        return Err(IdxError::TruncatedFile { needed: 16 + pixel_count, found: img_bytes.len() });
    }

    let magic = read_u32(lbl_bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic { got: magic, expected: LABEL_MAGIC });
    }
    let n_lbl = read_u32(lbl_bytes, 4)? as usize;
    if lbl_bytes.len() < 8 + n_lbl {
        return Err(IdxError::TruncatedFile { needed: 8 + n_lbl, found: lbl_bytes.len() });
    }
    if n_img != n_lbl {
        return Err(IdxError::CountMismatch { images: n_img, labels: n_lbl });
    }

    let count = limit.map_or(n_img, |l| l.min(n_img));
    let dim = rows * cols;
    let images: Vec<f64> = img_bytes[16..16 + count * dim].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<u8> = lbl_bytes[8..8 + count].to_vec();
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut one_hot = vec![0.0; count * classes];
    for (i, &l) in labels.iter().enumerate() {
        one_hot[i * classes + l as usize] = 1.0;
    }
    Ok(IdxDataset { images, rows, cols, labels, one_hot, classes, count })
}

/// Serializes pixel bytes into the image wire format.
pub fn write_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

/// Serializes labels into the label wire format.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

impl IdxDataset {
    /// Re-serializes the dataset to the wire format; reading a file without
    /// a limit and writing it back reproduces the original bytes.
    pub fn to_idx_bytes(&self) -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = self.images.iter().map(|v| (v * 255.0).round() as u8).collect();
        (
            write_idx_images(self.count, self.rows, self.cols, &pixels),
            write_idx_labels(&self.labels),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        // 2 images of 2x2 pixels
        let img = write_idx_images(2, 2, 2, &[0, 128, 255, 64, 10, 20, 30, 40]);
        let lbl = write_idx_labels(&[1, 0]);
        (img, lbl)
    }

    #[test]
    fn parses_crafted_fixture() {
        let (img, lbl) = fixture();
        assert_eq!(&img[..16], &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2]);
        let ds = parse_idx(&img, &lbl, None).unwrap();
        assert_eq!(ds.count, 2);
        assert_eq!((ds.rows, ds.cols), (2, 2));
        assert_eq!(ds.classes, 2);
        assert_eq!(ds.images[2], 1.0, "pixel byte 255 rescales to 1.0");
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(&ds.one_hot, &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let (mut img, lbl) = fixture();
        img[3] = 0x07;
        match parse_idx(&img, &lbl, None).unwrap_err() {
            IdxError::BadMagic { expected, .. } => assert_eq!(expected, IMAGE_MAGIC),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation_and_count_mismatch() {
        let (img, lbl) = fixture();
        assert!(matches!(
            parse_idx(&img[..img.len() - 1], &lbl, None).unwrap_err(),
            IdxError::TruncatedFile { .. }
        ));
        let lbl3 = write_idx_labels(&[1, 0, 1]);
        assert!(matches!(
            parse_idx(&img, &lbl3, None).unwrap_err(),
            IdxError::CountMismatch { images: 2, labels: 3 }
        ));
    }

    #[test]
    fn limit_truncates() {
        let (img, lbl) = fixture();
        let ds = parse_idx(&img, &lbl, Some(1)).unwrap();
        assert_eq!(ds.count, 1);
        assert_eq!(ds.images.len(), 4);
        assert_eq!(ds.labels, vec![1]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (img, lbl) = fixture();
        let ds = parse_idx(&img, &lbl, None).unwrap();
        let (img2, lbl2) = ds.to_idx_bytes();
        assert_eq!(img, img2);
        assert_eq!(lbl, lbl2);
    }
}

/// Deterministic synthetic image dataset in the IDX wire format: `classes`
/// prototype patterns with per-sample intensity jitter and pixel noise.
/// Stands in for handwritten-digit data at desk scale.
pub fn synthetic_class_images(
    count: usize,
    rows: usize,
    cols: usize,
    classes: usize,
    seed: u64,
) -> (Vec<u8>, Vec<u8>) {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rows * cols;
    let prototypes: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| if rng.gen_bool(0.35) { rng.gen_range(120.0..255.0) } else { 0.0 }).collect())
        .collect();
    let mut pixels = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % classes;
        labels.push(class as u8);
        let intensity: f64 = rng.gen_range(0.7..1.0);
        for &p in &prototypes[class] {
            let noise: f64 = rng.gen_range(-20.0..20.0);
            let v = (p * intensity + noise).clamp(0.0, 255.0);
            pixels.push(v as u8);
        }
    }
    (write_idx_images(count, rows, cols, &pixels), write_idx_labels(&labels))
}
