//! IDX (MNIST-style) image and label files.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an image file (`[count, rows, cols]` unsigned bytes) and a label
/// file. Pixels are scaled to `[0, 1]`; the class count is `max label + 1`.
pub fn read_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let img = read(ipath)?;
    let lab = read(lpath)?;
    let imagic = be_u32(&img, 0, "image file")?;
    if imagic != IMAGE_MAGIC {
        return Err(Error::Format(format!("image file: bad magic {imagic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let lmagic = be_u32(&lab, 0, "label file")?;
    if lmagic != LABEL_MAGIC {
        return Err(Error::Format(format!("label file: bad magic {lmagic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let count = be_u32(&img, 4, "image file")? as usize;
    let rows = be_u32(&img, 8, "image file")? as usize;
    let cols = be_u32(&img, 12, "image file")? as usize;
    let lcount = be_u32(&lab, 4, "label file")? as usize;
    if count != lcount {
        return Err(Error::Format(format!(
            "image count {count} does not match label count {lcount}"
        )));
    }
    let pixels = &img[16..];
    if pixels.len() < count * rows * cols {
        return Err(Error::Format(format!(
            "image file: truncated, {} pixel bytes for {count} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let label_bytes = &lab[8..];
    if label_bytes.len() < count {
        return Err(Error::Format(format!("label file: truncated, {} of {count} labels", label_bytes.len())));
    }
    let features = pixels[..count * rows * cols].iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes[..count].iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, vec![1, rows, cols], classes)
}

/// Writes an IDX pair from raw bytes; `pixels` holds `labels.len()` images
/// of `rows x cols`.
pub fn write_idx(
    images: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    if pixels.len() != labels.len() * rows * cols {
        return Err(Error::Dimension {
            expected: labels.len() * rows * cols,
            got: pixels.len(),
        });
    }
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, labels.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [LABEL_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    std::fs::write(images.as_ref(), img).map_err(|e| Error::io(images.as_ref(), e))?;
    std::fs::write(labels_path.as_ref(), lab).map_err(|e| Error::io(labels_path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handcrafted_pair_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("img"), dir.path().join("lab"));
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 204]);
        std::fs::write(&i, &img).unwrap();
        std::fs::write(&l, [0, 0, 8, 1, 0, 0, 0, 2, 1, 0]).unwrap();
        let ds = read_idx(&i, &l).unwrap();
        assert_eq!(ds.feature_shape(), &[1, 2, 2]);
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.features(), &[0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 0.8]);

        write_idx(&i, &l, 2, 2, &img[16..], &[1, 0]).unwrap();
        assert_eq!(read_idx(&i, &l).unwrap(), ds);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&i, &l, 1, 1, &[7, 8, 9], &[0, 1, 2]).unwrap();
        let lab3 = std::fs::read(&l).unwrap();

        std::fs::write(&l, [0, 0, 8, 1, 0, 0, 0, 2, 0, 1]).unwrap();
        let msg = read_idx(&i, &l).unwrap_err().to_string();
        assert!(msg.contains('3') && msg.contains('2'), "{msg}");

        std::fs::write(&l, &lab3).unwrap();
        std::fs::write(&i, []).unwrap();
        assert!(read_idx(&i, &l).unwrap_err().to_string().contains("truncated"));

        std::fs::write(&i, [0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 1, 7]).unwrap();
        assert!(read_idx(&i, &l).unwrap_err().to_string().contains("truncated"));

        std::fs::write(&i, [0, 0, 8, 2, 0, 0, 0, 0]).unwrap();
        assert!(read_idx(&i, &l).unwrap_err().to_string().contains("magic"));
    }
}
