//! IDX file ingestion (the MNIST-family container format): big-endian
//! header with a magic number and dimension sizes, followed by unsigned
//! bytes. Pixels are normalized into [0, 1] and flattened per image.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::model::LabeledSet;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parsed image file: `count` images of `rows × cols` pixels, flattened
/// row-major with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

fn check_header(path: &Path, bytes: &[u8], expected_magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() < header_len {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected: header_len,
            got: bytes.len(),
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(Error::IdxBadMagic {
            path: path.display().to_string(),
            expected: expected_magic,
            got: magic,
        });
    }
    Ok(())
}

/// Load an IDX image file (magic `0x00000803`, dimensions count/rows/cols).
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    check_header(path, &bytes, IMAGES_MAGIC, 16)?;
    let count = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            got: bytes.len(),
        });
    }
    let pixels = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Load an IDX label file (magic `0x00000801`, one dimension).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    check_header(path, &bytes, LABELS_MAGIC, 8)?;
    let count = be_u32(&bytes, 4) as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..].to_vec())
}

/// Load a matching image/label pair into a [`LabeledSet`] with flattened
/// normalized features. The label alphabet is validated to be dense in
/// `0..=max` and reported alongside the set.
pub fn ingest_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(LabeledSet, usize)> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    if classes < 2 {
        return Err(Error::invalid(
            "label file contains fewer than two distinct classes",
        ));
    }
    let set = LabeledSet::new(
        images.pixels,
        labels.into_iter().map(|l| l as usize).collect(),
        images.rows * images.cols,
    )?;
    Ok((set, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, count: u32, rows: u32, cols: u32, fill: &[u8]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        f.write_all(fill).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn parses_a_handcrafted_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.idx");
        let lbl_path = dir.path().join("lbl.idx");
        let pixels: Vec<u8> = (0..4 * 28 * 28).map(|i| (i % 256) as u8).collect();
        write_images(&img_path, 4, 28, 28, &pixels);
        write_labels(&lbl_path, &[0, 1, 2, 1]);
        let images = load_idx_images(&img_path).unwrap();
        assert_eq!((images.count, images.rows, images.cols), (4, 28, 28));
        assert!(images.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert_eq!(images.pixels[255], 1.0);
        let (set, classes) = ingest_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.feature_dim, 28 * 28);
        assert_eq!(classes, 3);
    }

    #[test]
    fn truncation_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("short.idx");
        write_images(&img_path, 4, 28, 28, &[0u8; 100]);
        match load_idx_images(&img_path) {
            Err(Error::IdxTruncated { expected, got, .. }) => {
                assert_eq!(expected, 16 + 4 * 28 * 28);
                assert_eq!(got, 116);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, [0xde, 0xad, 0xbe, 0xef, 0, 0, 0, 0]).unwrap();
        assert!(matches!(
            load_idx_labels(&path),
            Err(Error::IdxBadMagic { got: 0xdeadbeef, .. })
        ));
    }

    #[test]
    fn count_mismatch_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.idx");
        let lbl_path = dir.path().join("lbl.idx");
        write_images(&img_path, 2, 2, 2, &[0u8; 8]);
        write_labels(&lbl_path, &[0, 1, 1]);
        assert!(matches!(
            ingest_idx(&img_path, &lbl_path),
            Err(Error::IdxCountMismatch { images: 2, labels: 3 })
        ));
    }

    #[test]
    fn missing_file_reports_io_error() {
        assert!(matches!(
            load_idx_images("/nonexistent/definitely-missing.idx"),
            Err(Error::Io { .. })
        ));
    }
}
