//! IDX file loading, the distribution format of the MNIST dataset.
//!
//! Big-endian, magic `0x00000803` for 3-D unsigned-byte image tensors and
//! `0x00000801` for 1-D label vectors, dimension sizes, then the raw payload.
//! Gzip-compressed files are detected by their leading bytes and decompressed
//! transparently.

use crate::error::{Error, Result};
use crate::nn::data::{Dataset, Split};
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loads an image/label file pair into a dataset, pixel bytes scaled by 1/255.
pub fn load_idx(features_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_maybe_gzip(features_path)?;
    let label_bytes = read_maybe_gzip(labels_path)?;
    let (features, n_images, feature_dim) = parse_images(&image_bytes)?;
    let labels = parse_labels(&label_bytes)?;
    if n_images != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    Dataset::new(features, labels, feature_dim, num_classes, Split::Train)
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn u32_be(&mut self, what: &str) -> Result<u32> {
        if self.offset + 4 > self.bytes.len() {
            return Err(Error::Idx {
                offset: self.offset as u64,
                detail: format!(
                    "truncated while reading {what}: need 4 bytes, have {}",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..self.offset + 4].try_into().unwrap());
        self.offset += 4;
        Ok(v)
    }

    fn payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(Error::Idx {
                offset: self.offset as u64,
                detail: format!(
                    "truncated {what} payload: need {len} bytes, have {}",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let s = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(s)
    }
}

fn parse_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.u32_be("image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx {
            offset: 0,
            detail: format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let n = cur.u32_be("image count")? as usize;
    let rows = cur.u32_be("row count")? as usize;
    let cols = cur.u32_be("column count")? as usize;
    let feature_dim = rows * cols;
    let payload = cur.payload(n * feature_dim, "image")?;
    let features = payload.iter().map(|b| *b as f64 / 255.0).collect();
    Ok((features, n, feature_dim))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.u32_be("label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx {
            offset: 0,
            detail: format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let n = cur.u32_be("label count")? as usize;
    let payload = cur.payload(n, "label")?;
    Ok(payload.iter().map(|b| *b as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn image_file(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        out.extend_from_slice(&n.to_be_bytes());
        out.extend_from_slice(&rows.to_be_bytes());
        out.extend_from_slice(&cols.to_be_bytes());
        out.extend_from_slice(pixels);
        out
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    fn write_temp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn two_28x28_images_become_two_784_feature_rows() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i % 256) as u8).collect();
        let img = write_temp(&dir, "img", &image_file(2, 28, 28, &pixels));
        let lbl = write_temp(&dir, "lbl", &label_file(&[3, 7]));
        let data = load_idx(&img, &lbl).unwrap();
        assert_eq!(data.num_samples, 2);
        assert_eq!(data.feature_dim, 784);
        assert_eq!(data.labels, vec![3, 7]);
        assert_eq!(data.features[1], 1.0 / 255.0);
    }

    #[test]
    fn wrong_magic_errors_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = image_file(1, 2, 2, &[0; 4]);
        bad[3] = 0x02; // 0x00000802
        let img = write_temp(&dir, "img", &bad);
        let lbl = write_temp(&dir, "lbl", &label_file(&[0]));
        match load_idx(&img, &lbl).unwrap_err() {
            Error::Idx { offset, detail } => {
                assert_eq!(offset, 0);
                assert!(detail.contains("magic"), "{detail}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn count_mismatch_names_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_temp(&dir, "img", &image_file(2, 2, 2, &[0; 8]));
        let lbl = write_temp(&dir, "lbl", &label_file(&[0, 1, 2]));
        match load_idx(&img, &lbl).unwrap_err() {
            Error::IdxCountMismatch { images, labels } => {
                assert_eq!((images, labels), (2, 3));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn truncated_payload_reports_the_offset() {
        let dir = tempfile::tempdir().unwrap();
        let mut truncated = image_file(2, 2, 2, &[0; 8]);
        truncated.truncate(16 + 5); // header + 5 of 8 payload bytes
        let img = write_temp(&dir, "img", &truncated);
        let lbl = write_temp(&dir, "lbl", &label_file(&[0, 1]));
        match load_idx(&img, &lbl).unwrap_err() {
            Error::Idx { offset, detail } => {
                assert_eq!(offset, 16);
                assert!(detail.contains("truncated"), "{detail}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gzip_variants_are_transparently_decompressed() {
        let dir = tempfile::tempdir().unwrap();
        let gz = |bytes: &[u8]| {
            let mut enc =
                flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap()
        };
        let img = write_temp(&dir, "img.gz", &gz(&image_file(1, 2, 2, &[255, 0, 128, 64])));
        let lbl = write_temp(&dir, "lbl.gz", &gz(&label_file(&[9])));
        let data = load_idx(&img, &lbl).unwrap();
        assert_eq!(data.num_samples, 1);
        assert_eq!(data.features[0], 1.0);
        assert_eq!(data.labels, vec![9]);
        assert_eq!(data.num_classes, 10);
    }
}
