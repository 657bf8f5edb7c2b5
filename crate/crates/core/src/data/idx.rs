//! MNIST (IDX) and CIFAR-10 (binary batch) readers.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;
const CIFAR_LABELS: usize = 10;

/// Reads a file, transparently inflating gzip content.
fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Loads an MNIST image/label file pair. Images become flat 784-value rows
/// scaled by 1/255.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_bytes(ip)?;
    check_magic(&images, IMAGES_MAGIC, ip)?;
    let count = be_u32(&images, 4, ip)? as usize;
    let rows = be_u32(&images, 8, ip)? as usize;
    let cols = be_u32(&images, 12, ip)? as usize;
    if rows != 28 || cols != 28 {
        return Err(Error::Format {
            path: ip.to_path_buf(),
            reason: format!("expected 28x28 images, header says {rows}x{cols}"),
        });
    }
    check_len(&images, 16 + count * rows * cols, ip)?;

    let labels = read_bytes(lp)?;
    check_magic(&labels, LABELS_MAGIC, lp)?;
    let label_count = be_u32(&labels, 4, lp)? as usize;
    check_len(&labels, 8 + label_count, lp)?;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let inputs = images[16..16 + count * rows * cols]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels = labels[8..8 + count].iter().map(|&b| usize::from(b)).collect();
    Dataset::new(vec![rows * cols], inputs, labels, 10)
}

/// Loads and concatenates CIFAR-10 binary batches into `[3, 32, 32]` samples.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::Empty("CIFAR-10 batch list"));
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "length {} is not a positive multiple of {CIFAR_RECORD}",
                    bytes.len()
                ),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = usize::from(record[0]);
            if label >= CIFAR_LABELS {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_labels: CIFAR_LABELS,
                });
            }
            labels.push(label);
            inputs.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    debug_assert_eq!(inputs.len(), labels.len() * CIFAR_PIXELS);
    Dataset::new(vec![3, 32, 32], inputs, labels, CIFAR_LABELS)
}

/// Standard file names inside an MNIST directory, preferring uncompressed files.
pub fn mnist_files(dir: &Path, split: MnistSplit) -> (PathBuf, PathBuf) {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let pick = |stem: String| {
        let plain = dir.join(&stem);
        let gz = dir.join(format!("{stem}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    };
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// `data_batch_1.bin` .. `data_batch_5.bin` or `test_batch.bin`.
pub fn cifar_files(dir: &Path, train: bool) -> Vec<PathBuf> {
    if train {
        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
    } else {
        vec![dir.join("test_batch.bin")]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IMAGES_MAGIC.to_be_bytes());
        v.extend(count.to_be_bytes());
        v.extend(28u32.to_be_bytes());
        v.extend(28u32.to_be_bytes());
        v.extend_from_slice(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn mnist_scaling_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = vec![0u8; 2 * 784];
        pixels[0] = 255;
        pixels[784 + 5] = 51;
        let ip = write(dir.path(), "img", &idx_images(2, &pixels));
        let lp = write(dir.path(), "lab", &idx_labels(&[3, 9]));
        let d = load_mnist(&ip, &lp).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input(0)[0], 1.0);
        assert_eq!(d.input(1)[5], 0.2);
        assert_eq!(d.labels(), &[3, 9]);

        // Swapped files: each has the other's magic.
        assert!(matches!(load_mnist(&lp, &lp), Err(Error::BadMagic { expected: IMAGES_MAGIC, .. })));
        assert!(matches!(load_mnist(&ip, &ip), Err(Error::BadMagic { expected: LABELS_MAGIC, .. })));

        let short = write(dir.path(), "short", &idx_images(2, &pixels[..784]));
        assert!(matches!(load_mnist(&short, &lp), Err(Error::Truncated { .. })));

        let three = write(dir.path(), "three", &idx_labels(&[1, 2, 3]));
        assert!(matches!(load_mnist(&ip, &three), Err(Error::CountMismatch { images: 2, labels: 3 })));
    }

    #[test]
    fn mnist_reads_gzip() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let gz = |bytes: &[u8]| {
            let mut e = GzEncoder::new(Vec::new(), Compression::fast());
            e.write_all(bytes).unwrap();
            e.finish().unwrap()
        };
        let ip = write(dir.path(), "i.gz", &gz(&idx_images(1, &[7u8; 784])));
        let lp = write(dir.path(), "l.gz", &gz(&idx_labels(&[4])));
        let d = load_mnist(ip, lp).unwrap();
        assert_eq!(d.labels(), &[4]);
        assert_eq!(d.input(0)[100], 7.0 / 255.0);
    }

    #[test]
    fn cifar_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[0] = 6;
        bytes[CIFAR_RECORD] = 1;
        bytes[CIFAR_RECORD + 1 + 1024] = 255; // first green pixel of record 2
        let p = write(dir.path(), "b.bin", &bytes);
        let d = load_cifar10(&[&p]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sample_shape(), &[3, 32, 32]);
        assert!(d.input(0).iter().all(|&v| v == 0.0));
        assert_eq!(d.input(1)[1024], 1.0);
        assert_eq!(d.labels(), &[6, 1]);

        bytes[0] = 10;
        let bad = write(dir.path(), "bad.bin", &bytes);
        assert!(matches!(load_cifar10(&[bad]), Err(Error::LabelOutOfRange { label: 10, .. })));

        let ragged = write(dir.path(), "ragged.bin", &bytes[..CIFAR_RECORD + 5]);
        assert!(matches!(load_cifar10(&[ragged]), Err(Error::Format { .. })));
    }
}
