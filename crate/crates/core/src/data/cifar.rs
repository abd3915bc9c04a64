//! CIFAR-10 binary format: fixed 3073-byte records of one label byte followed
//! by 1024 red, 1024 green and 1024 blue bytes (each plane row-major 32x32).

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const RECORD_LEN: usize = 3073;
const PIXELS: usize = RECORD_LEN - 1;
const CLASSES: usize = 10;
const SHAPE: [usize; 3] = [3, 32, 32];

/// Parses a buffer of concatenated records into `(pixels / 255, labels)`.
/// `first_record` only offsets the record numbers reported in errors.
pub fn parse_records<T: Scalar>(bytes: &[u8], first_record: usize) -> Result<(Vec<T>, Vec<usize>)> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let offset = bytes.len() / RECORD_LEN * RECORD_LEN;
        return Err(Error::Format(format!(
            "truncated record at byte offset {offset} ({} trailing bytes, records are {RECORD_LEN} bytes)",
            bytes.len() - offset
        )));
    }
    let n = bytes.len() / RECORD_LEN;
    let scale = T::from_f64_lossy(255.0);
    let mut features = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = usize::from(rec[0]);
        if label >= CLASSES {
            return Err(Error::Format(format!(
                "record {} has label byte {label} (expected 0..=9)",
                first_record + i
            )));
        }
        labels.push(label);
        features.extend(
            rec[1..]
                .iter()
                .map(|&b| T::from_usize_lossy(usize::from(b)) / scale),
        );
    }
    Ok((features, labels))
}

/// Inverse of [`parse_records`] for one sample.
pub fn encode_record<T: Scalar>(label: usize, pixels: &[T]) -> Result<[u8; RECORD_LEN]> {
    if label >= CLASSES {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: CLASSES,
        });
    }
    if pixels.len() != PIXELS {
        return Err(Error::InvalidArgument(format!(
            "record needs {PIXELS} pixels, got {}",
            pixels.len()
        )));
    }
    let mut out = [0u8; RECORD_LEN];
    out[0] = label as u8;
    for (dst, &v) in out[1..].iter_mut().zip(pixels) {
        *dst = (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

fn load_files<T: Scalar>(dir: &Path, files: &[String], name: &str) -> Result<LabeledDataset<T>> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for file in files {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (f, l) = parse_records::<T>(&bytes, labels.len())
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        features.extend(f);
        labels.extend(l);
    }
    LabeledDataset::new(name, CLASSES, SHAPE.to_vec(), features, labels)
}

/// Loads `data_batch_1.bin` .. `data_batch_5.bin` in order.
pub fn load_cifar10<T: Scalar>(dir: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    let files: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
    load_files(dir.as_ref(), &files, "cifar10")
}

pub fn load_cifar10_test<T: Scalar>(dir: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    load_files(
        dir.as_ref(),
        &["test_batch.bin".to_string()],
        "cifar10-test",
    )
}
