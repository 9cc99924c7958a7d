//! CIFAR-10 binary batches.
//!
//! Each record is one label byte followed by 3072 pixel bytes: the red,
//! green and blue 32×32 planes in that order, each row-major.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub const RECORD_LEN: usize = 3073;
pub const PIXELS: usize = 1024;
/// Luma weights applied to (R, G, B) for greyscale conversion.
pub const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

fn parse_into(
    path: &Path,
    bytes: &[u8],
    grayscale: bool,
    inputs: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) -> Result<()> {
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "length {} is not a multiple of the {RECORD_LEN}-byte record (truncated file?)",
                bytes.len()
            ),
        });
    }
    for (r, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("record {r} has label byte {label}"),
            });
        }
        labels.push(label);
        let px = &rec[1..];
        if grayscale {
            let [wr, wg, wb] = GRAY_WEIGHTS;
            inputs.extend((0..PIXELS).map(|i| {
                wr * px[i] as f64 + wg * px[PIXELS + i] as f64 + wb * px[2 * PIXELS + i] as f64
            }));
        } else {
            inputs.extend(px.iter().map(|&b| b as f64));
        }
    }
    Ok(())
}

/// Concatenate the records of all `paths`. Inputs keep the raw 0–255 scale.
pub fn load_cifar_binary<P: AsRef<Path>>(paths: &[P], grayscale: bool) -> Result<LabeledDataset> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        if !p.exists() {
            return Err(Error::MissingFile(p.to_path_buf()));
        }
        let bytes = std::fs::read(p)?;
        parse_into(p, &bytes, grayscale, &mut inputs, &mut labels)?;
    }
    let dim = if grayscale { PIXELS } else { 3 * PIXELS };
    Ok(LabeledDataset::new(dim, 10, inputs, labels)?.with_pixel_range(0.0, 255.0))
}

/// Serialise a colour dataset back to the binary layout. Inputs must be
/// integers in 0..=255.
pub fn to_cifar_bytes(data: &LabeledDataset) -> Result<Vec<u8>> {
    if data.dim() != 3 * PIXELS {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: 3 * PIXELS,
            got: data.dim(),
        });
    }
    let mut out = Vec::with_capacity(data.len() * RECORD_LEN);
    for (row, &label) in data.rows().zip(data.labels()) {
        if label > 255 {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: 256,
            });
        }
        out.push(label as u8);
        for &x in row {
            if !(0.0..=255.0).contains(&x) || x.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("pixel value {x} is not a byte")));
            }
            out.push(x as u8);
        }
    }
    Ok(out)
}

/// Batch files of the standard distribution. `dir` may point at the
/// extracted `cifar-10-batches-bin` folder or its parent.
pub fn cifar_split_paths(dir: &Path, train: bool) -> Vec<PathBuf> {
    let base = if dir.join("cifar-10-batches-bin").is_dir() {
        dir.join("cifar-10-batches-bin")
    } else {
        dir.to_path_buf()
    };
    if train {
        (1..=5).map(|i| base.join(format!("data_batch_{i}.bin"))).collect()
    } else {
        vec![base.join("test_batch.bin")]
    }
}

/// Colour images with the CIFAR-10 layout drawn from a fixed synthetic
/// distribution: a smooth per-class template scaled by a random per-image
/// contrast, plus uniform pixel noise, rounded to bytes. The contrast factor
/// makes the classes non-Gaussian. Meant as a stand-in when the real batches
/// are not available.
pub fn synthetic_cifar(n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut trng = stream_rng(0x5EED_C1FA, stream::INIT);
    // 8×8 blocks of 4×4 pixels
    let templates: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..64).map(|_| trng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut rng = stream_rng(seed, stream::DATA);
    let mut inputs = Vec::with_capacity(10 * n_per_class * 3 * PIXELS);
    let mut labels = Vec::with_capacity(10 * n_per_class);
    for _ in 0..n_per_class {
        for (c, t) in templates.iter().enumerate() {
            let contrast: f64 = rng.random_range(0.2..1.8);
            for ch in 0..3 {
                let tint = [1.0, 0.8, 0.6][ch];
                for i in 0..PIXELS {
                    let (r, col) = (i / 32, i % 32);
                    let v = 128.0 + 10.0 * tint * contrast * t[(r / 4) * 8 + col / 4]
                        + rng.random_range(-60.0..60.0);
                    inputs.push(v.round().clamp(0.0, 255.0));
                }
            }
            labels.push(c);
        }
    }
    Ok(LabeledDataset::new(3 * PIXELS, 10, inputs, labels)?.with_pixel_range(0.0, 255.0))
}

/// Write synthetic train and test batches under `dir` with the standard
/// file names, readable by [`load_cifar_binary`].
pub fn write_synthetic_cifar(dir: &Path, train_per_class: usize, test_per_class: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let train = synthetic_cifar(train_per_class, seed)?;
    // split the interleaved samples evenly over the five training batches
    let idx: Vec<usize> = (0..train.len()).collect();
    let per_batch = idx.len().div_ceil(5).max(1);
    let paths = cifar_split_paths(dir, true);
    for (i, p) in paths.iter().enumerate() {
        let chunk = idx.iter().skip(i * per_batch).take(per_batch).copied().collect::<Vec<_>>();
        std::fs::write(p, to_cifar_bytes(&train.subset(&chunk))?)?;
    }
    let test = synthetic_cifar(test_per_class, seed ^ 0xFFFF)?;
    std::fs::write(&cifar_split_paths(dir, false)[0], to_cifar_bytes(&test)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..3 * PIXELS).map(fill));
        r
    }

    #[test]
    fn single_record_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.bin");
        std::fs::write(&p, record(3, |_| 128)).unwrap();
        let d = load_cifar_binary(&[&p], false).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[3]);
        assert!(d.inputs().iter().all(|&x| x == 128.0));
        assert_eq!(d.pixel_range(), Some((0.0, 255.0)));
    }

    #[test]
    fn grayscale_weights() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("red.bin");
        std::fs::write(&p, record(0, |i| if i < PIXELS { 255 } else { 0 })).unwrap();
        let d = load_cifar_binary(&[&p], true).unwrap();
        assert_eq!(d.dim(), PIXELS);
        assert!(d.inputs().iter().all(|&x| (x - 76.245).abs() < 1e-9));
    }

    #[test]
    fn byte_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("two.bin");
        let mut bytes = record(7, |i| (i * 31 % 256) as u8);
        bytes.extend(record(9, |i| (i % 251) as u8));
        std::fs::write(&p, &bytes).unwrap();
        let d = load_cifar_binary(&[&p], false).unwrap();
        assert_eq!(to_cifar_bytes(&d).unwrap(), bytes);
    }

    #[test]
    fn synthetic_batches_load() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_cifar(dir.path(), 3, 2, 1).unwrap();
        let train = load_cifar_binary(&cifar_split_paths(dir.path(), true), false).unwrap();
        assert_eq!(train.len(), 30);
        assert_eq!(train.class_counts(), vec![3; 10]);
        assert_eq!(train, synthetic_cifar(3, 1).unwrap());
        let test = load_cifar_binary(&cifar_split_paths(dir.path(), false), true).unwrap();
        assert_eq!((test.len(), test.dim()), (20, PIXELS));
    }

    #[test]
    fn truncated_and_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, &record(1, |_| 0)[..100]).unwrap();
        assert!(matches!(load_cifar_binary(&[&p], false), Err(Error::Format { .. })));
        std::fs::write(&p, record(10, |_| 0)).unwrap();
        let err = load_cifar_binary(&[&p], false).unwrap_err();
        assert!(err.to_string().contains("label byte 10"));
        assert!(matches!(
            load_cifar_binary(&[dir.path().join("nope.bin")], false),
            Err(Error::MissingFile(_))
        ));
    }
}
