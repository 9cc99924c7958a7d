//! Binary container used for clones and datasets.
//!
//! Layout:
//!
//! ```text
//! offset 0   8 bytes   magic "DSBCNTR1"
//! offset 8   u64 LE    header length h
//! offset 16  h bytes   UTF-8 JSON header
//! offset 16+h          section payloads, back to back, in header order
//! ```
//!
//! The header is `{"kind": ..., "meta": {...}, "sections": [{"name",
//! "dtype", "shape"}, ...]}` where `dtype` is `f64le` or `u32le`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{CloneComponent, CloneMode, GaussianMixtureClone, LabeledDataset};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSBCNTR1";

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F64(Vec<f64>),
    U32(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: SectionData,
}

#[derive(Serialize, Deserialize)]
struct SectionHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    sections: Vec<SectionHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Value,
    pub sections: Vec<Section>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl Container {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            sections: self
                .sections
                .iter()
                .map(|s| SectionHeader {
                    name: s.name.clone(),
                    dtype: match s.data {
                        SectionData::F64(_) => "f64le",
                        SectionData::U32(_) => "u32le",
                    }
                    .into(),
                    shape: s.shape.clone(),
                })
                .collect(),
        };
        let bytes = serde_json::to_vec(&header)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(&bytes)?;
        for s in &self.sections {
            match &s.data {
                SectionData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                SectionData::U32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| format_err(path, "file shorter than the magic number"))?;
        if &magic != MAGIC {
            return Err(format_err(path, "bad magic number"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| format_err(path, "truncated header length"))?;
        let mut hbytes = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut hbytes)
            .map_err(|_| format_err(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(&hbytes)?;
        let mut sections = Vec::with_capacity(header.sections.len());
        for sh in header.sections {
            let count: usize = sh.shape.iter().product();
            let data = match sh.dtype.as_str() {
                "f64le" => {
                    let mut buf = vec![0u8; count * 8];
                    r.read_exact(&mut buf)
                        .map_err(|_| format_err(path, format!("section {} truncated", sh.name)))?;
                    SectionData::F64(
                        buf.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                "u32le" => {
                    let mut buf = vec![0u8; count * 4];
                    r.read_exact(&mut buf)
                        .map_err(|_| format_err(path, format!("section {} truncated", sh.name)))?;
                    SectionData::U32(
                        buf.chunks_exact(4)
                            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                other => return Err(format_err(path, format!("unknown dtype {other}"))),
            };
            sections.push(Section {
                name: sh.name,
                shape: sh.shape,
                data,
            });
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            sections,
        })
    }

    fn f64s(&self, name: &str, path: &Path) -> Result<&[f64]> {
        match self.section(name).map(|s| &s.data) {
            Some(SectionData::F64(v)) => Ok(v),
            _ => Err(format_err(path, format!("missing f64 section {name}"))),
        }
    }

    fn u32s(&self, name: &str, path: &Path) -> Result<&[u32]> {
        match self.section(name).map(|s| &s.data) {
            Some(SectionData::U32(v)) => Ok(v),
            _ => Err(format_err(path, format!("missing u32 section {name}"))),
        }
    }
}

fn meta_usize(meta: &Value, key: &str, path: &Path) -> Result<usize> {
    meta.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| format_err(path, format!("header field {key} missing")))
}

fn range_json(r: Option<(f64, f64)>) -> Value {
    r.map_or(Value::Null, |(lo, hi)| json!([lo, hi]))
}

fn range_from_json(v: Option<&Value>) -> Option<(f64, f64)> {
    let a = v?.as_array()?;
    Some((a.first()?.as_f64()?, a.get(1)?.as_f64()?))
}

/// Write a dataset; `meta` is merged into the header.
pub fn save_dataset(data: &LabeledDataset, path: &Path, meta: Value) -> Result<()> {
    let mut m = json!({
        "dim": data.dim(),
        "num_classes": data.num_classes(),
        "n": data.len(),
        "pixel_range": range_json(data.pixel_range()),
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut m, meta) {
        for (k, v) in src {
            dst.entry(k).or_insert(v);
        }
    }
    Container {
        kind: "dataset".into(),
        meta: m,
        sections: vec![
            Section {
                name: "inputs".into(),
                shape: vec![data.len(), data.dim()],
                data: SectionData::F64(data.inputs().to_vec()),
            },
            Section {
                name: "labels".into(),
                shape: vec![data.len()],
                data: SectionData::U32(data.labels().iter().map(|&l| l as u32).collect()),
            },
        ],
    }
    .write(path)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let c = Container::read(path)?;
    if c.kind != "dataset" {
        return Err(format_err(path, format!("expected a dataset, found {}", c.kind)));
    }
    let dim = meta_usize(&c.meta, "dim", path)?;
    let num_classes = meta_usize(&c.meta, "num_classes", path)?;
    let inputs = c.f64s("inputs", path)?.to_vec();
    let labels = c.u32s("labels", path)?.iter().map(|&l| l as usize).collect();
    let d = LabeledDataset::new(dim, num_classes, inputs, labels)?;
    Ok(match range_from_json(c.meta.get("pixel_range")) {
        Some((lo, hi)) => d.with_pixel_range(lo, hi),
        None => d,
    })
}

/// Write a clone; `meta` (e.g. seed provenance) is merged into the header.
pub fn save_clone(clone: &GaussianMixtureClone, path: &Path, meta: Value) -> Result<()> {
    clone.validate()?;
    let d = clone.dim;
    let k = clone.components.len();
    let mut m = json!({
        "mode": clone.mode.name(),
        "dim": d,
        "num_classes": clone.num_classes,
        "components": k,
        "clip_range": range_json(clone.clip_range),
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut m, meta) {
        for (key, v) in src {
            dst.entry(key).or_insert(v);
        }
    }
    let mut sections = vec![
        Section {
            name: "labels".into(),
            shape: vec![k],
            data: SectionData::U32(clone.components.iter().map(|c| c.label as u32).collect()),
        },
        Section {
            name: "weights".into(),
            shape: vec![k],
            data: SectionData::F64(clone.components.iter().map(|c| c.weight).collect()),
        },
        Section {
            name: "means".into(),
            shape: vec![k, d],
            data: SectionData::F64(
                clone.components.iter().flat_map(|c| c.mean.iter().copied()).collect(),
            ),
        },
    ];
    match clone.mode {
        CloneMode::Isotropic => sections.push(Section {
            name: "scales".into(),
            shape: vec![k],
            data: SectionData::F64(clone.components.iter().map(|c| c.scale).collect()),
        }),
        CloneMode::Full => sections.push(Section {
            // row-major factors
            name: "factors".into(),
            shape: vec![k, d, d],
            data: SectionData::F64(
                clone
                    .components
                    .iter()
                    .flat_map(|c| {
                        let l = c.factor.as_ref().expect("validated");
                        (0..d).flat_map(move |i| (0..d).map(move |j| l[(i, j)]))
                    })
                    .collect(),
            ),
        }),
    }
    Container {
        kind: "gaussian_clone".into(),
        meta: m,
        sections,
    }
    .write(path)
}

pub fn load_clone(path: &Path) -> Result<GaussianMixtureClone> {
    let c = Container::read(path)?;
    if c.kind != "gaussian_clone" {
        return Err(format_err(path, format!("expected a clone, found {}", c.kind)));
    }
    let mode = CloneMode::parse(
        c.meta
            .get("mode")
            .and_then(Value::as_str)
            .ok_or_else(|| format_err(path, "header field mode missing"))?,
    )?;
    let d = meta_usize(&c.meta, "dim", path)?;
    let num_classes = meta_usize(&c.meta, "num_classes", path)?;
    let labels = c.u32s("labels", path)?;
    let weights = c.f64s("weights", path)?;
    let means = c.f64s("means", path)?;
    let k = labels.len();
    if weights.len() != k || means.len() != k * d {
        return Err(format_err(path, "section sizes disagree with the header"));
    }
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let mean = DVector::from_column_slice(&means[i * d..(i + 1) * d]);
        let (scale, factor) = match mode {
            CloneMode::Isotropic => (c.f64s("scales", path)?[i], None),
            CloneMode::Full => {
                let f = c.f64s("factors", path)?;
                (0.0, Some(DMatrix::from_row_slice(d, d, &f[i * d * d..(i + 1) * d * d])))
            }
        };
        components.push(CloneComponent {
            label: labels[i] as usize,
            weight: weights[i],
            mean,
            scale,
            factor,
        });
    }
    let clone = GaussianMixtureClone {
        mode,
        dim: d,
        num_classes,
        components,
        clip_range: range_from_json(c.meta.get("clip_range")),
    };
    clone.validate()?;
    Ok(clone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_gaussian_clone, sample_rectangular, Grouping, RectangularParams};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let d = sample_rectangular(&RectangularParams::default(), 17, 3)
            .unwrap()
            .with_pixel_range(-1.0, 1.0);
        save_dataset(&d, &p, json!({"seed": 3})).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), d);
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[..8], MAGIC);
    }

    #[test]
    fn clone_round_trip_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample_rectangular(&RectangularParams::default(), 200, 1).unwrap();
        for mode in [CloneMode::Isotropic, CloneMode::Full] {
            let c = fit_gaussian_clone(&d, mode, &Grouping::identity(2), Some((-5.0, 5.0))).unwrap();
            let p = dir.path().join(format!("{}.bin", mode.name()));
            save_clone(&c, &p, json!({})).unwrap();
            assert_eq!(load_clone(&p).unwrap(), c);
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"not a container").unwrap();
        assert!(matches!(Container::read(&p), Err(Error::Format { .. })));
        assert!(matches!(
            Container::read(&dir.path().join("missing")),
            Err(Error::MissingFile(_))
        ));
    }
}
