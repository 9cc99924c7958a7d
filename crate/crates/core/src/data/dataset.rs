use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite set of labelled input vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    pixel_range: Option<(f64, f64)>,
}

impl LabeledDataset {
    pub fn new(
        dim: usize,
        num_classes: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("dataset has no samples".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dataset dimension is zero".into()));
        }
        if inputs.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                index: inputs.len() / dim,
                expected: dim * labels.len(),
                got: inputs.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if let Some(pos) = inputs.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "input entry {} of sample {}",
                pos % dim,
                pos / dim
            )));
        }
        Ok(LabeledDataset {
            dim,
            num_classes,
            inputs,
            labels,
            pixel_range: None,
        })
    }

    /// Build from a list of rows; errors name the first row whose length
    /// differs from the first.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((index, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                index,
                expected: dim,
                got: r.len(),
            });
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        LabeledDataset::new(dim, num_classes, rows.concat(), labels)
    }

    pub fn with_pixel_range(mut self, lo: f64, hi: f64) -> Self {
        self.pixel_range = Some((lo, hi));
        self
    }

    pub fn pixel_range(&self) -> Option<(f64, f64)> {
        self.pixel_range
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.dim)
    }

    /// `n × D` matrix copy of the inputs.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.inputs)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Binary targets `y = ±1` (label 1 is the positive class).
    pub fn signed_labels(&self) -> Result<Vec<f64>> {
        if self.num_classes != 2 {
            return Err(Error::NonBinaryLabels(self.num_classes));
        }
        Ok(self
            .labels
            .iter()
            .map(|&l| if l == 1 { 1.0 } else { -1.0 })
            .collect())
    }

    /// Dataset made of the given sample indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            dim: self.dim,
            num_classes: self.num_classes,
            inputs,
            labels,
            pixel_range: self.pixel_range,
        }
    }

    /// The first `per_class` samples of every class, in dataset order.
    pub fn take_per_class(&self, per_class: usize) -> Self {
        let mut taken = vec![0; self.num_classes];
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = self.labels[i];
                taken[c] += 1;
                taken[c] <= per_class
            })
            .collect();
        self.subset(&idx)
    }

    /// Same inputs with labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(LabeledDataset {
            labels,
            num_classes,
            ..self.clone()
        })
    }

    /// Copy with labels drawn uniformly at random (the no-signal control).
    pub fn with_random_labels<R: rand::Rng>(&self, rng: &mut R) -> Self {
        let labels = (0..self.len())
            .map(|_| rng.random_range(0..self.num_classes))
            .collect();
        LabeledDataset {
            labels,
            ..self.clone()
        }
    }

    /// A random permutation of `0..len`.
    pub fn shuffled_indices<R: rand::Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx
    }

    /// Apply an affine map `x -> (x - offset) * scale` to every entry.
    pub fn affine(&self, offset: f64, scale: f64) -> Self {
        LabeledDataset {
            inputs: self.inputs.iter().map(|x| (x - offset) * scale).collect(),
            pixel_range: None,
            ..self.clone()
        }
    }
}

/// Assignment of dataset labels to groups (mixture components, or the two
/// classes of a binary problem).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    map: Vec<usize>,
    groups: usize,
}

impl Grouping {
    /// Every label is its own group.
    pub fn identity(num_labels: usize) -> Self {
        Grouping {
            map: (0..num_labels).collect(),
            groups: num_labels,
        }
    }

    /// `map[label]` is the group of `label`.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let groups = map.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; groups];
        for &g in &map {
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "group {g} has no labels mapped to it"
            )));
        }
        Ok(Grouping { map, groups })
    }

    pub fn num_groups(&self) -> usize {
        self.groups
    }

    pub fn num_labels(&self) -> usize {
        self.map.len()
    }

    pub fn group_of(&self, label: usize) -> Result<usize> {
        self.map
            .get(label)
            .copied()
            .ok_or(Error::UnmappedLabel(label))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }
}

/// Relabel every sample through `mapping` (`mapping[old] = new`).
pub fn coarse_grain_labels(data: &LabeledDataset, mapping: &Grouping) -> Result<LabeledDataset> {
    let labels = data
        .labels()
        .iter()
        .map(|&l| mapping.group_of(l))
        .collect::<Result<Vec<_>>>()?;
    data.with_labels(labels, mapping.num_groups())
}

/// CIFAR-10 class names, indexed by label.
pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// The two-superclass CIFAR10c split: animals (cat, deer, dog, frog, horse)
/// map to 0, vehicles plus bird and ship map to 1.
pub fn cifar10c_mapping() -> Grouping {
    Grouping::from_map(vec![1, 1, 1, 0, 0, 0, 0, 0, 1, 1]).expect("static mapping is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        LabeledDataset::from_rows(
            &(0..10).map(|i| vec![i as f64, -(i as f64)]).collect::<Vec<_>>(),
            (0..10).collect(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn identity_mapping_is_noop() {
        let d = toy();
        let out = coarse_grain_labels(&d, &Grouping::identity(10)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn cifar10c_relabels() {
        let d = toy();
        let out = coarse_grain_labels(&d, &cifar10c_mapping()).unwrap();
        assert_eq!(out.labels(), &[1, 1, 1, 0, 0, 0, 0, 0, 1, 1]);
        assert_eq!(out.num_classes(), 2);
    }

    #[test]
    fn unmapped_label_errors() {
        let d = toy();
        let g = Grouping::from_map(vec![0, 1, 0]).unwrap();
        assert!(matches!(
            coarse_grain_labels(&d, &g),
            Err(Error::UnmappedLabel(3))
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        let err = LabeledDataset::from_rows(&[vec![1.0, 2.0], vec![1.0]], vec![0, 1], 2);
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch { index: 1, .. })
        ));
        let err = LabeledDataset::from_rows(&[vec![1.0]], vec![3], 2);
        assert!(matches!(err, Err(Error::LabelOutOfRange { label: 3, .. })));
        let err = LabeledDataset::from_rows(&[vec![f64::NAN]], vec![0], 2);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn take_per_class_keeps_order() {
        let d = LabeledDataset::from_rows(
            &(0..6).map(|i| vec![i as f64]).collect::<Vec<_>>(),
            vec![0, 1, 0, 1, 0, 1],
            2,
        )
        .unwrap();
        let t = d.take_per_class(2);
        assert_eq!(t.inputs(), &[0.0, 1.0, 2.0, 3.0]);
    }
}
