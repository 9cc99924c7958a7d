//! Synthetic and real datasets, Gaussian clones and their file formats.

mod cifar;
mod clone;
pub mod container;
mod dataset;
mod rectangular;

pub use cifar::{
    cifar_split_paths, load_cifar_binary, synthetic_cifar, to_cifar_bytes, write_synthetic_cifar, GRAY_WEIGHTS,
};
pub use clone::{
    fit_gaussian_clone, psd_cholesky, psd_floor, sample_clone, CloneComponent, CloneMode,
    CloneSource, GaussianMixtureClone,
};
pub use container::{load_clone, load_dataset, save_clone, save_dataset};
pub use dataset::{cifar10c_mapping, coarse_grain_labels, Grouping, LabeledDataset, CIFAR10_CLASSES};
pub use rectangular::{sample_rectangular, RectangularParams, RectangularSource};

/// Stream of labelled binary samples for online learning.
pub trait SampleSource {
    fn dim(&self) -> usize;
    /// Write one input into `out` and return its label `y = ±1`.
    fn draw(&mut self, out: &mut [f64]) -> f64;
}
