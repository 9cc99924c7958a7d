use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Grouping, LabeledDataset, SampleSource};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::stats::{group_indices, mean_and_covariance};

/// Covariance model of a Gaussian clone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneMode {
    /// `s² I` per component, `s²` the average coordinate variance.
    Isotropic,
    /// Full covariance, stored as a lower-triangular Cholesky factor.
    Full,
}

impl CloneMode {
    pub fn name(self) -> &'static str {
        match self {
            CloneMode::Isotropic => "isotropic",
            CloneMode::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "isotropic" | "iso" => Ok(CloneMode::Isotropic),
            "full" => Ok(CloneMode::Full),
            _ => Err(Error::Unknown {
                kind: "clone mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneComponent {
    /// Label given to samples of this component.
    pub label: usize,
    /// Mixture weight (fraction of fitting samples).
    pub weight: f64,
    pub mean: DVector<f64>,
    /// Standard deviation in isotropic mode.
    pub scale: f64,
    /// Lower-triangular factor in full mode.
    pub factor: Option<DMatrix<f64>>,
}

impl CloneComponent {
    /// Covariance implied by the stored parameters.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.factor {
            Some(l) => l * l.transpose(),
            None => DMatrix::identity(self.mean.len(), self.mean.len()) * (self.scale * self.scale),
        }
    }
}

/// Mixture of Gaussians, one component per group of the fitting data.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureClone {
    pub mode: CloneMode,
    pub dim: usize,
    pub num_classes: usize,
    pub components: Vec<CloneComponent>,
    pub clip_range: Option<(f64, f64)>,
}

/// Eigenvalue floor used when projecting a covariance onto the PSD cone.
pub fn psd_floor(cov: &DMatrix<f64>) -> f64 {
    let d = cov.nrows() as f64;
    let t = cov.trace();
    // an all-zero covariance still needs a positive floor to factorise
    if t > 0.0 {
        1e-6 * t / d
    } else {
        1e-6
    }
}

/// Clip eigenvalues below `eps` and return the Cholesky factor of the
/// repaired matrix.
pub fn psd_cholesky(cov: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance entry".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(eps));
    let v = &eig.eigenvectors;
    let mut repaired = v * DMatrix::from_diagonal(&vals) * v.transpose();
    let n = repaired.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (repaired[(i, j)] + repaired[(j, i)]);
            repaired[(i, j)] = s;
            repaired[(j, i)] = s;
        }
    }
    repaired
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Singular("covariance not positive definite after clipping".into()))
}

/// Fit one Gaussian per group of `grouping`. Component `c` gets label `c`;
/// use [`GaussianMixtureClone::with_component_labels`] to relabel.
pub fn fit_gaussian_clone(
    data: &LabeledDataset,
    mode: CloneMode,
    grouping: &Grouping,
    clip_range: Option<(f64, f64)>,
) -> Result<GaussianMixtureClone> {
    if let Some((lo, hi)) = clip_range {
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(format!("clip range [{lo}, {hi}] is empty")));
        }
    }
    let groups = group_indices(data, grouping)?;
    let d = data.dim();
    let n = data.len() as f64;
    let mut components = Vec::with_capacity(groups.len());
    for (label, rows) in groups.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                class: label,
                count: rows.len(),
                needed: 2,
            });
        }
        let (mean, cov) = mean_and_covariance(data, rows);
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("covariance of class {label}")));
        }
        let (scale, factor) = match mode {
            CloneMode::Isotropic => ((cov.trace() / d as f64).sqrt(), None),
            CloneMode::Full => (0.0, Some(psd_cholesky(&cov, psd_floor(&cov))?)),
        };
        components.push(CloneComponent {
            label,
            weight: rows.len() as f64 / n,
            mean,
            scale,
            factor,
        });
    }
    Ok(GaussianMixtureClone {
        mode,
        dim: d,
        num_classes: groups.len(),
        components,
        clip_range,
    })
}

impl GaussianMixtureClone {
    /// Assign `labels[c]` to component `c`.
    pub fn with_component_labels(mut self, labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.len() != self.components.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} components",
                labels.len(),
                self.components.len()
            )));
        }
        for (c, &l) in self.components.iter_mut().zip(labels) {
            if l >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes,
                });
            }
            c.label = l;
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("clone has no components".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            let fdim = c.factor.as_ref().map_or(self.dim, |l| l.nrows());
            if c.mean.len() != self.dim || fdim != self.dim {
                return Err(Error::DimensionMismatch {
                    index: i,
                    expected: self.dim,
                    got: c.mean.len(),
                });
            }
            if c.label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: c.label,
                    num_classes: self.num_classes,
                });
            }
            if (self.mode == CloneMode::Full) != c.factor.is_some() {
                return Err(Error::InvalidParameter(format!(
                    "component {i} does not match the {} mode",
                    self.mode.name()
                )));
            }
        }
        Ok(())
    }

    fn draw_into<R: Rng + ?Sized>(&self, c: &CloneComponent, rng: &mut R, out: &mut [f64]) {
        let z: DVector<f64> = DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
        match &c.factor {
            Some(l) => {
                let x = &c.mean + l * z;
                out.copy_from_slice(x.as_slice());
            }
            None => {
                for ((o, m), zi) in out.iter_mut().zip(c.mean.iter()).zip(z.iter()) {
                    *o = m + c.scale * zi;
                }
            }
        }
        self.clip(out);
    }

    fn clip(&self, out: &mut [f64]) {
        if let Some((lo, hi)) = self.clip_range {
            for x in out {
                *x = x.clamp(lo, hi);
            }
        }
    }

    /// Online sampler drawing components in proportion to their weights.
    pub fn source(&self, seed: u64) -> Result<CloneSource<'_>> {
        self.validate()?;
        if self.num_classes != 2 {
            return Err(Error::NonBinaryLabels(self.num_classes));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let mut acc = 0.0;
        let cumulative = self
            .components
            .iter()
            .map(|c| {
                acc += c.weight / total;
                acc
            })
            .collect();
        Ok(CloneSource {
            clone: self,
            cumulative,
            rng: stream_rng(seed, stream::DATA),
        })
    }
}

/// `n_per_class` samples from every component, ordered by component then
/// draw index. Component `c` uses its own random stream.
pub fn sample_clone(clone: &GaussianMixtureClone, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    clone.validate()?;
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    let d = clone.dim;
    let mut inputs = Vec::with_capacity(clone.components.len() * n_per_class * d);
    let mut labels = Vec::with_capacity(clone.components.len() * n_per_class);
    for (ci, c) in clone.components.iter().enumerate() {
        let mut rng = stream_rng(seed, stream::CLASS + ci as u64);
        match &c.factor {
            Some(l) => {
                // one matrix product per component: columns are samples
                let z = DMatrix::from_fn(d, n_per_class, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = l * z;
                for col in x.column_iter() {
                    let start = inputs.len();
                    inputs.extend(col.iter().zip(c.mean.iter()).map(|(a, m)| a + m));
                    clone.clip(&mut inputs[start..]);
                }
            }
            None => {
                let mut row = vec![0.0; d];
                for _ in 0..n_per_class {
                    clone.draw_into(c, &mut rng, &mut row);
                    inputs.extend_from_slice(&row);
                }
            }
        }
        labels.extend(std::iter::repeat_n(c.label, n_per_class));
    }
    let data = LabeledDataset::new(d, clone.num_classes, inputs, labels)?;
    Ok(match clone.clip_range {
        Some((lo, hi)) => data.with_pixel_range(lo, hi),
        None => data,
    })
}

/// Online sampler over a binary clone.
pub struct CloneSource<'a> {
    clone: &'a GaussianMixtureClone,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SampleSource for CloneSource<'_> {
    fn dim(&self) -> usize {
        self.clone.dim
    }

    fn draw(&mut self, out: &mut [f64]) -> f64 {
        let u: f64 = self.rng.random();
        let idx = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        let c = &self.clone.components[idx];
        self.clone.draw_into(c, &mut self.rng, out);
        if c.label == 1 {
            1.0
        } else {
            -1.0
        }
    }
}
