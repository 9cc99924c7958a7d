use serde::{Deserialize, Serialize};

use crate::data::{sample_clone, GaussianMixtureClone, Grouping, LabeledDataset};
use crate::error::{Error, Result};
use crate::stats::estimate_class_stats;

/// Pass criterion for [`validate_clone`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneTolerance {
    /// Relative error bounds on the class mean and covariance.
    Relative { mean: f64, covariance: f64 },
    /// Both errors within `k` standard deviations of their sampling noise.
    Sigma(f64),
}

impl CloneTolerance {
    /// 2% / 10% for clipped clones (clipping biases the moments), 3σ
    /// otherwise.
    pub fn default_for(clone: &GaussianMixtureClone) -> Self {
        match clone.clip_range {
            Some(_) => CloneTolerance::Relative {
                mean: 0.02,
                covariance: 0.10,
            },
            None => CloneTolerance::Sigma(3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCheck {
    pub class: usize,
    /// `‖μ_clone − μ_ref‖ / ‖μ_ref‖`.
    pub mean_rel_error: f64,
    /// Frobenius `‖Σ_clone − Σ_ref‖ / ‖Σ_ref‖`.
    pub cov_rel_error: f64,
    /// Mean error in units of its Gaussian sampling noise.
    pub mean_z: f64,
    pub cov_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloneReport {
    pub tolerance: CloneTolerance,
    pub samples_per_component: usize,
    pub classes: Vec<ClassCheck>,
    pub pass: bool,
}

/// Compare per-class mean and covariance of `n_per_component` samples of
/// `clone` with those of `reference`.
pub fn validate_clone(
    clone: &GaussianMixtureClone,
    reference: &LabeledDataset,
    n_per_component: usize,
    seed: u64,
    tolerance: CloneTolerance,
) -> Result<CloneReport> {
    if clone.dim != reference.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: reference.dim(),
            got: clone.dim,
        });
    }
    if clone.num_classes != reference.num_classes() {
        return Err(Error::InvalidParameter(format!(
            "clone has {} classes, reference has {}",
            clone.num_classes,
            reference.num_classes()
        )));
    }
    let grouping = Grouping::identity(clone.num_classes);
    let sample = sample_clone(clone, n_per_component, seed)?;
    let ours = estimate_class_stats(&sample, &grouping)?;
    let theirs = estimate_class_stats(reference, &grouping)?;
    let mut classes = Vec::with_capacity(clone.num_classes);
    for c in 0..clone.num_classes {
        let (mc, mr) = (&ours.class_means[c], &theirs.class_means[c]);
        let (sc, sr) = (&ours.class_covariances[c], &theirs.class_covariances[c]);
        let inv_n = 1.0 / ours.sample_counts[c] as f64 + 1.0 / theirs.sample_counts[c] as f64;
        let dm = (mc - mr).norm();
        let ds = (sc - sr).norm();
        // Gaussian sampling noise of the two estimates combined
        let tr = sr.trace();
        let mean_sigma = (tr * inv_n).sqrt();
        let cov_sigma = ((tr * tr + sr.norm_squared()) * inv_n).sqrt();
        let check = ClassCheck {
            class: c,
            mean_rel_error: dm / mr.norm(),
            cov_rel_error: ds / sr.norm(),
            mean_z: dm / mean_sigma,
            cov_z: ds / cov_sigma,
            pass: false,
        };
        let pass = match tolerance {
            CloneTolerance::Relative { mean, covariance } => {
                check.mean_rel_error <= mean && check.cov_rel_error <= covariance
            }
            CloneTolerance::Sigma(k) => check.mean_z <= k && check.cov_z <= k,
        };
        classes.push(ClassCheck { pass, ..check });
    }
    Ok(CloneReport {
        tolerance,
        samples_per_component: n_per_component,
        pass: classes.iter().all(|c| c.pass),
        classes,
    })
}
