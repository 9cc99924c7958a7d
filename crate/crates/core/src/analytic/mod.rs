//! Closed-form linear classifiers and their evaluation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{psd_cholesky, psd_floor, LabeledDataset, RectangularParams};
use crate::error::{Error, Result};
use crate::gflow::Activation;
use crate::stats::{contract_fourth_order, ClassStats, FourthOrderTensor};

/// Default perturbation scale of the non-Gaussian correction.
pub const DEFAULT_C3: f64 = 0.05;

/// Unit-norm weight vector plus bias; predicts `+1` when `w·x/√D + bias ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearClassifier {
    weight: DVector<f64>,
    bias: f64,
}

impl LinearClassifier {
    pub fn new(weight: DVector<f64>, bias: f64) -> Result<Self> {
        let norm = weight.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("classifier weight".into()));
        }
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(LinearClassifier {
            weight: weight / norm,
            bias,
        })
    }

    pub fn weight(&self) -> &DVector<f64> {
        &self.weight
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let l = preactivation(&self.weight, x) + self.bias;
        if l >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `λ = w·x / √D`.
pub fn preactivation(w: &DVector<f64>, x: &[f64]) -> f64 {
    let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    dot / (x.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub square_loss: f64,
}

/// Accuracy and mean square loss `(σ(λ) − y)²` of raw (unnormalised)
/// weights.
pub fn evaluate_weights(
    w: &DVector<f64>,
    bias: f64,
    activation: &Activation,
    data: &LabeledDataset,
) -> Result<Evaluation> {
    let ys = data.signed_labels()?;
    if w.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: data.dim(),
            got: w.len(),
        });
    }
    let mut hits = 0usize;
    let mut loss = 0.0;
    for (x, &y) in data.rows().zip(&ys) {
        let l = preactivation(w, x) + bias;
        let pred = if l >= 0.0 { 1.0 } else { -1.0 };
        if pred == y {
            hits += 1;
        }
        let e = activation.value(l) - y;
        loss += e * e;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: hits as f64 / n,
        square_loss: loss / n,
    })
}

/// Evaluate a classifier with the tanh activation.
pub fn evaluate(classifier: &LinearClassifier, data: &LabeledDataset) -> Result<Evaluation> {
    evaluate_weights(&classifier.weight, classifier.bias, &Activation::Tanh, data)
}

/// Angle in `[0, π]` between two directions (signed cosine).
pub fn alignment(w: &DVector<f64>, reference: &DVector<f64>) -> Result<f64> {
    let (a, b) = (w.norm(), reference.norm());
    if a == 0.0 || b == 0.0 {
        return Err(Error::ZeroVector);
    }
    if w.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: reference.len(),
            got: w.len(),
        });
    }
    // acos of the cosine cannot resolve angles below ~1e-8
    let (u, v) = (w / a, reference / b);
    Ok(2.0 * (&u - &v).norm().atan2((&u + &v).norm()))
}

/// Weight along the difference of the class means.
pub fn naive_classifier(stats: &ClassStats) -> Result<LinearClassifier> {
    let m = stats.mean_difference()?;
    let norm = m.norm();
    if norm < 1e-12 {
        return Err(Error::DegenerateMeans { norm });
    }
    LinearClassifier::new(m, 0.0)
}

/// Solve `K x = rhs` for a symmetric PSD `K`, repairing small eigenvalues
/// first.
pub fn solve_psd(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let l = psd_cholesky(k, psd_floor(k))?;
    let y = l
        .solve_lower_triangular(rhs)
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    l.tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::Singular("triangular solve".into()))
}

/// Fisher discriminant `κ_w⁻¹ m`.
pub fn linear_discriminant(stats: &ClassStats) -> Result<LinearClassifier> {
    let m = stats.mean_difference()?;
    if m.norm() < 1e-12 {
        return Err(Error::DegenerateMeans { norm: m.norm() });
    }
    LinearClassifier::new(solve_psd(&stats.within_class_covariance, &m)?, 0.0)
}

/// Base direction rescaled to unit Mahalanobis norm, `vᵀ κ_w v = 1`.
///
/// With this scale `w¹ + c₃ w²` is invariant under rescaling of the inputs,
/// so `c₃` is dimensionless.
pub fn whitened_base(stats: &ClassStats, base: &LinearClassifier) -> Result<DVector<f64>> {
    let v = base.weight();
    let q = v.dot(&(&stats.within_class_covariance * v));
    if !(q > 0.0) {
        return Err(Error::Singular("base direction has zero within-class variance".into()));
    }
    Ok(v / q.sqrt())
}

/// First-order correction `w² = −κ_w⁻¹ T(v, v, v)` with `T` the chosen
/// fourth-order tensor and `v` the whitened base direction.
pub fn correction_term(
    data: &LabeledDataset,
    stats: &ClassStats,
    base: &LinearClassifier,
    mode: FourthOrderTensor,
) -> Result<DVector<f64>> {
    let v = whitened_base(stats, base)?;
    let u = contract_fourth_order(data, stats, &v, mode)?;
    Ok(-solve_psd(&stats.within_class_covariance, &u)?)
}

/// `normalize(w¹ + c₃ w²)`, `w¹` the whitened base direction.
pub fn correction_classifier(
    data: &LabeledDataset,
    stats: &ClassStats,
    base: &LinearClassifier,
    mode: FourthOrderTensor,
    c3: f64,
) -> Result<LinearClassifier> {
    let w1 = whitened_base(stats, base)?;
    let w2 = correction_term(data, stats, base, mode)?;
    LinearClassifier::new(w1 + w2 * c3, 0.0)
}

/// Direction of the correction `w²` on its own.
pub fn correction_direction(
    data: &LabeledDataset,
    stats: &ClassStats,
    base: &LinearClassifier,
    mode: FourthOrderTensor,
) -> Result<LinearClassifier> {
    LinearClassifier::new(correction_term(data, stats, base, mode)?, 0.0)
}

/// The Bayes-optimal boundary `x₂ = 0` of the rectangle data.
pub fn oracle_classifier(params: &RectangularParams) -> Result<LinearClassifier> {
    params.validate()?;
    let mut w = DVector::zeros(params.dim);
    w[1] = 1.0;
    LinearClassifier::new(w, 0.0)
}
