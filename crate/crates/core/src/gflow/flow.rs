use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analytic::{alignment, evaluate_weights, solve_psd, whitened_base, LinearClassifier};
use crate::data::{LabeledDataset, RectangularParams};
use crate::error::{Error, Result};
use crate::gflow::ActivationExpansion;
use crate::schedule::log_checkpoints;
use crate::stats::{cumulants_from_moments, MomentSet, DEFAULT_DENSE_CAP};

/// Largest order for which the series right-hand side is available.
pub const MAX_GF_ORDER: usize = 3;
/// Norm above which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// How the dynamics are truncated at order `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationScheme {
    /// Keep the terms `k ≤ K` of `Σ_k E λ^k x (γ_k − β̃_{k+1} y)`.
    Series,
    /// Replace σ by its degree-`K` Taylor polynomial and follow the exact
    /// gradient of the resulting square loss. Agrees with `Series` at
    /// `K = 1` for odd activations.
    ActivationPolynomial,
}

impl TruncationScheme {
    pub fn name(self) -> &'static str {
        match self {
            TruncationScheme::Series => "series",
            TruncationScheme::ActivationPolynomial => "activation_polynomial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(TruncationScheme::Series),
            "activation_polynomial" | "polynomial" => Ok(TruncationScheme::ActivationPolynomial),
            _ => Err(Error::Unknown {
                kind: "truncation scheme",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone)]
struct ClassMoments {
    weight: f64,
    y: f64,
    moments: MomentSet,
}

/// Expectations the flow needs: moments of the input up to order 4, both
/// plain and weighted by the label `y`.
#[derive(Debug, Clone)]
pub struct StatsSource {
    dim: usize,
    classes: Vec<ClassMoments>,
    /// E x^{⊗k}
    pooled: MomentSet,
    /// E y x^{⊗k}
    signed: MomentSet,
    /// Frozen sample as an `n × D` matrix plus its labels.
    sample: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl StatsSource {
    fn from_classes(dim: usize, classes: Vec<ClassMoments>, sample: Option<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let pooled = MomentSet::mixture(
            &classes.iter().map(|c| (c.weight, &c.moments)).collect::<Vec<_>>(),
        )?;
        let signed = MomentSet::mixture(
            &classes
                .iter()
                .map(|c| (c.weight * c.y, &c.moments))
                .collect::<Vec<_>>(),
        )?;
        Ok(StatsSource {
            dim,
            classes,
            pooled,
            signed,
            sample,
        })
    }

    /// Empirical expectations over a frozen binary sample.
    pub fn from_sample(data: &LabeledDataset) -> Result<Self> {
        let ys = data.signed_labels()?;
        let n = data.len() as f64;
        let mut classes = Vec::new();
        for label in 0..2 {
            let rows: Vec<&[f64]> = data
                .rows()
                .zip(data.labels())
                .filter(|(_, &l)| l == label)
                .map(|(r, _)| r)
                .collect();
            if rows.is_empty() {
                return Err(Error::TooFewSamples {
                    class: label,
                    count: 0,
                    needed: 1,
                });
            }
            classes.push(ClassMoments {
                weight: rows.len() as f64 / n,
                y: if label == 1 { 1.0 } else { -1.0 },
                moments: MomentSet::empirical(rows.iter().copied(), data.dim(), DEFAULT_DENSE_CAP)?,
            });
        }
        Self::from_classes(data.dim(), classes, Some((data.to_matrix(), DVector::from_vec(ys))))
    }

    /// Expectations from per-class raw moments, given as `(class weight,
    /// label y = ±1, moments)`. Useful when the moments were accumulated in
    /// chunks. The activation-polynomial scheme is unavailable (no sample).
    pub fn from_class_moments(parts: Vec<(f64, f64, MomentSet)>) -> Result<Self> {
        let dim = parts
            .first()
            .map(|p| p.2.dim())
            .ok_or_else(|| Error::InvalidParameter("no classes".into()))?;
        let mut classes = Vec::with_capacity(parts.len());
        for (weight, y, moments) in parts {
            if moments.dim() != dim {
                return Err(Error::DimensionMismatch {
                    index: classes.len(),
                    expected: dim,
                    got: moments.dim(),
                });
            }
            if !(weight >= 0.0) || (y != 1.0 && y != -1.0) {
                return Err(Error::InvalidParameter(format!(
                    "class weight {weight} must be >= 0 and label {y} must be ±1"
                )));
            }
            classes.push(ClassMoments { weight, y, moments });
        }
        Self::from_classes(dim, classes, None)
    }

    /// Exact expectations of the rectangle distribution.
    pub fn analytic_rectangular(params: &RectangularParams) -> Result<Self> {
        let classes = [(false, -1.0), (true, 1.0)]
            .into_iter()
            .map(|(pos, y)| {
                Ok(ClassMoments {
                    weight: 0.5,
                    y,
                    moments: params.class_moments(pos, DEFAULT_DENSE_CAP)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(params.dim, classes, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pooled_moments(&self) -> &MomentSet {
        &self.pooled
    }

    pub fn signed_moments(&self) -> &MomentSet {
        &self.signed
    }

    /// `m = E[x | +] − E[x | −]`.
    pub fn mean_difference(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.classes {
            m += c.moments.order(1).to_vector() * c.y;
        }
        m
    }
}

/// Truncated flow velocity `S(w)`; gradient descent moves along `−S`.
///
/// The overall factor `2/√D` of the loss gradient is absorbed into the
/// time scale.
pub fn gf_rhs(
    w: &DVector<f64>,
    expansion: &ActivationExpansion,
    source: &StatsSource,
    order: usize,
    scheme: TruncationScheme,
) -> Result<DVector<f64>> {
    if order > MAX_GF_ORDER || order > expansion.order {
        return Err(Error::InvalidParameter(format!(
            "order {order} exceeds the available expansion (max {})",
            MAX_GF_ORDER.min(expansion.order)
        )));
    }
    if w.len() != source.dim {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: source.dim,
            got: w.len(),
        });
    }
    match scheme {
        TruncationScheme::Series => Ok(series_rhs(w, expansion, source, order)),
        TruncationScheme::ActivationPolynomial => {
            let (x, ys) = source.sample.as_ref().ok_or_else(|| {
                Error::InvalidParameter("the activation-polynomial scheme needs a frozen sample".into())
            })?;
            Ok(polynomial_rhs(w, expansion, x, ys, order))
        }
    }
}

fn series_rhs(w: &DVector<f64>, e: &ActivationExpansion, source: &StatsSource, order: usize) -> DVector<f64> {
    let d = source.dim as f64;
    let v = w / d.sqrt();
    let mut out = DVector::zeros(source.dim);
    for k in 0..=order {
        // E λ^k x^i = T^{i j..}(v, .., v) with T the order-(k+1) moment
        let (g, b) = (e.gamma[k], e.beta_tilde[k + 1]);
        if g != 0.0 {
            out += source.pooled.order(k + 1).contract_tail(&v) * g;
        }
        if b != 0.0 {
            out -= source.signed.order(k + 1).contract_tail(&v) * b;
        }
    }
    out
}

fn polynomial_rhs(
    w: &DVector<f64>,
    e: &ActivationExpansion,
    x: &DMatrix<f64>,
    ys: &DVector<f64>,
    order: usize,
) -> DVector<f64> {
    let sqrt_d = (x.ncols() as f64).sqrt();
    let mut g = x * w / sqrt_d;
    g.zip_apply(ys, |l, y| {
        let (mut s, mut ds, mut p) = (0.0, 0.0, 1.0);
        for k in 0..=order {
            s += e.beta[k] * p;
            if k < order {
                ds += e.beta_tilde[k + 1] * p;
            }
            p *= *l;
        }
        *l = (s - y) * ds;
    });
    x.tr_mul(&g) / x.nrows() as f64
}

/// Reference directions tracked along a trajectory.
#[derive(Debug, Clone, Default)]
pub struct References {
    pub naive: Option<DVector<f64>>,
    pub lda: Option<DVector<f64>>,
    pub correction: Option<DVector<f64>>,
    pub oracle: Option<DVector<f64>>,
}

impl References {
    fn angles(&self, w: &DVector<f64>) -> [f64; 4] {
        [&self.naive, &self.lda, &self.correction, &self.oracle].map(|r| {
            r.as_ref()
                .and_then(|r| alignment(w, r).ok())
                .unwrap_or(f64::NAN)
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GfCheckpoint {
    pub step: usize,
    pub t: f64,
    #[serde(rename = "K")]
    pub order: usize,
    pub norm_w: f64,
    pub theta_naive: f64,
    pub theta_lda: f64,
    pub theta_corr: f64,
    pub theta_oracle: f64,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct GfConfig {
    pub order: usize,
    pub scheme: TruncationScheme,
    pub eta: f64,
    pub steps: usize,
    pub checkpoints_per_decade: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<GfCheckpoint>,
    pub final_weight: DVector<f64>,
    /// Step and norm at which the weights blew up, if they did.
    pub divergence: Option<(usize, f64)>,
}

impl Trajectory {
    pub fn last(&self) -> &GfCheckpoint {
        self.checkpoints.last().expect("trajectory has the initial checkpoint")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.checkpoints {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Forward Euler, `w ← w − η S(w)`, recording checkpoints on a log grid.
/// Stops early (and records where) if `‖w‖` exceeds [`DIVERGENCE_NORM`].
pub fn integrate_gf_recording(
    initial: &DVector<f64>,
    expansion: &ActivationExpansion,
    source: &StatsSource,
    config: &GfConfig,
    eval: &LabeledDataset,
    references: &References,
) -> Result<Trajectory> {
    if !(config.eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("step size {} must be non-negative", config.eta)));
    }
    let schedule = log_checkpoints(config.steps, config.checkpoints_per_decade);
    let mut next = 0;
    let mut w = initial.clone();
    let mut checkpoints = Vec::with_capacity(schedule.len());
    let record = |step: usize, w: &DVector<f64>| -> Result<GfCheckpoint> {
        let ev = evaluate_weights(w, 0.0, &expansion.activation, eval)?;
        let [a, b, c, d] = references.angles(w);
        Ok(GfCheckpoint {
            step,
            t: step as f64 * config.eta,
            order: config.order,
            norm_w: w.norm(),
            theta_naive: a,
            theta_lda: b,
            theta_corr: c,
            theta_oracle: d,
            accuracy: ev.accuracy,
            loss: ev.square_loss,
        })
    };
    let mut divergence = None;
    for step in 0..=config.steps {
        if schedule.get(next) == Some(&step) {
            checkpoints.push(record(step, &w)?);
            next += 1;
        }
        if step == config.steps {
            break;
        }
        let s = gf_rhs(&w, expansion, source, config.order, config.scheme)?;
        w -= s * config.eta;
        let norm = w.norm();
        if !(norm <= DIVERGENCE_NORM) {
            divergence = Some((step + 1, norm));
            break;
        }
    }
    Ok(Trajectory {
        checkpoints,
        final_weight: w,
        divergence,
    })
}

/// As [`integrate_gf_recording`] but a blow-up is an error.
pub fn integrate_gf(
    initial: &DVector<f64>,
    expansion: &ActivationExpansion,
    source: &StatsSource,
    config: &GfConfig,
    eval: &LabeledDataset,
    references: &References,
) -> Result<Trajectory> {
    let t = integrate_gf_recording(initial, expansion, source, config, eval, references)?;
    match t.divergence {
        Some((step, norm)) => Err(Error::Divergence { step, norm }),
        None => Ok(t),
    }
}

/// Fixed point of the truncated flow.
///
/// `K = 1` solves the linear equation `(γ₁ E[xxᵀ] − β̃₂ E[y xxᵀ]) v =
/// β̃₁ E[yx] − γ₀ E[x]` exactly. `K = 3` returns the perturbative solution
/// `w¹ + c₃ w²` with `w¹` the discriminant direction (whitened) and
/// `w² = −κ_w⁻¹ κ_w^{j,k,l,m} w¹_k w¹_l w¹_m`.
pub fn steady_state(
    order: usize,
    source: &StatsSource,
    expansion: &ActivationExpansion,
    c3: f64,
) -> Result<LinearClassifier> {
    match order {
        1 => {
            if expansion.order < 1 {
                return Err(Error::InvalidParameter("expansion order below 1".into()));
            }
            let a = source.pooled.order(2).to_matrix() * expansion.gamma[1]
                - source.signed.order(2).to_matrix() * expansion.beta_tilde[2];
            let rhs = source.signed.order(1).to_vector() * expansion.beta_tilde[1]
                - source.pooled.order(1).to_vector() * expansion.gamma[0];
            let v = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("second moment of the inputs".into()))?;
            LinearClassifier::new(v, 0.0)
        }
        3 => {
            let mut within = nalgebra::DMatrix::zeros(source.dim, source.dim);
            let mut cumulants = Vec::new();
            for c in &source.classes {
                let k = cumulants_from_moments(&c.moments)?;
                within += k.order(2).to_matrix();
                cumulants.push(k);
            }
            let m = source.mean_difference();
            let lda = LinearClassifier::new(solve_psd(&within, &m)?, 0.0)?;
            let stats = crate::stats::ClassStats::from_population(
                source.classes.iter().map(|c| c.moments.order(1).to_vector()).collect(),
                cumulants.iter().map(|k| k.order(2).to_matrix()).collect(),
                source.classes.iter().map(|c| c.weight).collect(),
            )?;
            let w1 = whitened_base(&stats, &lda)?;
            let mut u = DVector::zeros(source.dim);
            for k in &cumulants {
                u += k.order(4).contract_tail(&w1);
            }
            let w2 = -solve_psd(&within, &u)?;
            LinearClassifier::new(w1 + w2 * c3, 0.0)
        }
        _ => Err(Error::InvalidParameter(format!(
            "steady states are available for K = 1 and K = 3, not {order}"
        ))),
    }
}
