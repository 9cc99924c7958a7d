use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SampleSource};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::stats::{
    moments_from_cumulants, ClassStats, CumulantSet, DenseTensor, MomentSet,
};

/// Two rectangles in the (x₁, x₂) plane plus standard normal noise in the
/// remaining `D − 2` coordinates.
///
/// Class ± is uniform on `[±μ₁ − a, ±μ₁ + a] × [±μ₂ − b, ±μ₂ + b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectangularParams {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Default for RectangularParams {
    fn default() -> Self {
        RectangularParams {
            dim: 10,
            a: 2.0,
            b: 1.0,
            mu1: 1.0,
            mu2: 1.02,
        }
    }
}

impl RectangularParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be at least 2, got {}",
                self.dim
            )));
        }
        if !(self.a > 0.0 && self.b > 0.0) || !self.mu1.is_finite() || !self.mu2.is_finite() {
            return Err(Error::InvalidParameter(
                "half widths must be positive and offsets finite".into(),
            ));
        }
        if self.mu2 <= self.b {
            return Err(Error::InvalidParameter(format!(
                "mu2 = {} must exceed b = {} or the classes are not separable by x2 = 0",
                self.mu2, self.b
            )));
        }
        Ok(())
    }

    /// One draw from class + (`positive`) or class −, written into `out`.
    pub fn draw_class<R: Rng + ?Sized>(&self, rng: &mut R, positive: bool, out: &mut [f64]) {
        let s = if positive { 1.0 } else { -1.0 };
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        out[0] = s * self.mu1 + self.a * (2.0 * u1 - 1.0);
        out[1] = s * self.mu2 + self.b * (2.0 * u2 - 1.0);
        for x in &mut out[2..] {
            *x = rng.sample(StandardNormal);
        }
    }

    pub fn class_mean(&self, positive: bool) -> DVector<f64> {
        let s = if positive { 1.0 } else { -1.0 };
        let mut m = DVector::zeros(self.dim);
        m[0] = s * self.mu1;
        m[1] = s * self.mu2;
        m
    }

    /// `diag(a²/3, b²/3, 1, …, 1)`, shared by both classes.
    pub fn class_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.class_variances())
    }

    pub fn class_variances(&self) -> DVector<f64> {
        let mut v = DVector::from_element(self.dim, 1.0);
        v[0] = self.a * self.a / 3.0;
        v[1] = self.b * self.b / 3.0;
        v
    }

    /// Per-coordinate fourth cumulant of one class: `−2a⁴/15`, `−2b⁴/15`,
    /// then zeros for the Gaussian coordinates.
    pub fn class_fourth_cumulant(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v[0] = -2.0 * self.a.powi(4) / 15.0;
        v[1] = -2.0 * self.b.powi(4) / 15.0;
        v
    }

    /// Exact class statistics of the balanced mixture.
    pub fn population_stats(&self) -> Result<ClassStats> {
        self.validate()?;
        let cov = self.class_covariance();
        ClassStats::from_population(
            vec![self.class_mean(false), self.class_mean(true)],
            vec![cov.clone(), cov],
            vec![0.5, 0.5],
        )
    }

    /// Exact cumulants of one class up to order 4 (independent coordinates,
    /// so orders 3 and 4 are diagonal; order 3 vanishes by symmetry).
    pub fn class_cumulants(&self, positive: bool, cap: usize) -> Result<CumulantSet> {
        self.validate()?;
        let mut set = CumulantSet::zeros(self.dim, cap)?;
        *set.order_mut(1) = DenseTensor::from_vector(&self.class_mean(positive));
        *set.order_mut(2) = DenseTensor::from_matrix(&self.class_covariance());
        let k4 = self.class_fourth_cumulant();
        let t4 = set.order_mut(4);
        for i in 0..self.dim {
            t4.set(&[i, i, i, i], k4[i]);
        }
        Ok(set)
    }

    pub fn class_moments(&self, positive: bool, cap: usize) -> Result<MomentSet> {
        moments_from_cumulants(&self.class_cumulants(positive, cap)?)
    }

    /// Accuracy of `sign(w·x + bias)`, integrating over the noise
    /// coordinates analytically and over the rectangle numerically.
    pub fn accuracy(&self, w: &DVector<f64>, bias: f64) -> f64 {
        let sigma = w.rows(2, self.dim - 2).norm();
        // P(w·x + bias >= 0) for class s, averaged over the rectangle with a
        // midpoint rule; the integrand is smooth unless sigma = 0.
        let grid = 400;
        let class_p = |s: f64| {
            let mut acc = 0.0;
            for i in 0..grid {
                let x1 = s * self.mu1 + self.a * (2.0 * (i as f64 + 0.5) / grid as f64 - 1.0);
                for j in 0..grid {
                    let x2 = s * self.mu2 + self.b * (2.0 * (j as f64 + 0.5) / grid as f64 - 1.0);
                    let t = w[0] * x1 + w[1] * x2 + bias;
                    acc += if sigma > 0.0 {
                        0.5 * libm::erfc(-t / (sigma * std::f64::consts::SQRT_2))
                    } else if t >= 0.0 {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
            acc / (grid * grid) as f64
        };
        0.5 * class_p(1.0) + 0.5 * (1.0 - class_p(-1.0))
    }
}

/// Balanced sample: `⌈n/2⌉` points of class + (label 1) and `⌊n/2⌋` of
/// class − (label 0). Rows are ordered by label, then draw index.
pub fn sample_rectangular(params: &RectangularParams, n: usize, seed: u64) -> Result<LabeledDataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let d = params.dim;
    let counts = [n / 2, n - n / 2];
    let mut inputs = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut offset = 0;
    for (label, &count) in counts.iter().enumerate() {
        let mut rng = stream_rng(seed, stream::CLASS + label as u64);
        for _ in 0..count {
            params.draw_class(&mut rng, label == 1, &mut inputs[offset..offset + d]);
            offset += d;
            labels.push(label);
        }
    }
    LabeledDataset::new(d, 2, inputs, labels)
}

/// Online sampler: each draw picks a class with probability 1/2.
#[derive(Debug, Clone)]
pub struct RectangularSource {
    params: RectangularParams,
    rng: rand_chacha::ChaCha8Rng,
}

impl RectangularSource {
    pub fn new(params: RectangularParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(RectangularSource {
            params,
            rng: stream_rng(seed, stream::DATA),
        })
    }
}

impl SampleSource for RectangularSource {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn draw(&mut self, out: &mut [f64]) -> f64 {
        let positive = self.rng.random::<bool>();
        self.params.draw_class(&mut self.rng, positive, out);
        if positive {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::oracle_classifier;
    use crate::data::Grouping;
    use crate::stats::{estimate_class_stats, DEFAULT_DENSE_CAP};

    #[test]
    fn rejects_non_separable() {
        let p = RectangularParams {
            mu2: 0.5,
            b: 0.5,
            ..Default::default()
        };
        let err = sample_rectangular(&p, 10, 0).unwrap_err();
        assert!(err.to_string().contains("separable"));
    }

    #[test]
    fn balanced_support_and_deterministic() {
        let p = RectangularParams::default();
        let d = sample_rectangular(&p, 1001, 9).unwrap();
        assert_eq!(d.class_counts(), vec![500, 501]);
        for (x, &l) in d.rows().zip(d.labels()) {
            let s = if l == 1 { 1.0 } else { -1.0 };
            assert!((x[1] - s * p.mu2).abs() <= p.b);
            assert!((x[0] - s * p.mu1).abs() <= p.a);
        }
        assert_eq!(d, sample_rectangular(&p, 1001, 9).unwrap());
        assert_ne!(d, sample_rectangular(&p, 1001, 10).unwrap());
    }

    #[test]
    fn support_of_reference_geometry() {
        let p = RectangularParams {
            dim: 10,
            a: 2.0,
            b: 0.5,
            mu1: 0.5,
            mu2: 1.0,
        };
        let d = sample_rectangular(&p, 2000, 1).unwrap();
        for (x, &l) in d.rows().zip(d.labels()) {
            if l == 1 {
                assert!((0.5..=1.5).contains(&x[1]));
            } else {
                assert!((-1.5..=-0.5).contains(&x[1]));
            }
        }
        let oracle = oracle_classifier(&p).unwrap();
        assert_eq!(crate::analytic::evaluate(&oracle, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn analytic_moments_match_population_stats() {
        let p = RectangularParams::default();
        let s = p.population_stats().unwrap();
        let m = p.class_moments(true, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(m.order(1).to_vector(), s.class_means[1]);
        // second raw moment = covariance + mean mean^T
        let mu = &s.class_means[1];
        let expect = &s.class_covariances[1] + mu * mu.transpose();
        assert!((m.order(2).to_matrix() - expect).amax() < 1e-14);
        // E x1^4 of uniform on [mu-a, mu+a]
        let (mu1, a) = (p.mu1, p.a);
        let e4 = ((mu1 + a).powi(5) - (mu1 - a).powi(5)) / (10.0 * a);
        assert!((m.order(4).get(&[0, 0, 0, 0]) - e4).abs() < 1e-12);
    }

    #[test]
    fn sample_means_near_analytic() {
        let p = RectangularParams::default();
        let d = sample_rectangular(&p, 200_000, 3).unwrap();
        let s = estimate_class_stats(&d, &Grouping::identity(2)).unwrap();
        let var = p.class_variances();
        for (c, positive) in [(0, false), (1, true)] {
            let mean = p.class_mean(positive);
            for j in 0..p.dim {
                let se = (var[j] / 100_000.0).sqrt();
                assert!((s.class_means[c][j] - mean[j]).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn numeric_accuracy_matches_monte_carlo() {
        let p = RectangularParams::default();
        let w = DVector::from_fn(p.dim, |i, _| if i < 2 { [1.0, 2.0][i] } else { 0.1 });
        let exact = p.accuracy(&w, 0.0);
        let d = sample_rectangular(&p, 400_000, 5).unwrap();
        let hits = d
            .rows()
            .zip(d.labels())
            .filter(|(x, &l)| {
                let t: f64 = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                (t >= 0.0) == (l == 1)
            })
            .count() as f64
            / d.len() as f64;
        let se = (exact * (1.0 - exact) / d.len() as f64).sqrt();
        assert!((hits - exact).abs() < 4.0 * se, "{hits} vs {exact}");
    }

    #[test]
    fn source_yields_both_classes() {
        let mut s = RectangularSource::new(RectangularParams::default(), 1).unwrap();
        let mut x = vec![0.0; 10];
        let ys: Vec<f64> = (0..100).map(|_| s.draw(&mut x)).collect();
        assert!(ys.contains(&1.0) && ys.contains(&-1.0));
    }
}
