use nalgebra::{DMatrix, DVector};

/// Single-pass, mergeable accumulator of per-coordinate central moments up
/// to order 4 and of the full co-moment matrix.
///
/// Merging is associative up to rounding; callers that need bit-stable
/// results merge partial accumulators in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
    /// Σ (x_i − x̄_i)(x_j − x̄_j), row-major, upper triangle only
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            m3: vec![0.0; dim],
            m4: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        assert_eq!(x.len(), d, "accumulator dimension");
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        // delta before the mean update, needed for the co-moment
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let dl = x[i] - self.mean[i];
            let dn = dl / n;
            let dn2 = dn * dn;
            let t1 = dl * dn * n1;
            self.m4[i] += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2[i]
                - 4.0 * dn * self.m3[i];
            self.m3[i] += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2[i];
            self.m2[i] += t1;
            self.mean[i] += dn;
            delta[i] = dl;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in i..d {
                self.comoment[i * d + j] += after * delta[j];
            }
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.dim(), other.dim(), "accumulator dimension");
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let dl = other.mean[i] - self.mean[i];
            let dl2 = dl * dl;
            let (a2, b2) = (self.m2[i], other.m2[i]);
            let (a3, b3) = (self.m3[i], other.m3[i]);
            self.m4[i] += other.m4[i]
                + dl2 * dl2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * dl2 * (na * na * b2 + nb * nb * a2) / (n * n)
                + 4.0 * dl * (na * b3 - nb * a3) / n;
            self.m3[i] += b3
                + dl2 * dl * na * nb * (na - nb) / (n * n)
                + 3.0 * dl * (na * b2 - nb * a2) / n;
            self.m2[i] += b2 + dl2 * na * nb / n;
            self.mean[i] += dl * nb / n;
            delta[i] = dl;
        }
        let f = na * nb / n;
        for i in 0..d {
            for j in i..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + f * delta[i] * delta[j];
            }
        }
        self.n += other.n;
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    /// Unbiased covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let s = 1.0 / (self.n as f64 - 1.0);
        DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.comoment[a * d + b] * s
        })
    }

    /// Per-coordinate central moments `μ_k = M_k / n` for k = 2, 3, 4.
    pub fn central_moments(&self) -> [DVector<f64>; 3] {
        let n = self.n as f64;
        [&self.m2, &self.m3, &self.m4].map(|m| DVector::from_iterator(m.len(), m.iter().map(|x| x / n)))
    }

    /// Per-coordinate fourth cumulant `μ₄ − 3 μ₂²` of the empirical
    /// distribution.
    pub fn fourth_cumulant(&self) -> DVector<f64> {
        let [m2, _, m4] = self.central_moments();
        m4.zip_map(&m2, |a, b| a - 3.0 * b * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rows() -> Vec<[f64; 3]> {
        (0..50)
            .map(|i| {
                let t = i as f64;
                [t.sin() * 3.0, (t * 0.37).cos().powi(3), (t * 1.3).sin() + t * 0.01]
            })
            .collect()
    }

    fn two_pass(rows: &[[f64; 3]]) -> (Vec<f64>, Vec<f64>, Vec<f64>, DMatrix<f64>) {
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cm = |k: i32| -> Vec<f64> {
            (0..3)
                .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(k)).sum::<f64>() / n)
                .collect()
        };
        let cov = DMatrix::from_fn(3, 3, |i, j| {
            rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)
        });
        (cm(2), cm(3), cm(4), cov)
    }

    #[test]
    fn push_matches_two_pass() {
        let rs = rows();
        let mut acc = MomentAccumulator::new(3);
        for r in &rs {
            acc.push(r);
        }
        let (m2, m3, m4, cov) = two_pass(&rs);
        let [a2, a3, a4] = acc.central_moments();
        for j in 0..3 {
            assert_relative_eq!(a2[j], m2[j], max_relative = 1e-12);
            assert_relative_eq!(a3[j], m3[j], epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(a4[j], m4[j], max_relative = 1e-12);
        }
        assert_relative_eq!(acc.covariance(), cov, epsilon = 1e-12);
    }

    #[test]
    fn merge_matches_single_stream() {
        let rs = rows();
        let mut whole = MomentAccumulator::new(3);
        rs.iter().for_each(|r| whole.push(r));
        let mut parts: Vec<MomentAccumulator> = rs
            .chunks(7)
            .map(|c| {
                let mut a = MomentAccumulator::new(3);
                c.iter().for_each(|r| a.push(r));
                a
            })
            .collect();
        let mut merged = MomentAccumulator::new(3);
        for p in parts.drain(..) {
            merged.merge(&p);
        }
        assert_eq!(merged.count(), whole.count());
        assert_relative_eq!(merged.mean(), whole.mean(), epsilon = 1e-12);
        assert_relative_eq!(merged.covariance(), whole.covariance(), epsilon = 1e-12);
        assert_relative_eq!(merged.fourth_cumulant(), whole.fourth_cumulant(), epsilon = 1e-11);
    }
}
